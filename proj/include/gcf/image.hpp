#pragma once

#include <cassert>
#include <span>
#include <vector>

namespace gcf {

/// Inclusive pixel rectangle; empty when x0 > x1 or y0 > y1.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  bool empty() const { return x0 > x1 || y0 > y1; }
  void expand(int x, int y) {
    if (empty()) {
      *this = {x, y, x, y};
      return;
    }
    x0 = x < x0 ? x : x0;
    y0 = y < y0 ? y : y0;
    x1 = x > x1 ? x : x1;
    y1 = y > y1 ? y : y1;
  }
  void merge(const PixelBox& o) {
    if (o.empty()) return;
    expand(o.x0, o.y0);
    expand(o.x1, o.y1);
  }
  /// Grown by `margin` on every side and clipped to a w x h image.
  PixelBox grown(int margin, int w, int h) const {
    if (empty()) return *this;
    PixelBox b{x0 - margin, y0 - margin, x1 + margin, y1 + margin};
    b.x0 = b.x0 < 0 ? 0 : b.x0;
    b.y0 = b.y0 < 0 ? 0 : b.y0;
    b.x1 = b.x1 > w - 1 ? w - 1 : b.x1;
    b.y1 = b.y1 > h - 1 ? h - 1 : b.y1;
    return b;
  }
  bool operator==(const PixelBox&) const = default;
};

/// Dense row-major W x H grid of pixels.
template <class T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(std::size_t(width) * std::size_t(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int x, int y) {
    assert(contains(x, y));
    return data_[index(x, y)];
  }
  const T& operator()(int x, int y) const {
    assert(contains(x, y));
    return data_[index(x, y)];
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<T> row(int y) { return {data_.data() + index(0, y), std::size_t(width_)}; }
  std::span<const T> row(int y) const { return {data_.data() + index(0, y), std::size_t(width_)}; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  template <class U>
  bool same_shape(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const { return std::size_t(y) * std::size_t(width_) + std::size_t(x); }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

}  // namespace gcf
