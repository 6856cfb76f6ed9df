#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#ifdef GCF_HAVE_PNG
#include <png.h>
#endif

#include "gcf/backprop.hpp"
#include "gcf/field.hpp"
#include "gcf/raster.hpp"
#include "gcf/refine.hpp"

namespace gcf {

/// Writes `content` to `path` via a sibling temporary file and a rename, so
/// readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

using Rgb = std::array<std::uint8_t, 3>;

/// Binary PPM (P6).
inline std::string encode_ppm(const Image<Rgb>& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size() * 3);
  for (const auto& px : img.pixels()) out.append(reinterpret_cast<const char*>(px.data()), 3);
  return out;
}

#ifdef GCF_HAVE_PNG
inline constexpr bool kHavePng = true;

/// 8-bit RGB PNG.
inline std::string encode_png(const Image<Rgb>& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(std::size_t(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) std::copy_n(img(x, y).data(), 3, row.data() + std::size_t(x) * 3);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}
#else
inline constexpr bool kHavePng = false;
#endif

/// ASCII PGM (P2) with an explicit maximum value.
inline std::string encode_pgm_ascii(const Image<int>& img, int max_value) {
  std::ostringstream out;
  out << "P2\n" << img.width() << " " << img.height() << "\n" << max_value << "\n";
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out << (x ? " " : "") << img(x, y);
    out << "\n";
  }
  return out.str();
}

inline std::uint8_t to_byte(double v01) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

/// Normals mapped [-1,1] -> [0,255]; background is black.
inline Image<Rgb> normal_image(const RenderBuffers& buf) {
  Image<Rgb> img(buf.width(), buf.height(), Rgb{0, 0, 0});
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x)
      if (buf.foreground(x, y)) {
        const Vec3 c = 0.5 * (buf.normal(x, y) + Vec3::Ones());
        img(x, y) = {to_byte(c.x()), to_byte(c.y()), to_byte(c.z())};
      }
  return img;
}

/// Object coordinates mapped [0,1] -> [0,255].
inline Image<Rgb> objcoord_image(const RenderBuffers& buf) {
  Image<Rgb> img(buf.width(), buf.height(), Rgb{0, 0, 0});
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x)
      if (buf.foreground(x, y)) {
        const Vec3& c = buf.objcoord(x, y);
        img(x, y) = {to_byte(c.x()), to_byte(c.y()), to_byte(c.z())};
      }
  return img;
}

/// Normalized depth quantized to 0..255 (near = 0); background = 255.
inline Image<int> depth_levels(const RenderBuffers& buf) {
  const auto nd = normalized_depth(buf);
  Image<int> img(buf.width(), buf.height(), 255);
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x)
      if (buf.foreground(x, y)) img(x, y) = std::min(254, static_cast<int>(std::lround(nd(x, y) * 254.0)));
  return img;
}

/// Triangle index + 1 per pixel (0 = background).
inline Image<int> index_levels(const RenderBuffers& buf) {
  Image<int> img(buf.width(), buf.height(), 0);
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x) img(x, y) = buf.index_map(x, y) + 1;
  return img;
}

inline Image<int> binary_levels(const Image<std::uint8_t>& mask) {
  Image<int> img(mask.width(), mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) img(x, y) = mask(x, y) ? 1 : 0;
  return img;
}

inline Rgb hsv_to_rgb(double hue, double sat, double val) {
  const double h = std::fmod(std::fmod(hue, 1.0) + 1.0, 1.0) * 6.0;
  const int sector = std::min(5, static_cast<int>(h));
  const double f = h - sector;
  const double p = val * (1.0 - sat);
  const double q = val * (1.0 - sat * f);
  const double t = val * (1.0 - sat * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  return {to_byte(r), to_byte(g), to_byte(b)};
}

/// Color-wheel rendering of a displacement field: hue encodes direction,
/// saturation encodes |d| / max_magnitude. Invalid pixels are black. When
/// `attention` is given, the boundary of the attended region is drawn white.
inline Image<Rgb> field_image(const CorrespondenceField& field, double max_magnitude,
                              const AttentionMask* attention = nullptr) {
  Image<Rgb> img(field.width(), field.height(), Rgb{0, 0, 0});
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      if (!field.valid(x, y)) continue;
      const Vec2 d = field.at(x, y);
      const double hue = (std::atan2(d.y(), d.x()) + std::numbers::pi) / (2.0 * std::numbers::pi);
      const double sat = max_magnitude > 0.0 ? std::min(1.0, d.norm() / max_magnitude) : 0.0;
      img(x, y) = hsv_to_rgb(hue, sat, 1.0);
    }
  }
  if (attention) {
    const auto& w = attention->weight;
    for (int y = 0; y < w.height(); ++y) {
      for (int x = 0; x < w.width(); ++x) {
        if (!w(x, y)) continue;
        bool boundary = false;
        for (int dy = -1; dy <= 1 && !boundary; ++dy)
          for (int dx = -1; dx <= 1 && !boundary; ++dx)
            boundary = !w.contains(x + dx, y + dy) || !w(x + dx, y + dy);
        if (boundary) img(x, y) = {255, 255, 255};
      }
    }
  }
  return img;
}

/// Shortest decimal form that round-trips the value; "nan" / "inf" for
/// non-finite values.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

/// iteration,loss,rot_err,trans_err
inline std::string trace_csv(const RefinementResult& result) {
  std::string out = "iteration,loss,rot_err,trans_err\n";
  for (const auto& e : result.trace) {
    out += std::to_string(e.iteration) + "," + format_number(e.loss) + "," + format_number(e.rot_err) + "," +
           format_number(e.trans_err) + "\n";
  }
  return out;
}

/// index,gx,gy,support
inline std::string vertex_gradients_csv(const VertexGradients& vg) {
  std::string out = "index,gx,gy,support\n";
  for (std::size_t i = 0; i < vg.size(); ++i) {
    out += std::to_string(i) + "," + format_number(vg.grad[i].x()) + "," + format_number(vg.grad[i].y()) + "," +
           format_number(vg.support[i]) + "\n";
  }
  return out;
}

}  // namespace gcf
