#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "gcf/geometry.hpp"
#include "gcf/image.hpp"

namespace gcf {

/// Per-pixel output of the forward rasterizer. Background pixels hold
/// depth = +inf, zero normal/objcoord/bary, mask = 0 and index_map = -1.
struct RenderBuffers {
  Pose pose;
  CameraIntrinsics camera;
  std::size_t triangle_count = 0;

  Image<double> depth;
  Image<Vec3> normal;    ///< unit face normal in the camera frame
  Image<Vec3> objcoord;  ///< interpolated object coordinates
  Image<std::uint8_t> mask;
  Image<int> index_map;  ///< visible triangle index, -1 for background
  Image<Vec3> bary;      ///< perspective-correct weights of the visible triangle's corners
  /// Bounding box of the foreground. Consumers only look inside it, so
  /// hand-built buffers must call update_coverage().
  PixelBox coverage;

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
  bool foreground(int x, int y) const { return mask(x, y) != 0; }

  std::size_t covered() const {
    std::size_t n = 0;
    for (int y = coverage.y0; y <= coverage.y1; ++y)
      for (int x = coverage.x0; x <= coverage.x1; ++x) n += mask(x, y) != 0;
    return n;
  }
  /// True when no pixel is covered (an empty render is a warning, not an error).
  bool empty() const { return coverage.empty(); }

  void update_coverage() {
    coverage = {};
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (mask(x, y)) coverage.expand(x, y);
  }
};

struct RasterOptions {
  /// Row bands rendered in parallel; 0 picks the hardware concurrency.
  int workers = 1;
};

namespace detail {

inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Top-left rule for an edge a->b of a positively oriented triangle in
/// y-down image coordinates.
inline bool top_left(const Vec2& a, const Vec2& b) {
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

struct ProjectedTriangle {
  std::array<Vec2, 3> screen;       ///< positively oriented corner order
  std::array<int, 3> corner;        ///< original corner slot of each screen vertex
  std::array<double, 3> inv_depth;  ///< per screen vertex
  std::array<bool, 3> top_left;     ///< edge (k+1 -> k+2) opposite screen vertex k
  double area = 0.0;
  Vec3 normal;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  ///< inclusive pixel bounds
  bool drawable = false;
};

inline std::vector<ProjectedTriangle> setup_triangles(const TriangleMesh& mesh, const Pose& pose,
                                                      const CameraIntrinsics& cam) {
  std::vector<Vec3> cam_points(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) cam_points[i] = pose.transform(mesh.vertices[i]);

  std::vector<ProjectedTriangle> out(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    auto& pt = out[t];
    std::array<Vec2, 3> screen;
    bool in_front = true;
    for (int k = 0; k < 3; ++k) {
      const auto px = project_camera_point(cam_points[tri[k]], cam);
      if (!px) {
        in_front = false;
        break;
      }
      screen[k] = *px;
    }
    if (!in_front) continue;

    const Vec3 n = (cam_points[tri[1]] - cam_points[tri[0]]).cross(cam_points[tri[2]] - cam_points[tri[0]]);
    const double n_len = n.norm();
    double area = edge(screen[0], screen[1], screen[2]);
    if (!(n_len > 0.0) || area == 0.0 || !std::isfinite(area)) continue;
    pt.normal = n / n_len;

    pt.corner = area > 0.0 ? std::array<int, 3>{0, 1, 2} : std::array<int, 3>{0, 2, 1};
    for (int k = 0; k < 3; ++k) {
      pt.screen[k] = screen[pt.corner[k]];
      pt.inv_depth[k] = 1.0 / cam_points[tri[pt.corner[k]]].z();
    }
    pt.area = std::abs(area);
    for (int k = 0; k < 3; ++k) pt.top_left[k] = top_left(pt.screen[(k + 1) % 3], pt.screen[(k + 2) % 3]);

    const double min_x = std::min({screen[0].x(), screen[1].x(), screen[2].x()});
    const double max_x = std::max({screen[0].x(), screen[1].x(), screen[2].x()});
    const double min_y = std::min({screen[0].y(), screen[1].y(), screen[2].y()});
    const double max_y = std::max({screen[0].y(), screen[1].y(), screen[2].y()});
    // Pixel (x, y) is sampled at (x + 0.5, y + 0.5).
    pt.x0 = static_cast<int>(std::max(0.0, std::ceil(min_x - 0.5)));
    pt.x1 = static_cast<int>(std::min(double(cam.width - 1), std::floor(max_x - 0.5)));
    pt.y0 = static_cast<int>(std::max(0.0, std::ceil(min_y - 0.5)));
    pt.y1 = static_cast<int>(std::min(double(cam.height - 1), std::floor(max_y - 0.5)));
    pt.drawable = pt.x0 <= pt.x1 && pt.y0 <= pt.y1;
  }
  return out;
}

/// Depth test only; normal, objcoord and mask are resolved afterwards for
/// the surviving triangle. Returns the box of written pixels.
inline PixelBox raster_band(const std::vector<ProjectedTriangle>& tris, int row_begin, int row_end,
                            RenderBuffers& buf) {
  PixelBox written;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& pt = tris[t];
    if (!pt.drawable) continue;
    const int y_lo = std::max(pt.y0, row_begin);
    const int y_hi = std::min(pt.y1, row_end - 1);
    std::array<Vec2, 3> origin;
    std::array<Vec2, 3> dir;
    for (int k = 0; k < 3; ++k) {
      origin[k] = pt.screen[(k + 1) % 3];
      dir[k] = pt.screen[(k + 2) % 3] - origin[k];
    }
    for (int y = y_lo; y <= y_hi; ++y) {
      const double py = y + 0.5;
      std::array<double, 3> row_term;
      for (int k = 0; k < 3; ++k) row_term[k] = dir[k].x() * (py - origin[k].y());
      // Conservative span from the edge crossings; the exact test below decides.
      int x_lo = pt.x0;
      int x_hi = pt.x1;
      for (int k = 0; k < 3; ++k) {
        const double dy = dir[k].y();
        if (dy == 0.0) continue;
        const double c = std::clamp(origin[k].x() + row_term[k] / dy - 0.5, -1e9, 1e9);
        if (dy > 0.0) {
          x_hi = std::min(x_hi, static_cast<int>(std::floor(c)) + 1);
        } else {
          x_lo = std::max(x_lo, static_cast<int>(std::ceil(c)) - 1);
        }
      }
      for (int x = x_lo; x <= x_hi; ++x) {
        const double px = x + 0.5;
        // Same operations as edge(origin, origin + dir, p), hoisted per row.
        std::array<double, 3> w;
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
          w[k] = row_term[k] - dir[k].y() * (px - origin[k].x());
          inside = w[k] > 0.0 || (w[k] == 0.0 && pt.top_left[k]);
        }
        if (!inside) continue;

        // Evaluated in screen order, so the corner order of the source
        // triangle does not change the depth bits.
        std::array<double, 3> persp;
        double inv_z = 0.0;
        for (int k = 0; k < 3; ++k) {
          persp[k] = w[k] / pt.area * pt.inv_depth[k];
          inv_z += persp[k];
        }
        if (!(inv_z > 0.0)) continue;
        const double z = 1.0 / inv_z;
        if (!(z < buf.depth(x, y))) continue;

        Vec3 b;
        for (int k = 0; k < 3; ++k) b[pt.corner[k]] = persp[k] * z;
        b /= b.sum();

        buf.depth(x, y) = z;
        buf.index_map(x, y) = static_cast<int>(t);
        buf.bary(x, y) = b;
        written.expand(x, y);
      }
    }
  }
  return written;
}

inline void resolve(const TriangleMesh& mesh, const std::vector<ProjectedTriangle>& tris, RenderBuffers& buf) {
  const auto& box = buf.coverage;
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      const int t = buf.index_map(x, y);
      if (t < 0) continue;
      const auto& tri = mesh.triangles[std::size_t(t)];
      const Vec3& b = buf.bary(x, y);
      buf.normal(x, y) = tris[std::size_t(t)].normal;
      buf.objcoord(x, y) = b[0] * mesh.object_coords[tri[0]] + b[1] * mesh.object_coords[tri[1]] +
                           b[2] * mesh.object_coords[tri[2]];
      buf.mask(x, y) = 1;
    }
  }
}

}  // namespace detail

namespace detail {

/// Restores background inside `dirty`, or reallocates on a size change.
template <class T>
void reset(Image<T>& img, int w, int h, const T& value, const PixelBox& dirty, bool same_size) {
  if (!same_size) {
    img = Image<T>(w, h, value);
    return;
  }
  for (int y = dirty.y0; y <= dirty.y1; ++y) {
    auto row = img.row(y);
    std::fill(row.begin() + dirty.x0, row.begin() + dirty.x1 + 1, value);
  }
}

}  // namespace detail

/// Z-buffered rasterization at pixel centers into existing buffers, reusing
/// their storage. No backface culling; triangles with a corner in front of
/// the near plane are dropped. Ties in depth go to the lower triangle
/// index. The result does not depend on `opts.workers`. `buf` must be
/// default-constructed or hold a previous render.
inline void rasterize_into(RenderBuffers& buf, const TriangleMesh& mesh, const Pose& pose,
                           const CameraIntrinsics& cam, RasterOptions opts = {}) {
  validate(cam);
  buf.pose = pose;
  buf.camera = cam;
  buf.triangle_count = mesh.triangles.size();
  const int w = cam.width;
  const int h = cam.height;
  const bool same = buf.depth.width() == w && buf.depth.height() == h;
  const PixelBox dirty = buf.coverage;
  detail::reset(buf.depth, w, h, std::numeric_limits<double>::infinity(), dirty, same);
  detail::reset(buf.normal, w, h, Vec3::Zero().eval(), dirty, same);
  detail::reset(buf.objcoord, w, h, Vec3::Zero().eval(), dirty, same);
  detail::reset(buf.mask, w, h, std::uint8_t{0}, dirty, same);
  detail::reset(buf.index_map, w, h, -1, dirty, same);
  detail::reset(buf.bary, w, h, Vec3::Zero().eval(), dirty, same);
  buf.coverage = {};

  const auto tris = detail::setup_triangles(mesh, pose, cam);

  int workers = opts.workers > 0 ? opts.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, h);
  if (workers == 1) {
    buf.coverage = detail::raster_band(tris, 0, h, buf);
  } else {
    std::vector<PixelBox> boxes(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int b = 0; b < workers; ++b) {
      const int begin = h * b / workers;
      const int end = h * (b + 1) / workers;
      pool.emplace_back([&, b, begin, end] { boxes[std::size_t(b)] = detail::raster_band(tris, begin, end, buf); });
    }
    for (auto& th : pool) th.join();
    for (const auto& b : boxes) buf.coverage.merge(b);
  }
  detail::resolve(mesh, tris, buf);
}

inline RenderBuffers rasterize(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam,
                               RasterOptions opts = {}) {
  RenderBuffers buf;
  rasterize_into(buf, mesh, pose, cam, opts);
  return buf;
}

/// Depth rescaled to [0,1] by min-max over the foreground. A flat range
/// (max - min < 1e-9) maps every foreground pixel to 0; background is 0.
inline Image<double> normalized_depth(const RenderBuffers& buf) {
  const auto& box = buf.coverage;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      if (!buf.foreground(x, y)) continue;
      lo = std::min(lo, buf.depth(x, y));
      hi = std::max(hi, buf.depth(x, y));
    }
  }
  Image<double> out(buf.width(), buf.height(), 0.0);
  const double range = hi - lo;
  if (!(range >= 1e-9)) return out;
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      if (buf.foreground(x, y)) out(x, y) = (buf.depth(x, y) - lo) / range;
    }
  }
  return out;
}

using Channels = std::array<double, 7>;

/// [normalized depth, normal xyz, objcoord xyz] per pixel; zeros on background.
inline Image<Channels> channel_stack(const RenderBuffers& buf) {
  const auto nd = normalized_depth(buf);
  Image<Channels> out(buf.width(), buf.height(), Channels{});
  for (int y = 0; y < buf.height(); ++y) {
    for (int x = 0; x < buf.width(); ++x) {
      if (!buf.foreground(x, y)) continue;
      const auto& n = buf.normal(x, y);
      const auto& c = buf.objcoord(x, y);
      out(x, y) = {nd(x, y), n.x(), n.y(), n.z(), c.x(), c.y(), c.z()};
    }
  }
  return out;
}

}  // namespace gcf
