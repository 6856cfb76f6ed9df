#pragma once

// Reference implementations used by the tests. They share types with the
// library but none of its algorithms: no edge functions, no incremental
// rasterization, no pair halving.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gcf/backprop.hpp"
#include "gcf/field.hpp"
#include "gcf/geometry.hpp"
#include "gcf/raster.hpp"

namespace oracle {

using gcf::Vec2;
using gcf::Vec3;

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(GCF_DATA_DIR) / name; }

/// Plain pinhole projection, written out component by component.
inline Vec2 pinhole(const Vec3& v, const gcf::Pose& p, const gcf::CameraIntrinsics& cam) {
  const double x = p.rotation(0, 0) * v.x() + p.rotation(0, 1) * v.y() + p.rotation(0, 2) * v.z() + p.translation.x();
  const double y = p.rotation(1, 0) * v.x() + p.rotation(1, 1) * v.y() + p.rotation(1, 2) * v.z() + p.translation.y();
  const double z = p.rotation(2, 0) * v.x() + p.rotation(2, 1) * v.y() + p.rotation(2, 2) * v.z() + p.translation.z();
  return {cam.focal * x / z + cam.principal_point.x(), cam.focal * y / z + cam.principal_point.y()};
}

/// Rotation angle from the unit quaternion of R (Shepperd's method).
inline double quaternion_angle(const gcf::Mat3& r) {
  const double t = r.trace();
  double w = 0.0;
  Vec3 v;
  if (t > 0.0) {
    const double s = std::sqrt(t + 1.0) * 2.0;
    w = 0.25 * s;
    v = Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    w = (r(2, 1) - r(1, 2)) / s;
    v = Vec3(0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s);
  } else if (r(1, 1) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    w = (r(0, 2) - r(2, 0)) / s;
    v = Vec3((r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s);
  } else {
    const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    w = (r(1, 0) - r(0, 1)) / s;
    v = Vec3((r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s);
  }
  return 2.0 * std::atan2(v.norm(), std::abs(w));
}

/// Camera-frame triangle with the ray-cast answers for one pixel center.
struct Hit {
  bool inside = false;
  bool near_edge = false;  ///< within `margin` pixels of an edge: coverage is ambiguous
  double depth = std::numeric_limits<double>::infinity();
};

/// Point-in-triangle by same-side tests on the three edge lines, plus the
/// depth where the pixel ray meets the triangle's plane.
inline Hit cast(const std::array<Vec3, 3>& cam_pts, const gcf::CameraIntrinsics& cam, double px, double py,
                double margin = 1e-6) {
  Hit h;
  std::array<Vec2, 3> s;
  for (int k = 0; k < 3; ++k) {
    if (cam_pts[k].z() < gcf::kNearPlane) return h;
    s[k] = {cam.focal * cam_pts[k].x() / cam_pts[k].z() + cam.principal_point.x(),
            cam.focal * cam_pts[k].y() / cam_pts[k].z() + cam.principal_point.y()};
  }
  int pos = 0, neg = 0;
  for (int k = 0; k < 3; ++k) {
    const Vec2 a = s[k];
    const Vec2 b = s[(k + 1) % 3];
    const Vec2 d = b - a;
    const double len = d.norm();
    if (len == 0.0) return h;
    // Signed distance of the pixel center to the line a-b.
    const double dist = (d.x() * (py - a.y()) - d.y() * (px - a.x())) / len;
    if (std::abs(dist) < margin) h.near_edge = true;
    pos += dist > 0.0;
    neg += dist < 0.0;
  }
  h.inside = pos == 3 || neg == 3;
  if (!h.inside) return h;
  const Vec3 n = (cam_pts[1] - cam_pts[0]).cross(cam_pts[2] - cam_pts[0]);
  const Vec3 ray((px - cam.principal_point.x()) / cam.focal, (py - cam.principal_point.y()) / cam.focal, 1.0);
  h.depth = n.dot(cam_pts[0]) / n.dot(ray);
  return h;
}

inline std::array<Vec3, 3> camera_triangle(const gcf::TriangleMesh& mesh, int t, const gcf::Pose& pose) {
  const auto& tri = mesh.triangles[std::size_t(t)];
  return {pose.transform(mesh.vertices[tri[0]]), pose.transform(mesh.vertices[tri[1]]),
          pose.transform(mesh.vertices[tri[2]])};
}

/// Min-max normalized depth over the foreground, recomputed from scratch.
inline gcf::Image<double> normalized_depth(const gcf::RenderBuffers& buf) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x)
      if (buf.index_map(x, y) >= 0) {
        lo = std::min(lo, buf.depth(x, y));
        hi = std::max(hi, buf.depth(x, y));
      }
  gcf::Image<double> out(buf.width(), buf.height(), 0.0);
  if (!(hi - lo >= 1e-9)) return out;
  for (int y = 0; y < buf.height(); ++y)
    for (int x = 0; x < buf.width(); ++x)
      if (buf.index_map(x, y) >= 0) out(x, y) = (buf.depth(x, y) - lo) / (hi - lo);
  return out;
}

/// Full window scan per pixel with angles from acos and Euclidean distances.
inline gcf::Image<std::uint8_t> attention(const gcf::RenderBuffers& buf, const gcf::AttentionConfig& cfg) {
  const auto nd = oracle::normalized_depth(buf);
  const int r = cfg.window / 2;
  gcf::Image<std::uint8_t> out(buf.width(), buf.height(), 0);
  for (int y = 0; y < buf.height(); ++y) {
    for (int x = 0; x < buf.width(); ++x) {
      if (buf.index_map(x, y) < 0) continue;
      bool hit = false;
      for (int v = std::max(0, y - r); v <= std::min(buf.height() - 1, y + r) && !hit; ++v) {
        for (int u = std::max(0, x - r); u <= std::min(buf.width() - 1, x + r) && !hit; ++u) {
          if (buf.index_map(u, v) < 0) {
            hit = true;
            continue;
          }
          const double dd = std::abs(nd(x, y) - nd(u, v));
          const double c = std::clamp(buf.normal(x, y).dot(buf.normal(u, v)), -1.0, 1.0);
          const double angle = std::acos(c);
          const double dist = (buf.objcoord(x, y) - buf.objcoord(u, v)).norm();
          hit = dd > cfg.depth_threshold || angle > cfg.normal_threshold || dist > cfg.objcoord_threshold;
        }
      }
      out(x, y) = hit ? 1 : 0;
    }
  }
  return out;
}

/// Vertex gradient as a double loop: for every vertex, scan every pixel.
inline gcf::VertexGradients vertex_gradients(const gcf::CorrespondenceField& field, const gcf::AttentionMask& att,
                                             const gcf::RenderBuffers& buf, const gcf::TriangleMesh& mesh) {
  gcf::VertexGradients out;
  out.grad.assign(mesh.vertices.size(), Vec2::Zero());
  out.support.assign(mesh.vertices.size(), 0.0);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    double num_x = 0.0, num_y = 0.0, den = 0.0;
    for (int y = 0; y < buf.height(); ++y) {
      for (int x = 0; x < buf.width(); ++x) {
        const int t = buf.index_map(x, y);
        if (t < 0 || !field.valid(x, y)) continue;
        const auto& tri = mesh.triangles[std::size_t(t)];
        for (int k = 0; k < 3; ++k) {
          if (std::size_t(tri[k]) != i) continue;
          const double wgt = double(att.weight(x, y)) * buf.bary(x, y)[k];
          num_x += wgt * field.du(x, y);
          num_y += wgt * field.dv(x, y);
          den += wgt;
        }
      }
    }
    if (den > 0.0) {
      out.grad[i] = Vec2(num_x / den, num_y / den);
      out.support[i] = den;
    }
  }
  return out;
}

/// Random triangle soup in front of an identity camera: `count` triangles
/// with corners scattered around a center at depth 3..6.
inline gcf::TriangleMesh random_soup(std::mt19937_64& rng, int count, double spread = 0.8) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> verts;
  std::vector<gcf::Triangle> tris;
  for (int t = 0; t < count; ++t) {
    const Vec3 c(u(rng) * 0.8, u(rng) * 0.8, 4.5 + 1.5 * u(rng));
    for (int k = 0; k < 3; ++k) verts.push_back(c + spread * Vec3(u(rng), u(rng), 0.5 * u(rng)));
    tris.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  }
  return gcf::make_mesh(std::move(verts), std::move(tris));
}

/// Random rotation with a bounded angle.
inline gcf::Mat3 random_rotation(std::mt19937_64& rng, double max_angle = M_PI) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vec3 axis(n(rng), n(rng), n(rng));
  axis.normalize();
  return Eigen::AngleAxisd(u(rng), axis).toRotationMatrix();
}

/// Random scene for the backward-pass checks: a connected mesh (sphere-like
/// fan or soup) viewed from a random pose.
struct Scene {
  gcf::TriangleMesh mesh;
  gcf::Pose pose;
  gcf::Pose gt;
  gcf::CameraIntrinsics cam;
};

/// UV sphere with `rings` x `segments` cells (2 * rings * segments triangles at most).
inline gcf::TriangleMesh uv_sphere(int rings, int segments, double radius = 0.6) {
  std::vector<Vec3> verts;
  std::vector<gcf::Triangle> tris;
  verts.emplace_back(0.0, radius, 0.0);
  for (int i = 1; i < rings; ++i) {
    const double th = M_PI * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double ph = 2.0 * M_PI * j / segments;
      verts.emplace_back(radius * std::sin(th) * std::cos(ph), radius * std::cos(th), radius * std::sin(th) * std::sin(ph));
    }
  }
  verts.emplace_back(0.0, -radius, 0.0);
  const int bottom = int(verts.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * segments + (j % segments); };
  for (int j = 0; j < segments; ++j) tris.push_back({0, ring(1, j + 1), ring(1, j)});
  for (int i = 1; i + 1 < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      tris.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      tris.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  }
  for (int j = 0; j < segments; ++j) tris.push_back({bottom, ring(rings - 1, j), ring(rings - 1, j + 1)});
  return gcf::make_mesh(std::move(verts), std::move(tris));
}

/// Scene k of the fixed random suite (meshes of at most 100 triangles).
inline Scene random_scene(std::uint64_t k) {
  std::mt19937_64 rng(0x5eed0000ULL + k);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Scene s;
  s.cam = gcf::CameraIntrinsics{120.0 + 40.0 * u(rng), Vec2(48.0 + 4.0 * u(rng), 40.0 + 4.0 * u(rng)), 96, 80};
  switch (k % 3) {
    case 0:
      s.mesh = random_soup(rng, 5 + int(k % 16), 0.5);
      s.pose = gcf::Pose{random_rotation(rng, 0.3), Vec3(0.0, 0.0, -1.5)};
      break;
    case 1:
      s.mesh = uv_sphere(4 + int(k % 3), 6 + int(k % 5));
      s.pose = gcf::Pose{random_rotation(rng), Vec3(0.2 * u(rng), 0.2 * u(rng), 2.5 + 0.5 * u(rng))};
      break;
    default:
      s.mesh = gcf::load_obj(data_path("cube.obj"));
      s.pose = gcf::Pose{random_rotation(rng), Vec3(0.3 * u(rng), 0.3 * u(rng), 3.0 + 0.5 * u(rng))};
      break;
  }
  s.gt = gcf::apply_delta(s.pose, gcf::PoseDelta{Vec3(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng)),
                                                  Vec3(0.05 * u(rng), 0.05 * u(rng), 0.1 * u(rng))});
  return s;
}

inline bool bit_identical(const gcf::RenderBuffers& a, const gcf::RenderBuffers& b) {
  return a.depth == b.depth && a.normal == b.normal && a.objcoord == b.objcoord && a.mask == b.mask &&
         a.index_map == b.index_map && a.bary == b.bary && a.coverage == b.coverage;
}

inline const gcf::CameraIntrinsics kSuiteCam{220.0, Vec2(100.0, 90.0), 200, 180};

/// Renderer fixture suite: the mesh files under several poses plus random soups.
inline std::vector<std::pair<gcf::TriangleMesh, gcf::Pose>> fixture_suite() {
  std::vector<std::pair<gcf::TriangleMesh, gcf::Pose>> out;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* name : {"cube.obj", "tess_cube.obj", "chair.obj"}) {
    const auto mesh = gcf::load_obj(data_path(name));
    for (int i = 0; i < 4; ++i) {
      out.emplace_back(mesh, gcf::Pose{random_rotation(rng), Vec3(0.3 * u(rng), 0.3 * u(rng), 3.5 + 0.5 * u(rng))});
    }
  }
  for (int i = 0; i < 6; ++i) out.emplace_back(random_soup(rng, 20 + 15 * i), gcf::Pose::identity());
  return out;
}

}  // namespace oracle
