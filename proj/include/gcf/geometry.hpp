#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "gcf/error.hpp"
#include "gcf/rng.hpp"

namespace gcf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Triangle = std::array<int, 3>;

/// Minimum camera-frame depth (model units) for a point to be projectable.
inline constexpr double kNearPlane = 1e-4;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

/// Indexed triangle mesh. `object_coords[i]` is vertex i mapped into the
/// unit cube by per-axis min-max normalization of the vertex positions.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> object_coords;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
};

/// Per-axis min-max normalization to [0,1]^3. Flat axes map to 0.
inline std::vector<Vec3> normalized_object_coords(const std::vector<Vec3>& vertices) {
  if (vertices.empty()) return {};
  Vec3 lo = vertices.front();
  Vec3 hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 extent = hi - lo;
  std::vector<Vec3> out;
  out.reserve(vertices.size());
  for (const auto& v : vertices) {
    Vec3 c;
    for (int k = 0; k < 3; ++k) {
      c[k] = extent[k] > 0.0 ? std::clamp((v[k] - lo[k]) / extent[k], 0.0, 1.0) : 0.0;
    }
    out.push_back(c);
  }
  return out;
}

/// Throws DegenerateMesh or InvalidArgument if the mesh violates its invariants.
inline void validate(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw DegenerateMesh("mesh has no vertices");
  if (mesh.triangles.empty()) throw DegenerateMesh("mesh has no triangles");
  if (mesh.object_coords.size() != mesh.vertices.size()) {
    throw InvalidArgument("object_coords size differs from vertex count");
  }
  const auto n = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx) + " out of range");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw InvalidArgument("triangle " + std::to_string(t) + " repeats a vertex index");
    }
  }
  for (const auto& c : mesh.object_coords) {
    if ((c.array() < 0.0).any() || (c.array() > 1.0).any()) {
      throw InvalidArgument("object coordinate outside [0,1]^3");
    }
  }
}

/// Builds a validated mesh and fills in its object coordinates.
inline TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  TriangleMesh mesh;
  mesh.object_coords = normalized_object_coords(vertices);
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  validate(mesh);
  return mesh;
}

/// Parses the OBJ subset: `v x y z` and `f i j k ...` (1-based, negative
/// indices relative to the current vertex count, `i/t/n` forms accepted).
/// Polygons are fan-triangulated around their first corner. Every other
/// statement is ignored.
inline TriangleMesh parse_obj(std::istream& in, const std::string& source = "<stream>") {
  std::vector<Vec3> vertices;
  std::vector<std::vector<long>> faces;
  std::vector<int> face_lines;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string keyword;
    if (!(ls >> keyword)) continue;
    if (keyword == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) fail("malformed vertex");
      if (!v.allFinite()) fail("non-finite vertex");
      vertices.push_back(v);
    } else if (keyword == "f") {
      std::vector<long> corners;
      std::string token;
      while (ls >> token) {
        const std::string head = token.substr(0, token.find('/'));
        std::size_t used = 0;
        long idx = 0;
        try {
          idx = std::stol(head, &used);
        } catch (const std::exception&) {
          fail("malformed face index '" + token + "'");
        }
        if (used != head.size()) fail("malformed face index '" + token + "'");
        if (idx == 0) fail("face index 0 is invalid (OBJ indices are 1-based)");
        const long count = static_cast<long>(vertices.size());
        const long resolved = idx > 0 ? idx - 1 : count + idx;
        corners.push_back(resolved);
      }
      if (corners.size() < 3) fail("face with fewer than 3 corners");
      faces.push_back(std::move(corners));
      face_lines.push_back(line_no);
    }
  }

  const long count = static_cast<long>(vertices.size());
  std::vector<Triangle> triangles;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    line_no = face_lines[f];
    const auto& corners = faces[f];
    for (long c : corners) {
      if (c < 0 || c >= count) {
        fail("face index " + std::to_string(c + 1) + " out of range (" + std::to_string(count) +
             " vertices)");
      }
    }
    for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
      const Triangle tri{static_cast<int>(corners[0]), static_cast<int>(corners[k]),
                         static_cast<int>(corners[k + 1])};
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
        fail("degenerate face repeats a vertex index");
      }
      triangles.push_back(tri);
    }
  }
  if (vertices.empty()) throw DegenerateMesh(source + ": no vertices");
  if (triangles.empty()) throw DegenerateMesh(source + ": no faces");
  return make_mesh(std::move(vertices), std::move(triangles));
}

inline TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file '" + path.string() + "'");
  return parse_obj(in, path.string());
}

// ---------------------------------------------------------------------------
// Rigid poses
// ---------------------------------------------------------------------------

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// SO(3) exponential map (Rodrigues). Exactly the identity for omega = 0.
inline Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 w = skew(omega);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * w +
         ((1.0 - std::cos(theta)) / theta2) * w * w;
}

/// Axis-angle vector of a rotation matrix.
inline Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Rigid transform x_cam = rotation * x_model + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_axis_angle(const Vec3& omega, const Vec3& t) { return {so3_exp(omega), t}; }

  Vec3 transform(const Vec3& v) const { return rotation * v + translation; }

  bool operator==(const Pose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

inline double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return r.allFinite() && std::abs(r.determinant() - 1.0) <= tol && orthonormality_error(r) <= tol;
}

inline void validate(const Pose& pose) {
  if (!is_rotation(pose.rotation)) throw InvalidArgument("pose rotation is not orthonormal");
  if (!pose.translation.allFinite()) throw InvalidArgument("pose translation is not finite");
}

/// Nearest rotation in the Frobenius sense.
inline Mat3 orthonormalize(const Mat3& r) {
  const Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

/// Tangent-space pose increment: rotation by exp(omega) on the left and an
/// additive translation step.
struct PoseDelta {
  Vec3 omega = Vec3::Zero();
  Vec3 dt = Vec3::Zero();

  static PoseDelta from_vector(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }
  Vec6 as_vector() const {
    Vec6 x;
    x << omega, dt;
    return x;
  }
  PoseDelta operator-() const { return {-omega, -dt}; }
};

inline Pose apply_delta(const Pose& pose, const PoseDelta& delta) {
  Pose out;
  out.rotation = so3_exp(delta.omega) * pose.rotation;
  out.translation = pose.translation + delta.dt;
  // Drift from repeated products stays far below the tolerance for many
  // thousands of updates; only project back when it has accumulated.
  if (orthonormality_error(out.rotation) > 1e-12) out.rotation = orthonormalize(out.rotation);
  return out;
}

// ---------------------------------------------------------------------------
// Camera
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double focal = 300.0;
  Vec2 principal_point{128.0, 128.0};
  int width = 256;
  int height = 256;

  double diagonal() const { return std::hypot(double(width), double(height)); }
};

inline void validate(const CameraIntrinsics& cam) {
  if (!(cam.focal > 0.0) || !std::isfinite(cam.focal)) throw InvalidArgument("focal must be > 0");
  if (cam.width <= 0 || cam.height <= 0) throw InvalidArgument("image size must be positive");
  const auto& pp = cam.principal_point;
  if (!(pp.x() >= 0.0 && pp.x() <= cam.width && pp.y() >= 0.0 && pp.y() <= cam.height)) {
    throw InvalidArgument("principal point outside the image");
  }
}

/// Pinhole projection of a camera-frame point. Returns nullopt in front of
/// the near plane.
inline std::optional<Vec2> project_camera_point(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() >= kNearPlane)) return std::nullopt;
  return Vec2(cam.focal * p.x() / p.z() + cam.principal_point.x(),
              cam.focal * p.y() / p.z() + cam.principal_point.y());
}

inline std::optional<Vec2> try_project(const Vec3& vertex, const Pose& pose,
                                       const CameraIntrinsics& cam) {
  return project_camera_point(pose.transform(vertex), cam);
}

inline Vec2 project(const Vec3& vertex, const Pose& pose, const CameraIntrinsics& cam) {
  const Vec3 p = pose.transform(vertex);
  const auto px = project_camera_point(p, cam);
  if (!px) throw BehindCamera("point at depth " + std::to_string(p.z()) + " is behind the near plane");
  return *px;
}

/// d project(vertex, apply_delta(pose, delta)) / d delta at delta = 0.
/// Columns are ordered (omega_x, omega_y, omega_z, dt_x, dt_y, dt_z).
inline std::optional<Mat26> try_projection_jacobian(const Vec3& vertex, const Pose& pose,
                                                    const CameraIntrinsics& cam) {
  const Vec3 rotated = pose.rotation * vertex;
  const Vec3 p = rotated + pose.translation;
  if (!(p.z() >= kNearPlane)) return std::nullopt;
  const double inv_z = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << cam.focal * inv_z, 0.0, -cam.focal * p.x() * inv_z * inv_z,
            0.0, cam.focal * inv_z, -cam.focal * p.y() * inv_z * inv_z;
  // d(exp(w^) a)/dw at 0 is -a^ ; translation enters additively.
  Mat26 jac;
  jac.leftCols<3>() = -d_proj * skew(rotated);
  jac.rightCols<3>() = d_proj;
  return jac;
}

inline Mat26 projection_jacobian(const Vec3& vertex, const Pose& pose, const CameraIntrinsics& cam) {
  const auto jac = try_projection_jacobian(vertex, pose, cam);
  if (!jac) throw BehindCamera("cannot differentiate projection behind the near plane");
  return *jac;
}

// ---------------------------------------------------------------------------
// Perturbation
// ---------------------------------------------------------------------------

struct PerturbationConfig {
  double sigma_rot = deg2rad(5.0);  ///< radians, per axis of the axis-angle noise
  double sigma_trans = 0.1;         ///< relative, per translation component
  std::uint64_t seed = 0;
};

inline void validate(const PerturbationConfig& cfg) {
  if (!(cfg.sigma_rot >= 0.0) || !(cfg.sigma_trans >= 0.0)) {
    throw InvalidArgument("perturbation sigmas must be >= 0");
  }
}

/// Draws one perturbed pose. Sample `stream` uses the generator seeded with
/// mix_seed(cfg.seed, stream); draws are omega_x, omega_y, omega_z, then the
/// three translation factors.
inline Pose perturb_pose(const Pose& pose, const PerturbationConfig& cfg, std::uint64_t stream = 0) {
  validate(cfg);
  Rng rng = Rng::stream(cfg.seed, stream);
  Vec3 omega;
  for (int k = 0; k < 3; ++k) omega[k] = cfg.sigma_rot * rng.normal();
  Vec3 scale;
  for (int k = 0; k < 3; ++k) scale[k] = 1.0 + cfg.sigma_trans * rng.normal();
  Pose out;
  out.rotation = cfg.sigma_rot > 0.0 ? orthonormalize(so3_exp(omega) * pose.rotation) : pose.rotation;
  out.translation = pose.translation.cwiseProduct(scale);
  return out;
}

}  // namespace gcf
