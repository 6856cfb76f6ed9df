#pragma once

#include <algorithm>
#include <any>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "gcf/geometry.hpp"
#include "gcf/image.hpp"
#include "gcf/raster.hpp"
#include "gcf/rng.hpp"

namespace gcf {

/// Dense 2D displacement field in pixels, defined where `valid` is set.
struct CorrespondenceField {
  Image<double> du;
  Image<double> dv;
  Image<std::uint8_t> valid;

  CorrespondenceField() = default;
  CorrespondenceField(int width, int height) : du(width, height, 0.0), dv(width, height, 0.0), valid(width, height, 0) {}

  int width() const { return du.width(); }
  int height() const { return du.height(); }
  Vec2 at(int x, int y) const { return {du(x, y), dv(x, y)}; }
  void set(int x, int y, const Vec2& d) {
    du(x, y) = d.x();
    dv(x, y) = d.y();
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid.pixels()) n += v != 0;
    return n;
  }
  bool operator==(const CorrespondenceField&) const = default;
};

/// Binary geometric attention weights.
struct AttentionMask {
  Image<std::uint8_t> weight;

  int width() const { return weight.width(); }
  int height() const { return weight.height(); }
  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto v : weight.pixels()) n += v != 0;
    return n;
  }
  bool operator==(const AttentionMask&) const = default;
};

struct AttentionConfig {
  int window = 5;                             ///< odd side length of the square window
  double depth_threshold = 0.1;               ///< normalized depth units
  double normal_threshold = deg2rad(15.0);    ///< radians
  double objcoord_threshold = 0.1;            ///< normalized model units
};

inline void validate(const AttentionConfig& cfg) {
  if (cfg.window < 1 || cfg.window % 2 == 0) throw InvalidArgument("attention window must be odd and >= 1");
  if (!(cfg.depth_threshold > 0.0) || !(cfg.normal_threshold > 0.0) || !(cfg.objcoord_threshold > 0.0)) {
    throw InvalidArgument("attention thresholds must be > 0");
  }
}

struct OracleNoiseConfig {
  double sigma_px = 0.0;  ///< std of additive Gaussian noise per displacement component
  double dropout = 0.0;   ///< probability that a valid pixel is invalidated
  std::uint64_t seed = 0;
};

inline void validate(const OracleNoiseConfig& cfg) {
  if (!(cfg.sigma_px >= 0.0)) throw InvalidArgument("oracle sigma_px must be >= 0");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw InvalidArgument("oracle dropout must be in [0,1)");
}

/// Image-space displacement of every vertex from `p_curr` to `p_gt`.
/// Vertices behind the near plane under either pose have no value.
inline std::vector<std::optional<Vec2>> vertex_displacements(const TriangleMesh& mesh, const Pose& p_curr,
                                                             const Pose& p_gt, const CameraIntrinsics& cam) {
  std::vector<std::optional<Vec2>> out(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto a = try_project(mesh.vertices[i], p_gt, cam);
    const auto b = try_project(mesh.vertices[i], p_curr, cam);
    if (a && b) out[i] = *a - *b;
  }
  return out;
}

/// Ground-truth correspondence field: per-vertex displacements interpolated
/// over the visible triangle with the render's barycentric weights.
inline CorrespondenceField render_gt_gcf(const TriangleMesh& mesh, const Pose& p_curr, const Pose& p_gt,
                                         const CameraIntrinsics& cam, const RenderBuffers& buffers) {
  if (buffers.width() != cam.width || buffers.height() != cam.height) {
    throw BufferMismatch("render buffers do not match the camera image size");
  }
  if (buffers.triangle_count != mesh.triangles.size()) {
    throw BufferMismatch("render buffers were produced from a different mesh");
  }
  const auto disp = vertex_displacements(mesh, p_curr, p_gt, cam);
  CorrespondenceField field(buffers.width(), buffers.height());
  const auto& box = buffers.coverage;
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      const int t = buffers.index_map(x, y);
      if (t < 0) continue;
      const auto& tri = mesh.triangles[std::size_t(t)];
      if (!disp[tri[0]] || !disp[tri[1]] || !disp[tri[2]]) continue;
      const Vec3& b = buffers.bary(x, y);
      field.set(x, y, b[0] * *disp[tri[0]] + b[1] * *disp[tri[1]] + b[2] * *disp[tri[2]]);
      field.valid(x, y) = 1;
    }
  }
  return field;
}

/// Marks foreground pixels that see a depth step, a normal crease, an
/// object-coordinate jump or the silhouette within the window around them.
/// The comparison is symmetric, so each unordered pixel pair is tested once
/// and both ends are marked. Only the foreground box grown by the window
/// radius can hold active pixels or take part in a comparison.
inline AttentionMask attention_mask(const RenderBuffers& buf, const AttentionConfig& cfg = {}) {
  validate(cfg);
  const int w = buf.width();
  const int h = buf.height();
  const int r = cfg.window / 2;
  AttentionMask att{Image<std::uint8_t>(w, h, 0)};
  const auto box = buf.coverage.grown(r, w, h);
  if (box.empty()) return att;

  const auto depth_img = normalized_depth(buf);
  const double cos_normal = std::cos(cfg.normal_threshold);
  const double objcoord_sq = cfg.objcoord_threshold * cfg.objcoord_threshold;
  const auto fg = buf.mask.pixels();
  const auto depth = depth_img.pixels();
  const auto normal = buf.normal.pixels();
  const auto objcoord = buf.objcoord.pixels();
  const auto weight = att.weight.pixels();

  auto differs = [&](std::size_t a, std::size_t b) {
    if (fg[a] != fg[b]) return true;
    if (std::abs(depth[a] - depth[b]) > cfg.depth_threshold) return true;
    if (normal[a].dot(normal[b]) < cos_normal) return true;
    return (objcoord[a] - objcoord[b]).squaredNorm() > objcoord_sq;
  };

  for (int oy = 0; oy <= r; ++oy) {
    for (int ox = -r; ox <= r; ++ox) {
      if (oy == 0 && ox <= 0) continue;  // (0,0) and mirrored offsets
      const std::ptrdiff_t offset = std::ptrdiff_t(oy) * w + ox;
      const int x_begin = std::max(box.x0, box.x0 - ox);
      const int x_end = std::min(box.x1, box.x1 - ox);
      for (int y = box.y0; y + oy <= box.y1; ++y) {
        for (int x = x_begin; x <= x_end; ++x) {
          const std::size_t a = std::size_t(y) * std::size_t(w) + std::size_t(x);
          const std::size_t b = std::size_t(std::ptrdiff_t(a) + offset);
          if (!(fg[a] | fg[b])) continue;
          if ((weight[a] || !fg[a]) && (weight[b] || !fg[b])) continue;
          if (differs(a, b)) {
            weight[a] |= fg[a];
            weight[b] |= fg[b];
          }
        }
      }
    }
  }
  return att;
}

/// Opaque observation (for example an RGB image) handed to predictors.
struct Observation {
  std::any payload;
};

/// Source of correspondence fields for a render.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// Throws PredictorFailure when no field can be produced.
  virtual CorrespondenceField predict(const Observation* observation, const RenderBuffers& buffers) = 0;
};

/// Predictor that knows the ground-truth pose. Returns the exact field,
/// optionally with seeded Gaussian noise and pixel dropout. Call k draws
/// from stream mix_seed(noise.seed, k), visiting valid pixels in row-major
/// order: one uniform for dropout (if enabled), then du and dv noise.
class OraclePredictor final : public Predictor {
 public:
  OraclePredictor(TriangleMesh mesh, Pose gt, CameraIntrinsics cam, OracleNoiseConfig noise = {})
      : mesh_(std::move(mesh)), gt_(std::move(gt)), cam_(std::move(cam)), noise_(noise) {
    validate(noise_);
  }

  CorrespondenceField predict(const Observation* /*observation*/, const RenderBuffers& buffers) override {
    CorrespondenceField field = [&] {
      try {
        return render_gt_gcf(mesh_, buffers.pose, gt_, cam_, buffers);
      } catch (const BufferMismatch& e) {
        throw PredictorFailure(e.what());
      }
    }();
    const std::uint64_t call = calls_++;
    if (noise_.sigma_px == 0.0 && noise_.dropout == 0.0) return field;

    Rng rng = Rng::stream(noise_.seed, call);
    const auto& box = buffers.coverage;
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        if (!field.valid(x, y)) continue;
        if (noise_.dropout > 0.0 && rng.uniform() < noise_.dropout) {
          field.valid(x, y) = 0;
          field.set(x, y, Vec2::Zero());
          continue;
        }
        if (noise_.sigma_px > 0.0) {
          field.du(x, y) += noise_.sigma_px * rng.normal();
          field.dv(x, y) += noise_.sigma_px * rng.normal();
        }
      }
    }
    return field;
  }

  const Pose& ground_truth() const { return gt_; }
  const TriangleMesh& mesh() const { return mesh_; }
  const CameraIntrinsics& camera() const { return cam_; }

 private:
  TriangleMesh mesh_;
  Pose gt_;
  CameraIntrinsics cam_;
  OracleNoiseConfig noise_;
  std::uint64_t calls_ = 0;
};

}  // namespace gcf
