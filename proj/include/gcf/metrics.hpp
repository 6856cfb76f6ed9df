#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "gcf/geometry.hpp"

namespace gcf {

/// Normalizers for the pose and projection distances.
struct MetricContext {
  double d_bbox = 0.0;     ///< diagonal of the GT 2D bounding box, pixels
  double d_img = 0.0;      ///< image diagonal, pixels
  double t_gt_norm = 0.0;  ///< |t_gt|
};

inline void validate(const MetricContext& ctx) {
  if (!(ctx.d_bbox > 0.0) || !(ctx.d_img > 0.0) || !(ctx.t_gt_norm > 0.0)) {
    throw InvalidArgument("metric context entries must be > 0");
  }
}

struct SampleErrors {
  double e_R = 0.0;   ///< radians
  double e_t = 0.0;
  double e_Rt = 0.0;
  double e_P = 0.0;
};

/// Geodesic angle between two rotations, |log(R_gt^T R_pred)|_F / sqrt(2).
///
/// Evaluated as atan2(|axis|, (trace - 1) / 2) rather than a bare arccos,
/// which keeps full precision near 0 and pi; the cosine term is clamped.
inline double rotation_error(const Mat3& r_gt, const Mat3& r_pred) {
  if (!is_rotation(r_gt, 1e-6) || !is_rotation(r_pred, 1e-6)) throw NotARotation("rotation_error: input is not a rotation");
  const Mat3 rel = r_gt.transpose() * r_pred;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double s = 0.5 * axis.norm();
  return std::atan2(s, c);
}

inline double translation_error(const Vec3& t_gt, const Vec3& t_pred) {
  const double norm = t_gt.norm();
  if (!(norm > 0.0)) throw ZeroGtTranslation("translation_error: |t_gt| is zero");
  return (t_gt - t_pred).norm() / norm;
}

/// Diagonal of the axis-aligned box around the vertices projected under
/// `p_gt`. Vertices behind the near plane are ignored.
inline double projected_bbox_diagonal(const TriangleMesh& mesh, const Pose& p_gt, const CameraIntrinsics& cam) {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  bool any = false;
  for (const auto& v : mesh.vertices) {
    const auto px = try_project(v, p_gt, cam);
    if (!px) continue;
    lo = lo.cwiseMin(*px);
    hi = hi.cwiseMax(*px);
    any = true;
  }
  if (!any) throw NoValidVertices("no vertex projects under the GT pose");
  return (hi - lo).norm();
}

inline MetricContext make_metric_context(const TriangleMesh& mesh, const Pose& p_gt, const CameraIntrinsics& cam) {
  return {projected_bbox_diagonal(mesh, p_gt, cam), cam.diagonal(), p_gt.translation.norm()};
}

/// Mean 3D displacement of the transformed vertices, scaled by
/// (d_bbox / d_img) / |t_gt|.
inline double pose_error(const TriangleMesh& mesh, const Pose& p_gt, const Pose& p_pred, const MetricContext& ctx) {
  if (!(ctx.t_gt_norm > 0.0)) throw ZeroGtTranslation("pose_error: |t_gt| is zero");
  validate(ctx);
  if (mesh.vertices.empty()) throw NoValidVertices("pose_error: mesh has no vertices");
  double sum = 0.0;
  for (const auto& v : mesh.vertices) sum += (p_gt.transform(v) - p_pred.transform(v)).norm();
  const double mean = sum / static_cast<double>(mesh.vertices.size());
  return (ctx.d_bbox / ctx.d_img) * mean / ctx.t_gt_norm;
}

/// Mean reprojection distance normalized by d_bbox. Vertices that do not
/// project under both poses are left out and counted in `excluded`.
inline double projection_error(const TriangleMesh& mesh, const Pose& p_gt, const Pose& p_pred,
                               const CameraIntrinsics& cam, const MetricContext& ctx,
                               std::size_t* excluded = nullptr) {
  validate(ctx);
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& v : mesh.vertices) {
    const auto a = try_project(v, p_gt, cam);
    const auto b = try_project(v, p_pred, cam);
    if (!a || !b) continue;
    sum += (*a - *b).norm();
    ++used;
  }
  if (excluded) *excluded = mesh.vertices.size() - used;
  if (used == 0) throw NoValidVertices("projection_error: no vertex projects under both poses");
  return sum / static_cast<double>(used) / ctx.d_bbox;
}

inline SampleErrors evaluate(const TriangleMesh& mesh, const Pose& p_gt, const Pose& p_pred,
                             const CameraIntrinsics& cam) {
  const auto ctx = make_metric_context(mesh, p_gt, cam);
  return {rotation_error(p_gt.rotation, p_pred.rotation), translation_error(p_gt.translation, p_pred.translation),
          pose_error(mesh, p_gt, p_pred, ctx), projection_error(mesh, p_gt, p_pred, cam, ctx)};
}

/// Lower median: element floor((n - 1) / 2) of the sorted values.
inline double lower_median(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("median of an empty list");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

struct AccuracyPoint {
  double threshold = 0.0;
  double accuracy = 0.0;  ///< fraction of samples with e_Rt < threshold
};

struct AggregateReport {
  std::size_t count = 0;
  SampleErrors median;
  std::vector<AccuracyPoint> accuracy;
};

inline AggregateReport aggregate(std::span<const SampleErrors> samples, std::span<const double> thresholds) {
  if (samples.empty()) throw EmptyInput("aggregate: no samples");
  AggregateReport report;
  report.count = samples.size();
  auto column = [&](auto member) {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.*member);
    return v;
  };
  report.median.e_R = lower_median(column(&SampleErrors::e_R));
  report.median.e_t = lower_median(column(&SampleErrors::e_t));
  report.median.e_Rt = lower_median(column(&SampleErrors::e_Rt));
  report.median.e_P = lower_median(column(&SampleErrors::e_P));
  for (double tau : thresholds) {
    const auto hits = std::count_if(samples.begin(), samples.end(), [&](const SampleErrors& s) { return s.e_Rt < tau; });
    report.accuracy.push_back({tau, static_cast<double>(hits) / static_cast<double>(samples.size())});
  }
  return report;
}

}  // namespace gcf
