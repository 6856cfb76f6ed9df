#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gcf/backprop.hpp"
#include "gcf/field.hpp"
#include "gcf/geometry.hpp"
#include "gcf/metrics.hpp"
#include "gcf/raster.hpp"

namespace gcf {

struct RefinementConfig {
  int iterations = 1000;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool record_trace = false;
};

inline void validate(const RefinementConfig& cfg) {
  if (cfg.iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0)) throw InvalidArgument("adam_beta1 must be in (0,1)");
  if (!(cfg.adam_beta2 > 0.0 && cfg.adam_beta2 < 1.0)) throw InvalidArgument("adam_beta2 must be in (0,1)");
  if (!(cfg.adam_eps > 0.0)) throw InvalidArgument("adam_eps must be > 0");
}

struct AdamState {
  Vec6 m = Vec6::Zero();
  Vec6 v = Vec6::Zero();
  long step_count = 0;
};

/// One bias-corrected Adam step on the loss gradient -g, where g is a
/// PoseGradient (which points along the field). The returned increment is
///   delta = -lr * m_hat / (sqrt(v_hat) + eps)   with moments of -g,
/// so a positive g component yields a positive delta.
inline std::pair<AdamState, PoseDelta> adam_step(AdamState state, const Vec6& g, const RefinementConfig& cfg) {
  const Vec6 loss_grad = -g;
  state.step_count += 1;
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * loss_grad;
  state.v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * loss_grad.cwiseProduct(loss_grad);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, double(state.step_count));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, double(state.step_count));
  const Vec6 m_hat = state.m / c1;
  const Vec6 v_hat = state.v / c2;
  const Vec6 step = -cfg.learning_rate * m_hat.array() / (v_hat.array().sqrt() + cfg.adam_eps);
  return {state, PoseDelta::from_vector(step)};
}

/// 0.5 * sum |proj(M_i, p_gt) - proj(M_i, pose)|^2 over `subset` (all
/// vertices when absent). Vertices behind the near plane under either pose
/// are skipped and counted in `excluded`.
inline double reprojection_loss(const TriangleMesh& mesh, const Pose& pose, const Pose& p_gt,
                                const CameraIntrinsics& cam, std::optional<std::span<const int>> subset = std::nullopt,
                                std::size_t* excluded = nullptr) {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  auto visit = [&](std::size_t i) {
    const auto a = try_project(mesh.vertices[i], p_gt, cam);
    const auto b = try_project(mesh.vertices[i], pose, cam);
    if (!a || !b) {
      ++skipped;
      return;
    }
    loss += 0.5 * (*a - *b).squaredNorm();
    ++used;
  };
  if (subset) {
    for (int i : *subset) {
      if (i < 0 || std::size_t(i) >= mesh.vertices.size()) throw InvalidArgument("vertex subset index out of range");
      visit(std::size_t(i));
    }
  } else {
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) visit(i);
  }
  if (excluded) *excluded = skipped;
  if (used == 0) throw NoValidVertices("reprojection_loss: no vertex projects under both poses");
  return loss;
}

struct TraceEntry {
  int iteration = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();  ///< on the vertices supported at this pose
  double rot_err = std::numeric_limits<double>::quiet_NaN();
  double trans_err = std::numeric_limits<double>::quiet_NaN();
  std::size_t supported = 0;
  Pose pose;
};

struct RefinementResult {
  Pose final_pose;
  int iterations_run = 0;
  std::optional<int> empty_render_at;  ///< iteration whose render came out empty
  std::vector<TraceEntry> trace;       ///< iterations_run + 1 entries when recorded
};

/// Knobs of the refinement loop that are not part of the optimizer.
struct RefineOptions {
  AttentionConfig attention;
  RasterOptions raster;
  /// Ground truth used only to fill loss and error columns of the trace.
  std::optional<Pose> reference;
};

namespace detail {

/// Per-iteration state; buffers are reused between iterations.
struct Backward {
  RenderBuffers buffers;
  VertexGradients vgrads;
};

/// Returns false when the render is empty.
inline bool backward(Backward& pass, const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam,
                     Predictor& predictor, const Observation* observation, const RefineOptions& opts) {
  rasterize_into(pass.buffers, mesh, pose, cam, opts.raster);
  if (pass.buffers.empty()) return false;
  const auto att = attention_mask(pass.buffers, opts.attention);
  const auto field = predictor.predict(observation, pass.buffers);
  pass.vgrads = vertex_gradients(field, att, pass.buffers, mesh);
  return true;
}

inline TraceEntry trace_entry(int iteration, const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam,
                              const VertexGradients& vgrads, const RefineOptions& opts) {
  TraceEntry e;
  e.iteration = iteration;
  e.pose = pose;
  const auto support = vgrads.supported_indices();
  e.supported = support.size();
  if (opts.reference) {
    if (!support.empty()) {
      try {
        e.loss = reprojection_loss(mesh, pose, *opts.reference, cam, std::span<const int>(support));
      } catch (const NoValidVertices&) {
      }
    } else {
      e.loss = 0.0;
    }
    e.rot_err = rotation_error(opts.reference->rotation, pose.rotation);
    e.trans_err = translation_error(opts.reference->translation, pose.translation);
  }
  return e;
}

}  // namespace detail

/// Iterative refinement: render, attend, predict, disperse to vertices,
/// chain to the pose and take one Adam step, `cfg.iterations` times. A
/// single Adam state persists across iterations. An empty render after the
/// first iteration stops the loop early.
inline RefinementResult refine(const TriangleMesh& mesh, const Pose& p_init, const CameraIntrinsics& cam,
                               Predictor& predictor, const Observation* observation, const RefinementConfig& cfg,
                               const RefineOptions& opts = {}) {
  validate(cfg);
  validate(cam);
  RefinementResult result;
  Pose pose = p_init;
  AdamState adam;
  detail::Backward pass;
  for (int it = 0; it <= cfg.iterations; ++it) {
    const bool last = it == cfg.iterations;
    if (last && !cfg.record_trace) break;
    if (!detail::backward(pass, mesh, pose, cam, predictor, observation, opts)) {
      if (it == 0) throw EmptyRenderAtStart("initial pose renders no pixels");
      result.empty_render_at = it;
      break;
    }
    if (cfg.record_trace) result.trace.push_back(detail::trace_entry(it, mesh, pose, cam, pass.vgrads, opts));
    if (last) break;
    const auto g = pose_gradient(pass.vgrads, mesh, pose, cam);
    auto [next_state, delta] = adam_step(adam, g.g, cfg);
    adam = next_state;
    pose = apply_delta(pose, delta);
    result.iterations_run = it + 1;
  }
  result.final_pose = pose;
  return result;
}

}  // namespace gcf
