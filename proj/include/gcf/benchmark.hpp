#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gcf/backprop.hpp"
#include "gcf/config.hpp"
#include "gcf/field.hpp"
#include "gcf/geometry.hpp"
#include "gcf/io.hpp"
#include "gcf/metrics.hpp"
#include "gcf/raster.hpp"
#include "gcf/refine.hpp"
#include "gcf/rng.hpp"

namespace gcf {

/// Oblique view that puts the mesh's bounding sphere at about 60% of the
/// shorter image side, slightly off the optical axis. Both lateral
/// translation components are nonzero so relative perturbation acts on all
/// three axes.
inline Pose default_gt_pose(const TriangleMesh& mesh, const CameraIntrinsics& cam) {
  validate(mesh);
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = 0.5 * (lo + hi);
  double radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, (v - center).norm());
  const Mat3 r = so3_exp(Vec3(0.35, 0.6, 0.1));
  const double z = cam.focal * radius / (0.3 * std::min(cam.width, cam.height));
  const Vec2 offset = (cam.principal_point - 0.5 * Vec2(cam.width, cam.height)) / cam.focal;
  const Vec3 place(0.06 * z - offset.x() * z, -0.045 * z - offset.y() * z, z);
  return Pose{r, place - r * center};
}

struct TrialResult {
  std::size_t mesh_index = 0;
  int trial = 0;
  std::uint64_t stream = 0;  ///< global trial index
  Pose gt;
  Pose init;
  Pose final_pose;
  SampleErrors initial;
  SampleErrors final_errors;
  int iterations_run = 0;
  std::optional<int> empty_render_at;
  bool empty_at_start = false;
};

struct BenchmarkResult {
  std::vector<TrialResult> trials;  ///< ordered by global trial index
  std::vector<AggregateReport> per_mesh;
  AggregateReport overall;
};

namespace detail {

/// Runs `count` independent jobs on `workers` threads; the first exception
/// is rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t count, int workers, F&& job) {
  const std::size_t n = std::clamp<std::size_t>(
      workers > 0 ? std::size_t(workers) : std::max(1u, std::thread::hardware_concurrency()), 1, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (n == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// One refinement trial. Global trial index g = mesh_index * trials + trial
/// selects perturbation stream g and oracle noise seed mix_seed(noise.seed, g).
inline TrialResult run_trial(const TriangleMesh& mesh, const Pose& gt, const BenchmarkConfig& cfg, std::size_t mesh_index,
                             int trial) {
  TrialResult r;
  r.mesh_index = mesh_index;
  r.trial = trial;
  r.stream = std::uint64_t(mesh_index) * std::uint64_t(cfg.trials) + std::uint64_t(trial);
  r.gt = gt;
  r.init = perturb_pose(gt, cfg.perturbation, r.stream);
  OracleNoiseConfig noise = cfg.oracle_noise;
  noise.seed = mix_seed(cfg.oracle_noise.seed, r.stream);
  OraclePredictor oracle(mesh, gt, cfg.camera, noise);
  r.initial = evaluate(mesh, gt, r.init, cfg.camera);
  RefinementConfig rc = cfg.refinement;
  rc.record_trace = false;
  try {
    const auto res = refine(mesh, r.init, cfg.camera, oracle, nullptr, rc);
    r.final_pose = res.final_pose;
    r.iterations_run = res.iterations_run;
    r.empty_render_at = res.empty_render_at;
  } catch (const EmptyRenderAtStart&) {
    r.final_pose = r.init;
    r.empty_at_start = true;
  }
  r.final_errors = evaluate(mesh, gt, r.final_pose, cfg.camera);
  return r;
}

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  validate(cfg);
  std::vector<TriangleMesh> meshes;
  std::vector<Pose> gts;
  for (const auto& path : cfg.mesh_paths) {
    meshes.push_back(load_obj(path));
    gts.push_back(cfg.gt_pose ? *cfg.gt_pose : default_gt_pose(meshes.back(), cfg.camera));
  }
  const std::size_t per_mesh = std::size_t(cfg.trials);
  BenchmarkResult out;
  out.trials.resize(meshes.size() * per_mesh);
  detail::parallel_for(out.trials.size(), cfg.workers, [&](std::size_t g) {
    const std::size_t m = g / per_mesh;
    out.trials[g] = run_trial(meshes[m], gts[m], cfg, m, int(g % per_mesh));
  });

  std::vector<SampleErrors> all;
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    std::vector<SampleErrors> errs;
    for (std::size_t t = 0; t < per_mesh; ++t) errs.push_back(out.trials[m * per_mesh + t].final_errors);
    out.per_mesh.push_back(aggregate(errs, cfg.thresholds));
    all.insert(all.end(), errs.begin(), errs.end());
  }
  out.overall = aggregate(all, cfg.thresholds);
  return out;
}

namespace detail {

inline Json errors_json(const SampleErrors& e) {
  return {{"e_R_rad", e.e_R}, {"e_R_deg", rad2deg(e.e_R)}, {"e_t", e.e_t}, {"e_Rt", e.e_Rt}, {"e_P", e.e_P}};
}

inline std::string aggregate_row(const std::string& label, const AggregateReport& r, CsvScaling scaling) {
  const bool percent = scaling == CsvScaling::percent;
  const double rot = percent ? rad2deg(r.median.e_R) : r.median.e_R;
  const double k = percent ? 100.0 : 1.0;
  return label + "," + std::to_string(r.count) + "," + format_number(rot) + "," + format_number(k * r.median.e_t) + "," +
         format_number(k * r.median.e_Rt) + "," + format_number(k * r.median.e_P) + "," +
         (percent ? "percent" : "raw") + ",lower\n";
}

}  // namespace detail

inline std::string samples_json(const BenchmarkConfig& cfg, const BenchmarkResult& res) {
  Json samples = Json::array();
  for (const auto& t : res.trials) {
    Json s = {{"mesh", cfg.mesh_paths[t.mesh_index].filename().string()},
              {"mesh_index", t.mesh_index},
              {"trial", t.trial},
              {"stream", t.stream},
              {"initial", detail::errors_json(t.initial)},
              {"final", detail::errors_json(t.final_errors)},
              {"iterations_run", t.iterations_run},
              {"init_pose", pose_to_json(t.init)},
              {"final_pose", pose_to_json(t.final_pose)}};
    if (t.empty_at_start) {
      s["status"] = "empty_render_at_start";
    } else if (t.empty_render_at) {
      s["status"] = "empty_render";
      s["empty_render_at"] = *t.empty_render_at;
    } else {
      s["status"] = "ok";
    }
    samples.push_back(std::move(s));
  }
  Json doc = {{"schema_version", kSchemaVersion}, {"median_convention", "lower"}, {"samples", std::move(samples)}};
  return doc.dump(2) + "\n";
}

/// One row per mesh plus "all". In percent scaling MedErr_R is in degrees and
/// the other medians are multiplied by 100; raw scaling writes radians and
/// plain ratios.
inline std::string aggregate_csv(const BenchmarkConfig& cfg, const BenchmarkResult& res) {
  std::string out = "mesh,count,MedErr_R,MedErr_t,MedErr_Rt,MedErr_P,scaling,median\n";
  for (std::size_t m = 0; m < res.per_mesh.size(); ++m) {
    out += detail::aggregate_row(cfg.mesh_paths[m].filename().string(), res.per_mesh[m], cfg.csv_scaling);
  }
  out += detail::aggregate_row("all", res.overall, cfg.csv_scaling);
  return out;
}

/// Acc_Rt(threshold) per mesh and overall; thresholds are plain e_Rt values.
inline std::string accuracy_csv(const BenchmarkConfig& cfg, const BenchmarkResult& res) {
  std::string out = "mesh,threshold,Acc_Rt\n";
  auto rows = [&](const std::string& label, const AggregateReport& r) {
    for (const auto& p : r.accuracy) out += label + "," + format_number(p.threshold) + "," + format_number(p.accuracy) + "\n";
  };
  for (std::size_t m = 0; m < res.per_mesh.size(); ++m) rows(cfg.mesh_paths[m].filename().string(), res.per_mesh[m]);
  rows("all", res.overall);
  return out;
}

inline void write_benchmark_reports(const BenchmarkConfig& cfg, const BenchmarkResult& res) {
  write_file_atomic(cfg.output_dir / "samples.json", samples_json(cfg, res));
  write_file_atomic(cfg.output_dir / "aggregate.csv", aggregate_csv(cfg, res));
  write_file_atomic(cfg.output_dir / "accuracy.csv", accuracy_csv(cfg, res));
}

struct GradcheckOptions {
  int samples = 100;
  std::uint64_t seed = 0;
  PerturbationConfig perturbation;  ///< seed field is replaced by `seed`
  std::optional<Pose> gt_pose;
  double step = 1e-6;
  double tolerance = 1e-3;
  bool flip_sign = false;  ///< test hook: negates the analytic gradient
  AttentionConfig attention;
};

struct GradcheckSample {
  double relative_deviation = 0.0;
  double attention_path_cosine = 0.0;  ///< cosine between the rendered-field pose gradient and the reference
  std::size_t supported = 0;
};

struct GradcheckReport {
  std::vector<GradcheckSample> samples;
  std::size_t skipped = 0;  ///< poses with no supported vertex
  double max_relative_deviation = 0.0;
  double min_attention_path_cosine = 1.0;
  bool passed = false;
};

/// Compares the analytic pose gradient sum_i J_i^T (proj(M_i, gt) - proj(M_i, p))
/// over the vertices that receive gradient in the rendering path with
/// central differences of the reprojection loss on the same vertices.
inline GradcheckReport run_gradcheck(const TriangleMesh& mesh, const CameraIntrinsics& cam, const GradcheckOptions& opt) {
  if (opt.samples < 1) throw InvalidArgument("gradcheck needs at least one sample");
  if (!(opt.step > 0.0)) throw InvalidArgument("gradcheck step must be > 0");
  validate(mesh);
  validate(cam);
  const Pose gt = opt.gt_pose ? *opt.gt_pose : default_gt_pose(mesh, cam);
  PerturbationConfig pc = opt.perturbation;
  pc.seed = opt.seed;
  GradcheckReport report;
  for (int k = 0; k < opt.samples; ++k) {
    const Pose pose = perturb_pose(gt, pc, std::uint64_t(k));
    const auto buffers = rasterize(mesh, pose, cam);
    if (buffers.empty()) {
      ++report.skipped;
      continue;
    }
    const auto field = render_gt_gcf(mesh, pose, gt, cam, buffers);
    const auto att = attention_mask(buffers, opt.attention);
    const auto rendered = vertex_gradients(field, att, buffers, mesh);
    const auto support = rendered.supported_indices();
    if (support.empty()) {
      ++report.skipped;
      continue;
    }

    VertexGradients exact;
    exact.grad.assign(mesh.vertices.size(), Vec2::Zero());
    exact.support.assign(mesh.vertices.size(), 0.0);
    const auto disp = vertex_displacements(mesh, pose, gt, cam);
    for (int i : support) {
      if (!disp[std::size_t(i)]) continue;
      exact.grad[std::size_t(i)] = *disp[std::size_t(i)];
      exact.support[std::size_t(i)] = rendered.support[std::size_t(i)];
    }
    Vec6 analytic = pose_gradient(exact, mesh, pose, cam).g;
    if (opt.flip_sign) analytic = -analytic;

    const std::span<const int> subset(support);
    Vec6 numeric;
    for (int c = 0; c < 6; ++c) {
      Vec6 e = Vec6::Zero();
      e[c] = opt.step;
      const double up = reprojection_loss(mesh, apply_delta(pose, PoseDelta::from_vector(e)), gt, cam, subset);
      const double down = reprojection_loss(mesh, apply_delta(pose, PoseDelta::from_vector(-e)), gt, cam, subset);
      numeric[c] = -(up - down) / (2.0 * opt.step);
    }

    GradcheckSample s;
    s.supported = support.size();
    const double scale = numeric.norm();
    s.relative_deviation = scale > 0.0 ? (analytic - numeric).norm() / scale : analytic.norm();
    const Vec6 path = pose_gradient(rendered, mesh, pose, cam).g;
    const double denom = path.norm() * scale;
    s.attention_path_cosine = denom > 0.0 ? path.dot(numeric) / denom : 0.0;
    report.max_relative_deviation = std::max(report.max_relative_deviation, s.relative_deviation);
    report.min_attention_path_cosine = std::min(report.min_attention_path_cosine, s.attention_path_cosine);
    report.samples.push_back(s);
  }
  report.passed = !report.samples.empty() && report.max_relative_deviation <= opt.tolerance;
  return report;
}

}  // namespace gcf
