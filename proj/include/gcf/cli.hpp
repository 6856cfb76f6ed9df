#pragma once

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcf/benchmark.hpp"
#include "gcf/config.hpp"
#include "gcf/field.hpp"
#include "gcf/io.hpp"
#include "gcf/metrics.hpp"
#include "gcf/raster.hpp"
#include "gcf/refine.hpp"

namespace gcf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitGradcheck = 2;

struct RenderArgs {
  std::string mesh;
  std::string pose;
  std::string gt_pose;
  std::string camera;
  std::string out = "render_out";
  double field_max = 0.0;  ///< color-wheel saturation scale; 0 = max |d| of the field
};

struct RefineArgs {
  std::string mesh;
  std::string pose;
  std::string gt_pose;
  std::string camera;
  std::string out = "refine_out";
  std::uint64_t seed = 0;
  int iterations = RefinementConfig{}.iterations;
  double lr = RefinementConfig{}.learning_rate;
  double noise_px = 0.0;
  double dropout = 0.0;
  bool trace = false;
};

struct BenchmarkArgs {
  std::string config;
  std::string out;
  std::optional<int> workers;
};

struct GradcheckArgs {
  std::string mesh;
  std::string camera;
  std::string gt_pose;
  std::uint64_t seed = 0;
  int poses = 100;
  bool flip_sign = false;
};

namespace detail {

inline CameraIntrinsics camera_or_default(const std::string& text) {
  return text.empty() ? CameraIntrinsics{} : parse_camera_arg(text);
}

inline std::string errors_line(const SampleErrors& e) {
  std::ostringstream s;
  s << std::setprecision(6) << "e_R=" << rad2deg(e.e_R) << "deg e_t=" << e.e_t << " e_Rt=" << e.e_Rt
    << " e_P=" << e.e_P;
  return s.str();
}

inline Json errors_json(const SampleErrors& e) {
  return {{"e_R_rad", e.e_R}, {"e_R_deg", rad2deg(e.e_R)}, {"e_t", e.e_t}, {"e_Rt", e.e_Rt}, {"e_P", e.e_P}};
}

inline void write_rgb(const std::filesystem::path& dir, const std::string& stem, const Image<Rgb>& img,
                      std::vector<std::string>& files) {
  write_file_atomic(dir / (stem + ".ppm"), encode_ppm(img));
  files.push_back(stem + ".ppm");
#ifdef GCF_HAVE_PNG
  write_file_atomic(dir / (stem + ".png"), encode_png(img));
  files.push_back(stem + ".png");
#endif
}

inline void write_gray(const std::filesystem::path& dir, const std::string& name, const Image<int>& img, int max_value,
                       std::vector<std::string>& files) {
  write_file_atomic(dir / name, encode_pgm_ascii(img, max_value));
  files.push_back(name);
}

}  // namespace detail

inline int cmd_render(const RenderArgs& a, std::ostream& out) {
  const auto mesh = load_obj(a.mesh);
  const auto cam = detail::camera_or_default(a.camera);
  const Pose pose = a.pose.empty() ? default_gt_pose(mesh, cam) : parse_pose_arg(a.pose);
  validate(pose);
  const std::filesystem::path dir = a.out;
  const auto buf = rasterize(mesh, pose, cam);
  if (buf.empty()) out << "warning: the render covers no pixels\n";

  std::vector<std::string> files;
  detail::write_gray(dir, "depth.pgm", depth_levels(buf), 255, files);
  detail::write_rgb(dir, "normal", normal_image(buf), files);
  detail::write_rgb(dir, "objcoord", objcoord_image(buf), files);
  detail::write_gray(dir, "mask.pgm", binary_levels(buf.mask), 1, files);
  detail::write_gray(dir, "index.pgm", index_levels(buf), int(mesh.triangle_count()), files);

  Json meta = {{"mesh", a.mesh},
               {"vertices", mesh.vertex_count()},
               {"triangles", mesh.triangle_count()},
               {"pose", pose_to_json(pose)},
               {"camera", camera_to_json(cam)},
               {"covered_pixels", buf.covered()}};
  if (!a.gt_pose.empty()) {
    const Pose gt = parse_pose_arg(a.gt_pose);
    validate(gt);
    const auto field = render_gt_gcf(mesh, pose, gt, cam, buf);
    const auto att = attention_mask(buf);
    double max_mag = a.field_max;
    if (!(max_mag > 0.0)) {
      for (int y = 0; y < field.height(); ++y)
        for (int x = 0; x < field.width(); ++x)
          if (field.valid(x, y)) max_mag = std::max(max_mag, field.at(x, y).norm());
    }
    detail::write_rgb(dir, "gcf", field_image(field, max_mag, &att), files);
    detail::write_gray(dir, "attention.pgm", binary_levels(att.weight), 1, files);
    meta["gt_pose"] = pose_to_json(gt);
    meta["field_max_px"] = max_mag;
    meta["attention_pixels"] = att.active_count();
  }
  meta["files"] = files;
  write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
  out << "wrote " << files.size() + 1 << " files to " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_refine(const RefineArgs& a, std::ostream& out, std::ostream& err) {
  const auto mesh = load_obj(a.mesh);
  const auto cam = detail::camera_or_default(a.camera);
  const Pose gt = a.gt_pose.empty() ? default_gt_pose(mesh, cam) : parse_pose_arg(a.gt_pose);
  validate(gt);
  Pose init;
  if (a.pose.empty()) {
    PerturbationConfig pc;
    pc.seed = a.seed;
    init = perturb_pose(gt, pc, 0);
  } else {
    init = parse_pose_arg(a.pose);
  }
  validate(init);

  RefinementConfig cfg;
  cfg.iterations = a.iterations;
  cfg.learning_rate = a.lr;
  cfg.record_trace = a.trace;
  validate(cfg);
  OracleNoiseConfig noise{a.noise_px, a.dropout, a.seed};
  OraclePredictor oracle(mesh, gt, cam, noise);
  RefineOptions opts;
  opts.reference = gt;

  RefinementResult res;
  try {
    res = refine(mesh, init, cam, oracle, nullptr, cfg, opts);
  } catch (const EmptyRenderAtStart& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  const auto e0 = evaluate(mesh, gt, init, cam);
  const auto e1 = evaluate(mesh, gt, res.final_pose, cam);

  const std::filesystem::path dir = a.out;
  Json doc = {{"schema_version", kSchemaVersion},
              {"mesh", a.mesh},
              {"camera", camera_to_json(cam)},
              {"gt_pose", pose_to_json(gt)},
              {"initial_pose", pose_to_json(init)},
              {"final_pose", pose_to_json(res.final_pose)},
              {"initial_errors", detail::errors_json(e0)},
              {"final_errors", detail::errors_json(e1)},
              {"iterations", cfg.iterations},
              {"iterations_run", res.iterations_run},
              {"learning_rate", cfg.learning_rate},
              {"oracle_noise", {{"sigma_px", noise.sigma_px}, {"dropout", noise.dropout}, {"seed", noise.seed}}}};
  doc["empty_render_at"] = res.empty_render_at ? Json(*res.empty_render_at) : Json(nullptr);
  write_file_atomic(dir / "result.json", doc.dump(2) + "\n");
  if (a.trace) write_file_atomic(dir / "trace.csv", trace_csv(res));
  if (res.empty_render_at) out << "warning: render became empty at iteration " << *res.empty_render_at << "\n";
  out << "initial: " << detail::errors_line(e0) << "\n";
  out << "final:   " << detail::errors_line(e1) << "\n";
  return kExitOk;
}

inline int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out) {
  auto cfg = load_benchmark_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.workers) cfg.workers = *a.workers;
  validate(cfg);
  const auto res = run_benchmark(cfg);
  write_benchmark_reports(cfg, res);
  out << aggregate_csv(cfg, res);
  return kExitOk;
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.poses < 1) {
    err << "error: --poses must be >= 1\n";
    return kExitFailure;
  }
  const auto mesh = load_obj(a.mesh);
  const auto cam = detail::camera_or_default(a.camera);
  GradcheckOptions opt;
  opt.samples = a.poses;
  opt.seed = a.seed;
  opt.flip_sign = a.flip_sign;
  if (!a.gt_pose.empty()) opt.gt_pose = parse_pose_arg(a.gt_pose);
  const auto rep = run_gradcheck(mesh, cam, opt);
  out << std::setprecision(6) << "poses: " << rep.samples.size() << " checked, " << rep.skipped << " skipped\n"
      << "max relative deviation: " << rep.max_relative_deviation << " (tolerance " << opt.tolerance << ")\n"
      << "min rendered-field cosine: " << rep.min_attention_path_cosine << "\n";
  if (rep.samples.empty()) {
    err << "error: no pose produced supported vertices\n";
    return kExitFailure;
  }
  if (!rep.passed) {
    out << "FAIL\n";
    return kExitGradcheck;
  }
  out << "PASS\n";
  return kExitOk;
}

/// Parses and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose refinement with geometric correspondence fields", "gcf"};
  app.require_subcommand(1);

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Rasterize a mesh and write buffer images");
  r->add_option("--mesh", render.mesh, "OBJ mesh")->required();
  r->add_option("--pose", render.pose, "rx,ry,rz,tx,ty,tz or pose JSON (default: canonical view)");
  r->add_option("--gt-pose", render.gt_pose, "also write the GT correspondence field and attention");
  r->add_option("--camera", render.camera, "f,cx,cy,w,h or camera JSON");
  r->add_option("--out", render.out, "output directory");
  r->add_option("--field-max", render.field_max, "displacement (px) at full saturation");

  RefineArgs refine_args;
  auto* f = app.add_subcommand("refine", "Refine one pose against the oracle predictor");
  f->add_option("--mesh", refine_args.mesh, "OBJ mesh")->required();
  f->add_option("--pose", refine_args.pose, "initial pose (default: seeded perturbation of the GT pose)");
  f->add_option("--gt-pose", refine_args.gt_pose, "ground-truth pose (default: canonical view)");
  f->add_option("--camera", refine_args.camera, "f,cx,cy,w,h or camera JSON");
  f->add_option("--out", refine_args.out, "output directory");
  f->add_option("--seed", refine_args.seed, "seed for the initial perturbation and oracle noise");
  f->add_option("--iterations", refine_args.iterations, "Adam steps")->check(CLI::NonNegativeNumber);
  f->add_option("--lr", refine_args.lr, "learning rate");
  f->add_option("--noise-px", refine_args.noise_px, "oracle Gaussian noise (px)");
  f->add_option("--dropout", refine_args.dropout, "oracle pixel dropout probability");
  f->add_flag("--trace", refine_args.trace, "write trace.csv");

  BenchmarkArgs bench;
  int workers = -1;
  auto* b = app.add_subcommand("benchmark", "Run a seeded benchmark from a JSON config");
  b->add_option("--config", bench.config, "benchmark config JSON")->required();
  b->add_option("--out", bench.out, "override output_dir");
  auto* workers_opt = b->add_option("--workers", workers, "override the trial pool size")->check(CLI::NonNegativeNumber);

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Compare the analytic pose gradient with finite differences");
  g->add_option("--mesh", grad.mesh, "OBJ mesh")->required();
  g->add_option("--camera", grad.camera, "f,cx,cy,w,h or camera JSON");
  g->add_option("--gt-pose", grad.gt_pose, "reference pose (default: canonical view)");
  g->add_option("--seed", grad.seed, "perturbation seed");
  g->add_option("--poses", grad.poses, "number of perturbed poses");
  g->add_flag("--flip-sign", grad.flip_sign)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitFailure;
  }

  try {
    if (r->parsed()) return cmd_render(render, out);
    if (f->parsed()) return cmd_refine(refine_args, out, err);
    if (b->parsed()) {
      if (workers_opt->count() > 0) bench.workers = workers;
      return cmd_benchmark(bench, out);
    }
    if (g->parsed()) return cmd_gradcheck(grad, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace gcf::cli
