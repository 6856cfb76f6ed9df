#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gcf/field.hpp"
#include "gcf/geometry.hpp"
#include "gcf/refine.hpp"

namespace gcf {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string key_path(std::string_view parent, std::string_view key) {
  return parent.empty() ? std::string(key) : std::string(parent) + "." + std::string(key);
}

inline void require_object(const Json& j, std::string_view path) {
  if (!j.is_object()) throw ConfigError("'" + std::string(path.empty() ? "<root>" : path) + "' must be an object");
}

inline void reject_unknown_keys(const Json& j, std::string_view path, std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (auto k : known) found = found || key == k;
    if (!found) throw ConfigError("unknown key '" + key_path(path, key) + "'");
  }
}

inline double number(const Json& j, std::string_view path) {
  if (!j.is_number()) throw ConfigError("'" + std::string(path) + "' must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError("'" + std::string(path) + "' must be finite");
  return v;
}

inline long long integer(const Json& j, std::string_view path) {
  if (!j.is_number_integer()) throw ConfigError("'" + std::string(path) + "' must be an integer");
  return j.get<long long>();
}

inline std::uint64_t seed(const Json& j, std::string_view path) {
  if (!j.is_number_unsigned()) throw ConfigError("'" + std::string(path) + "' must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline Vec3 vec3(const Json& j, std::string_view path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("'" + std::string(path) + "' must be an array of 3 numbers");
  return {number(j[0], path), number(j[1], path), number(j[2], path)};
}

inline std::vector<double> split_numbers(std::string_view text, std::string_view what) {
  std::vector<double> out;
  std::string item;
  std::stringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size() || !std::isfinite(v)) {
      throw ConfigError("malformed " + std::string(what) + " '" + std::string(text) + "'");
    }
    out.push_back(v);
  }
  return out;
}

/// Rethrows config-level failures (invalid values) with the offending path.
template <class F>
void checked(std::string_view path, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    throw ConfigError("'" + std::string(path) + "': " + e.what());
  }
}

}  // namespace detail

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// {"axis_angle": [3], "translation": [3]} or {"rotation": [[3],[3],[3]], "translation": [3]}.
inline Pose pose_from_json(const Json& j, std::string_view path = "pose") {
  detail::require_object(j, path);
  detail::reject_unknown_keys(j, path, {"axis_angle", "rotation", "translation"});
  if (!j.contains("translation")) throw ConfigError("missing key '" + detail::key_path(path, "translation") + "'");
  if (j.contains("axis_angle") == j.contains("rotation")) {
    throw ConfigError("'" + std::string(path) + "' needs exactly one of axis_angle, rotation");
  }
  Pose p;
  p.translation = detail::vec3(j["translation"], detail::key_path(path, "translation"));
  if (j.contains("axis_angle")) {
    p.rotation = so3_exp(detail::vec3(j["axis_angle"], detail::key_path(path, "axis_angle")));
  } else {
    const auto& r = j["rotation"];
    const auto rpath = detail::key_path(path, "rotation");
    if (!r.is_array() || r.size() != 3) throw ConfigError("'" + rpath + "' must be a 3x3 array");
    for (int i = 0; i < 3; ++i) p.rotation.row(i) = detail::vec3(r[std::size_t(i)], rpath).transpose();
    if (!is_rotation(p.rotation, 1e-6)) throw ConfigError("'" + rpath + "' is not a rotation matrix");
    p.rotation = orthonormalize(p.rotation);
  }
  return p;
}

inline Json pose_to_json(const Pose& p) {
  Json rot = Json::array();
  for (int i = 0; i < 3; ++i) rot.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
  const Vec3 aa = so3_log(p.rotation);
  return {{"rotation", rot},
          {"axis_angle", {aa.x(), aa.y(), aa.z()}},
          {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

/// "rx,ry,rz,tx,ty,tz" (axis-angle in radians), or a path to a pose JSON file.
inline Pose parse_pose_arg(std::string_view text) {
  if (std::filesystem::is_regular_file(std::filesystem::path(text))) {
    return pose_from_json(read_json_file(std::filesystem::path(text)));
  }
  const auto v = detail::split_numbers(text, "pose");
  if (v.size() != 6) throw ConfigError("pose '" + std::string(text) + "' must have 6 comma-separated numbers");
  return Pose{so3_exp(Vec3(v[0], v[1], v[2])), Vec3(v[3], v[4], v[5])};
}

/// {"focal", "principal_point": [2], "width", "height"}; missing keys keep defaults.
inline CameraIntrinsics camera_from_json(const Json& j, std::string_view path = "camera") {
  detail::require_object(j, path);
  detail::reject_unknown_keys(j, path, {"focal", "principal_point", "width", "height"});
  CameraIntrinsics cam;
  if (j.contains("focal")) cam.focal = detail::number(j["focal"], detail::key_path(path, "focal"));
  if (j.contains("principal_point")) {
    const auto& pp = j["principal_point"];
    const auto ppath = detail::key_path(path, "principal_point");
    if (!pp.is_array() || pp.size() != 2) throw ConfigError("'" + ppath + "' must be an array of 2 numbers");
    cam.principal_point = {detail::number(pp[0], ppath), detail::number(pp[1], ppath)};
  }
  if (j.contains("width")) cam.width = int(detail::integer(j["width"], detail::key_path(path, "width")));
  if (j.contains("height")) cam.height = int(detail::integer(j["height"], detail::key_path(path, "height")));
  detail::checked(path, [&] { validate(cam); });
  return cam;
}

inline Json camera_to_json(const CameraIntrinsics& cam) {
  return {{"focal", cam.focal},
          {"principal_point", {cam.principal_point.x(), cam.principal_point.y()}},
          {"width", cam.width},
          {"height", cam.height}};
}

/// "f,cx,cy,w,h", or a path to a camera JSON file.
inline CameraIntrinsics parse_camera_arg(std::string_view text) {
  if (std::filesystem::is_regular_file(std::filesystem::path(text))) {
    return camera_from_json(read_json_file(std::filesystem::path(text)));
  }
  const auto v = detail::split_numbers(text, "camera");
  if (v.size() != 5) throw ConfigError("camera '" + std::string(text) + "' must have 5 comma-separated numbers");
  if (v[3] != std::floor(v[3]) || v[4] != std::floor(v[4])) throw ConfigError("camera width/height must be integers");
  CameraIntrinsics cam{v[0], Vec2(v[1], v[2]), int(v[3]), int(v[4])};
  detail::checked("camera", [&] { validate(cam); });
  return cam;
}

/// Scaling of the aggregate table: "raw" writes plain values, "percent" writes
/// MedErr_R in degrees and the other three medians multiplied by 100.
enum class CsvScaling { raw, percent };

struct BenchmarkConfig {
  std::vector<std::filesystem::path> mesh_paths;
  CameraIntrinsics camera;
  std::optional<Pose> gt_pose;  ///< a per-mesh default view when absent
  int trials = 50;
  PerturbationConfig perturbation;
  OracleNoiseConfig oracle_noise;
  RefinementConfig refinement;
  std::vector<double> thresholds = {0.005, 0.01, 0.015, 0.02, 0.03, 0.05, 0.1};
  std::filesystem::path output_dir = "benchmark_out";
  int workers = 1;  ///< trial pool size; 0 picks the hardware concurrency
  CsvScaling csv_scaling = CsvScaling::percent;
};

inline void validate(const BenchmarkConfig& cfg) {
  if (cfg.mesh_paths.empty()) throw ConfigError("'mesh_paths' must not be empty");
  if (cfg.trials < 1) throw ConfigError("'trials' must be >= 1");
  if (cfg.workers < 0) throw ConfigError("'workers' must be >= 0");
  for (double t : cfg.thresholds) {
    if (!(t >= 0.0)) throw ConfigError("'thresholds' entries must be >= 0");
  }
  detail::checked("camera", [&] { validate(cfg.camera); });
  detail::checked("perturbation", [&] { validate(cfg.perturbation); });
  detail::checked("oracle_noise", [&] { validate(cfg.oracle_noise); });
  detail::checked("refinement", [&] { validate(cfg.refinement); });
}

/// Relative mesh paths and output_dir resolve against `base_dir`.
inline BenchmarkConfig benchmark_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  using detail::key_path;
  detail::require_object(j, "");
  detail::reject_unknown_keys(j, "",
                              {"schema_version", "mesh_paths", "camera", "gt_pose", "trials", "perturbation",
                               "oracle_noise", "refinement", "thresholds", "output_dir", "workers", "csv_scaling"});
  if (!j.contains("schema_version")) throw ConfigError("missing key 'schema_version'");
  if (detail::integer(j["schema_version"], "schema_version") != kSchemaVersion) {
    throw ConfigError("'schema_version' must be " + std::to_string(kSchemaVersion));
  }
  BenchmarkConfig cfg;
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() || base_dir.empty() ? p : base_dir / p; };

  if (!j.contains("mesh_paths")) throw ConfigError("missing key 'mesh_paths'");
  const auto& meshes = j["mesh_paths"];
  if (!meshes.is_array()) throw ConfigError("'mesh_paths' must be an array of strings");
  for (const auto& m : meshes) {
    if (!m.is_string()) throw ConfigError("'mesh_paths' must be an array of strings");
    cfg.mesh_paths.push_back(resolve(m.get<std::string>()));
  }
  if (j.contains("camera")) cfg.camera = camera_from_json(j["camera"], "camera");
  if (j.contains("gt_pose")) cfg.gt_pose = pose_from_json(j["gt_pose"], "gt_pose");
  if (j.contains("trials")) cfg.trials = int(detail::integer(j["trials"], "trials"));
  if (j.contains("workers")) cfg.workers = int(detail::integer(j["workers"], "workers"));

  if (j.contains("perturbation")) {
    const auto& p = j["perturbation"];
    detail::require_object(p, "perturbation");
    detail::reject_unknown_keys(p, "perturbation", {"sigma_rot", "sigma_rot_deg", "sigma_trans", "seed"});
    if (p.contains("sigma_rot") && p.contains("sigma_rot_deg")) {
      throw ConfigError("'perturbation' takes only one of sigma_rot, sigma_rot_deg");
    }
    if (p.contains("sigma_rot")) cfg.perturbation.sigma_rot = detail::number(p["sigma_rot"], "perturbation.sigma_rot");
    if (p.contains("sigma_rot_deg")) {
      cfg.perturbation.sigma_rot = deg2rad(detail::number(p["sigma_rot_deg"], "perturbation.sigma_rot_deg"));
    }
    if (p.contains("sigma_trans")) cfg.perturbation.sigma_trans = detail::number(p["sigma_trans"], "perturbation.sigma_trans");
    if (p.contains("seed")) cfg.perturbation.seed = detail::seed(p["seed"], "perturbation.seed");
  }
  if (j.contains("oracle_noise")) {
    const auto& n = j["oracle_noise"];
    detail::require_object(n, "oracle_noise");
    detail::reject_unknown_keys(n, "oracle_noise", {"sigma_px", "dropout", "seed"});
    if (n.contains("sigma_px")) cfg.oracle_noise.sigma_px = detail::number(n["sigma_px"], "oracle_noise.sigma_px");
    if (n.contains("dropout")) cfg.oracle_noise.dropout = detail::number(n["dropout"], "oracle_noise.dropout");
    if (n.contains("seed")) cfg.oracle_noise.seed = detail::seed(n["seed"], "oracle_noise.seed");
  }
  if (j.contains("refinement")) {
    const auto& r = j["refinement"];
    detail::require_object(r, "refinement");
    detail::reject_unknown_keys(r, "refinement",
                                {"iterations", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "record_trace"});
    auto& rc = cfg.refinement;
    if (r.contains("iterations")) rc.iterations = int(detail::integer(r["iterations"], "refinement.iterations"));
    if (r.contains("learning_rate")) rc.learning_rate = detail::number(r["learning_rate"], "refinement.learning_rate");
    if (r.contains("adam_beta1")) rc.adam_beta1 = detail::number(r["adam_beta1"], "refinement.adam_beta1");
    if (r.contains("adam_beta2")) rc.adam_beta2 = detail::number(r["adam_beta2"], "refinement.adam_beta2");
    if (r.contains("adam_eps")) rc.adam_eps = detail::number(r["adam_eps"], "refinement.adam_eps");
    if (r.contains("record_trace")) {
      if (!r["record_trace"].is_boolean()) throw ConfigError("'refinement.record_trace' must be a boolean");
      rc.record_trace = r["record_trace"].get<bool>();
    }
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    if (!t.is_array()) throw ConfigError("'thresholds' must be an array of numbers");
    cfg.thresholds.clear();
    for (const auto& v : t) cfg.thresholds.push_back(detail::number(v, "thresholds"));
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("'output_dir' must be a string");
    cfg.output_dir = resolve(j["output_dir"].get<std::string>());
  }
  if (j.contains("csv_scaling")) {
    const auto& s = j["csv_scaling"];
    if (s == "raw") {
      cfg.csv_scaling = CsvScaling::raw;
    } else if (s == "percent") {
      cfg.csv_scaling = CsvScaling::percent;
    } else {
      throw ConfigError("'csv_scaling' must be \"raw\" or \"percent\"");
    }
  }
  validate(cfg);
  return cfg;
}

inline BenchmarkConfig load_benchmark_config(const std::filesystem::path& path) {
  return benchmark_config_from_json(read_json_file(path), path.parent_path());
}

}  // namespace gcf
