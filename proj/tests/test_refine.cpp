#include <gtest/gtest.h>

#include <cmath>

#include "gcf/benchmark.hpp"
#include "gcf/io.hpp"
#include "gcf/refine.hpp"
#include "oracles.hpp"

using namespace gcf;

namespace {

const CameraIntrinsics kCam100{100.0, Vec2(128.0, 128.0), 256, 256};
const CameraIntrinsics kCam256{300.0, Vec2(128.0, 128.0), 256, 256};

// Loss changes below this (px^2) are rounding noise of a converged pose.
constexpr double kLossFloor = 1e-12;

/// Predictor that always returns an all-invalid field.
class ZeroPredictor final : public Predictor {
 public:
  CorrespondenceField predict(const Observation*, const RenderBuffers& buffers) override {
    return CorrespondenceField(buffers.width(), buffers.height());
  }
};

class FailingPredictor final : public Predictor {
 public:
  CorrespondenceField predict(const Observation*, const RenderBuffers&) override { throw PredictorFailure("no field"); }
};

}  // namespace

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  RefinementConfig cfg;
  Vec6 g = Vec6::Zero();
  g[0] = 1.0;
  const auto [state, delta] = adam_step(AdamState{}, g, cfg);
  EXPECT_EQ(state.step_count, 1);
  EXPECT_GE(delta.omega.x(), 0.049999);
  EXPECT_LE(delta.omega.x(), 0.05);
  EXPECT_EQ(delta.omega.tail<2>(), Vec2::Zero());
  EXPECT_EQ(delta.dt, Vec3::Zero());
}

TEST(Adam, ZeroGradientGivesZeroStep) {
  const auto [state, delta] = adam_step(AdamState{}, Vec6::Zero(), RefinementConfig{});
  EXPECT_EQ(delta.as_vector(), Vec6::Zero());
  EXPECT_EQ(state.m, Vec6::Zero());
  EXPECT_EQ(state.v, Vec6::Zero());
}

TEST(Adam, FirstStepIsNearlyScaleInvariant) {
  Vec6 g;
  g << 0.3, -0.2, 0.1, 1.5, -0.7, 0.05;
  const RefinementConfig cfg;
  const Vec6 a = adam_step(AdamState{}, g, cfg).second.as_vector();
  const Vec6 b = adam_step(AdamState{}, 1000.0 * g, cfg).second.as_vector();
  EXPECT_LT(std::abs(b.norm() - a.norm()) / a.norm(), 1e-4);
}

TEST(Adam, MomentsStayNonNegativeAndCountSteps) {
  AdamState s;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    Vec6 g;
    for (int k = 0; k < 6; ++k) g[k] = n(rng);
    s = adam_step(s, g, RefinementConfig{}).first;
    ASSERT_TRUE((s.v.array() >= 0.0).all());
  }
  EXPECT_EQ(s.step_count, 200);
}

TEST(ReprojectionLoss, ZeroAtGroundTruth) {
  const auto mesh = load_obj(oracle::data_path("chair.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  EXPECT_EQ(reprojection_loss(mesh, gt, gt, kCam256), 0.0);
}

TEST(ReprojectionLoss, SingleVertexShift) {
  // A 3-4-5 pixel displacement of one vertex: at z = 2, f = 100, 1 px = 0.02 units.
  const auto mesh = make_mesh({Vec3(0, 0, 2), Vec3(1, 0, 2), Vec3(0, 1, 2)}, {Triangle{0, 1, 2}});
  const Pose gt{Mat3::Identity(), Vec3(0.06, 0.08, 0.0)};
  const std::vector<int> first{0};
  EXPECT_NEAR(reprojection_loss(mesh, Pose::identity(), gt, kCam100, first), 12.5, 1e-12);
}

TEST(ReprojectionLoss, FlattenedCubeLateralShift) {
  auto cube = load_obj(oracle::data_path("cube.obj"));
  ASSERT_EQ(cube.vertices.size(), 8u);
  for (auto& v : cube.vertices) v.z() = 0.0;
  const Pose pose{Mat3::Identity(), Vec3(0, 0, 2)};
  const Pose gt{Mat3::Identity(), Vec3(0.1, 0, 2)};
  EXPECT_NEAR(reprojection_loss(cube, pose, gt, kCam100), 100.0, 1e-9);
  const auto solid = load_obj(oracle::data_path("cube.obj"));
  double expected = 0.0;
  for (const auto& v : solid.vertices)
    expected += 0.5 * (oracle::pinhole(v, gt, kCam100) - oracle::pinhole(v, pose, kCam100)).squaredNorm();
  EXPECT_NEAR(reprojection_loss(solid, pose, gt, kCam100), expected, 1e-9);
}

TEST(ReprojectionLoss, ExcludesVerticesBehindTheCamera) {
  const auto mesh = make_mesh({Vec3(0, 0, 2), Vec3(1, 0, -2), Vec3(0, 1, 2)}, {Triangle{0, 1, 2}});
  std::size_t excluded = 0;
  reprojection_loss(mesh, Pose::identity(), Pose::identity(), kCam100, std::nullopt, &excluded);
  EXPECT_EQ(excluded, 1u);
  const auto hidden = make_mesh({Vec3(0, 0, -2), Vec3(1, 0, -2), Vec3(0, 1, -2)}, {Triangle{0, 1, 2}});
  EXPECT_THROW(reprojection_loss(hidden, Pose::identity(), Pose::identity(), kCam100), NoValidVertices);
}

TEST(Refine, GroundTruthIsAFixedPoint) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  OraclePredictor oracle(mesh, gt, kCam256);
  RefinementConfig cfg;
  cfg.iterations = 50;
  const auto res = refine(mesh, gt, kCam256, oracle, nullptr, cfg);
  EXPECT_LE(rotation_error(gt.rotation, res.final_pose.rotation), 1e-6);
  EXPECT_LE(translation_error(gt.translation, res.final_pose.translation), 1e-6);
  EXPECT_EQ(res.iterations_run, 50);
}

TEST(Refine, ZeroFieldLeavesPoseUnchanged) {
  const auto mesh = load_obj(oracle::data_path("chair.obj"));
  const Pose init = perturb_pose(default_gt_pose(mesh, kCam256), PerturbationConfig{deg2rad(5.0), 0.1, 1});
  ZeroPredictor zero;
  RefinementConfig cfg;
  cfg.iterations = 100;
  const auto res = refine(mesh, init, kCam256, zero, nullptr, cfg);
  EXPECT_EQ(res.final_pose.rotation, init.rotation);
  EXPECT_EQ(res.final_pose.translation, init.translation);
}

TEST(Refine, ZeroIterationsReturnsInitialPose) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  const Pose init = perturb_pose(gt, PerturbationConfig{deg2rad(5.0), 0.1, 2});
  OraclePredictor oracle(mesh, gt, kCam256);
  RefinementConfig cfg;
  cfg.iterations = 0;
  const auto res = refine(mesh, init, kCam256, oracle, nullptr, cfg);
  EXPECT_EQ(res.final_pose.rotation, init.rotation);
  EXPECT_EQ(res.final_pose.translation, init.translation);
  EXPECT_EQ(res.iterations_run, 0);
}

TEST(Refine, IsBitDeterministic) {
  const auto mesh = load_obj(oracle::data_path("chair.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  const Pose init = perturb_pose(gt, PerturbationConfig{deg2rad(5.0), 0.1, 3});
  RefinementConfig cfg;
  cfg.iterations = 60;
  cfg.record_trace = true;
  RefineOptions opts;
  opts.reference = gt;
  auto run = [&] {
    OraclePredictor oracle(mesh, gt, kCam256, OracleNoiseConfig{1.0, 0.1, 11});
    return refine(mesh, init, kCam256, oracle, nullptr, cfg, opts);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.final_pose.rotation, b.final_pose.rotation);
  EXPECT_EQ(a.final_pose.translation, b.final_pose.translation);
  EXPECT_EQ(trace_csv(a), trace_csv(b));
}

TEST(Refine, TraceHasOneEntryPerIterationPlusOne) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  OraclePredictor oracle(mesh, gt, kCam256);
  RefinementConfig cfg;
  cfg.iterations = 25;
  cfg.record_trace = true;
  RefineOptions opts;
  opts.reference = gt;
  const auto res = refine(mesh, perturb_pose(gt, PerturbationConfig{deg2rad(5.0), 0.1, 4}), kCam256, oracle, nullptr,
                          cfg, opts);
  ASSERT_EQ(res.trace.size(), 26u);
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    EXPECT_EQ(res.trace[i].iteration, int(i));
    EXPECT_TRUE(std::isfinite(res.trace[i].loss));
  }
  EXPECT_EQ(res.trace.back().pose.translation, res.final_pose.translation);
}

TEST(Refine, EmptyInitialRenderThrows) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  const Pose behind{Mat3::Identity(), Vec3(0, 0, -5)};
  OraclePredictor oracle(mesh, behind, kCam256);
  EXPECT_THROW(refine(mesh, behind, kCam256, oracle, nullptr, RefinementConfig{}), EmptyRenderAtStart);
}

TEST(Refine, PredictorFailurePropagates) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  FailingPredictor fail;
  EXPECT_THROW(refine(mesh, default_gt_pose(mesh, kCam256), kCam256, fail, nullptr, RefinementConfig{}),
               PredictorFailure);
}

TEST(Refine, RejectsInvalidConfig) {
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  ZeroPredictor zero;
  RefinementConfig cfg;
  cfg.adam_beta1 = 1.0;
  EXPECT_THROW(refine(mesh, default_gt_pose(mesh, kCam256), kCam256, zero, nullptr, cfg), InvalidArgument);
  cfg = RefinementConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(refine(mesh, default_gt_pose(mesh, kCam256), kCam256, zero, nullptr, cfg), InvalidArgument);
}

TEST(Refine, NoiselessCubeTrialTraces) {
  // The 50 seeded noiseless cube trials of the convergence experiment.
  const auto mesh = load_obj(oracle::data_path("cube.obj"));
  const Pose gt = default_gt_pose(mesh, kCam256);
  const PerturbationConfig pc{deg2rad(5.0), 0.1, 2024};
  RefinementConfig cfg;
  cfg.record_trace = true;
  RefineOptions opts;
  opts.reference = gt;
  const int trials = 50;
  int monotone = 0;
  int reduced = 0;
  for (int k = 0; k < trials; ++k) {
    OraclePredictor oracle(mesh, gt, kCam256);
    const auto res = refine(mesh, perturb_pose(gt, pc, std::uint64_t(k)), kCam256, oracle, nullptr, cfg, opts);
    ASSERT_EQ(res.trace.size(), 1001u);
    bool ok = true;
    for (std::size_t w = 0; w + 50 < res.trace.size() && ok; ++w) {
      ok = res.trace[w + 50].loss <= res.trace[w].loss + kLossFloor;
    }
    monotone += ok;
    const double l0 = reprojection_loss(mesh, res.trace.front().pose, gt, kCam256);
    const double l1 = reprojection_loss(mesh, res.trace.back().pose, gt, kCam256);
    reduced += l1 < 0.01 * l0;
  }
  // Non-increasing over every 50-iteration window in at least 95% of trials.
  EXPECT_GE(monotone, 48) << monotone << " of " << trials << " traces are monotone";
  // Final loss below 1% of the initial loss in at least 90% of trials.
  EXPECT_GE(reduced, 45) << reduced << " of " << trials;
}
