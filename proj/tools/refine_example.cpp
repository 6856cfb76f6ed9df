// Refines a perturbed pose of a mesh against the exact oracle and prints the
// error before and after.
#include <cstdio>

#include "gcf/benchmark.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: refine_example mesh.obj [seed]\n");
    return 1;
  }
  const auto mesh = gcf::load_obj(argv[1]);
  const gcf::CameraIntrinsics cam;
  const gcf::Pose gt = gcf::default_gt_pose(mesh, cam);

  gcf::PerturbationConfig perturbation;
  perturbation.seed = argc > 2 ? std::stoull(argv[2]) : 0;
  const gcf::Pose init = gcf::perturb_pose(gt, perturbation);

  gcf::OraclePredictor oracle(mesh, gt, cam);
  const auto result = gcf::refine(mesh, init, cam, oracle, nullptr, gcf::RefinementConfig{});

  for (const auto& [label, pose] : {std::pair{"initial", init}, std::pair{"final", result.final_pose}}) {
    const auto e = gcf::evaluate(mesh, gt, pose, cam);
    std::printf("%-8s e_R=%.6g deg  e_t=%.3g  e_Rt=%.3g  e_P=%.3g\n", label, gcf::rad2deg(e.e_R), e.e_t, e.e_Rt, e.e_P);
  }
  return 0;
}
