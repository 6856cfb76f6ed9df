#pragma once

#include <vector>

#include "gcf/field.hpp"
#include "gcf/geometry.hpp"
#include "gcf/raster.hpp"

namespace gcf {

/// Image-space gradient of every projected vertex, with the accumulated
/// weight sum(w_att * w_bar) it was normalized by. Unsupported vertices
/// (support == 0) carry a zero gradient.
struct VertexGradients {
  std::vector<Vec2> grad;
  std::vector<double> support;

  std::size_t size() const { return grad.size(); }
  bool supported(std::size_t i) const { return support[i] > 0.0; }
  std::vector<int> supported_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] > 0.0) out.push_back(static_cast<int>(i));
    }
    return out;
  }
};

/// Tangent-space pose gradient, (omega, dt) order. Points along the
/// displacement field, i.e. it is the negative gradient of the reprojection
/// loss when the field is exact.
struct PoseGradient {
  Vec6 g = Vec6::Zero();
};

/// Disperses each pixel's displacement to the corners of its visible
/// triangle with weight w_att * w_bar and normalizes per vertex. Pixels are
/// visited in row-major order, so the result is deterministic.
inline VertexGradients vertex_gradients(const CorrespondenceField& field, const AttentionMask& att,
                                        const RenderBuffers& buffers, const TriangleMesh& mesh) {
  if (!field.du.same_shape(buffers.mask) || !field.dv.same_shape(buffers.mask) ||
      !field.valid.same_shape(buffers.mask) || !att.weight.same_shape(buffers.mask)) {
    throw DimensionMismatch("field, attention and render buffers differ in size");
  }
  if (buffers.triangle_count != mesh.triangles.size()) {
    throw DimensionMismatch("render buffers were produced from a different mesh");
  }
  std::vector<Vec2> sum(mesh.vertices.size(), Vec2::Zero());
  std::vector<double> weight(mesh.vertices.size(), 0.0);
  const auto& box = buffers.coverage;
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      const int t = buffers.index_map(x, y);
      if (t < 0 || !field.valid(x, y) || !att.weight(x, y)) continue;
      const auto& tri = mesh.triangles[std::size_t(t)];
      const Vec3& b = buffers.bary(x, y);
      const Vec2 d = field.at(x, y);
      for (int k = 0; k < 3; ++k) {
        sum[tri[k]] += b[k] * d;
        weight[tri[k]] += b[k];
      }
    }
  }
  VertexGradients out;
  out.grad.assign(mesh.vertices.size(), Vec2::Zero());
  out.support.assign(mesh.vertices.size(), 0.0);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (weight[i] > 0.0) {
      out.grad[i] = sum[i] / weight[i];
      out.support[i] = weight[i];
    }
  }
  return out;
}

/// Sum of J_i^T grad_i over supported vertices; vertices behind the near
/// plane are skipped.
inline PoseGradient pose_gradient(const VertexGradients& vgrads, const TriangleMesh& mesh, const Pose& pose,
                                  const CameraIntrinsics& cam) {
  if (vgrads.size() != mesh.vertices.size() || vgrads.support.size() != mesh.vertices.size()) {
    throw DimensionMismatch("vertex gradients do not match the mesh");
  }
  PoseGradient out;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (!vgrads.supported(i)) continue;
    const auto jac = try_projection_jacobian(mesh.vertices[i], pose, cam);
    if (!jac) continue;
    out.g += jac->transpose() * vgrads.grad[i];
  }
  return out;
}

}  // namespace gcf
