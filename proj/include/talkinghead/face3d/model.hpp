#pragma once

#include <array>
#include <span>
#include <vector>

#include "talkinghead/face3d/types.hpp"

namespace th::face3d {

/// S = S_mean + B_id * alpha + B_exp * beta, reshaped to V x 3.
VertexMatrix assemble_shape(const FaceBasis& basis, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta);

/// T = T_mean + B_tex * delta, clamped to [0,1], reshaped to V x 3.
VertexMatrix assemble_texture(const FaceBasis& basis, const Eigen::VectorXd& delta);

/// Area-weighted unit vertex normals.
VertexMatrix vertex_normals(const VertexMatrix& positions, const std::vector<Triangle>& triangles);

FaceMesh build_mesh(const FaceBasis& basis, const CoefficientSet& coeffs);

/// Real SH basis, bands 0..2, ordered (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
std::array<double, kShCoefficients> sh_basis(const Eigen::Vector3d& unit_normal);

/// Per-channel shading factor sum_b gamma_b * Phi_b(n). Requires a unit normal.
Eigen::Vector3d sh_shading(const Eigen::Vector3d& normal, std::span<const double> gamma);

/// C(n, t, gamma) = t * sum_b gamma_b * Phi_b(n), per channel.
Eigen::Vector3d sh_irradiance(const Eigen::Vector3d& normal, const Eigen::Vector3d& albedo,
                              std::span<const double> gamma);

/// R = Rz(roll) * Rx(pitch) * Ry(yaw): intrinsic rotations about Z, then X, then Y.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& angles);

struct Projection {
  Eigen::Matrix<double, Eigen::Dynamic, 2> pixels;
  Eigen::VectorXd depth;       // camera-space z
  std::vector<bool> in_front;  // depth > 0; vertices behind the camera are flagged, not fatal
};

/// Camera-space vertices R * v + t.
VertexMatrix transform(const VertexMatrix& vertices, const Pose& pose);

Projection project(const VertexMatrix& vertices, const Pose& pose, const Camera& camera);

}  // namespace th::face3d
