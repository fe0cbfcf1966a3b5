#include "talkinghead/face3d/model.hpp"

#include <cmath>
#include <numbers>

#include "talkinghead/error.hpp"

namespace th::face3d {

namespace {

VertexMatrix to_vertices(const Eigen::VectorXd& flat) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(flat.data(), flat.size() / 3, 3);
}

}  // namespace

VertexMatrix assemble_shape(const FaceBasis& basis, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
  if (alpha.size() != basis.id.cols() || beta.size() != basis.exp.cols())
    throw ConfigError("assemble_shape: coefficient dims (" + std::to_string(alpha.size()) + ", " +
                      std::to_string(beta.size()) + ") do not match basis (" + std::to_string(basis.id.cols()) +
                      ", " + std::to_string(basis.exp.cols()) + ")");
  const Eigen::VectorXd s = basis.mean_shape + basis.id * alpha + basis.exp * beta;
  return to_vertices(s);
}

VertexMatrix assemble_texture(const FaceBasis& basis, const Eigen::VectorXd& delta) {
  if (delta.size() != basis.tex.cols())
    throw ConfigError("assemble_texture: delta has " + std::to_string(delta.size()) + " entries, basis has " +
                      std::to_string(basis.tex.cols()));
  const Eigen::VectorXd t = (basis.mean_texture + basis.tex * delta).cwiseMax(0.0).cwiseMin(1.0);
  return to_vertices(t);
}

VertexMatrix vertex_normals(const VertexMatrix& positions, const std::vector<Triangle>& triangles) {
  VertexMatrix n = VertexMatrix::Zero(positions.rows(), 3);
  for (const auto& t : triangles) {
    const Eigen::Vector3d a = positions.row(t[0]);
    const Eigen::Vector3d b = positions.row(t[1]);
    const Eigen::Vector3d c = positions.row(t[2]);
    const Eigen::Vector3d fn = (b - a).cross(c - a);
    for (int idx : t) n.row(idx) += fn.transpose();
  }
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    const double len = n.row(i).norm();
    if (len > 0) n.row(i) /= len;
    else n.row(i) = Eigen::RowVector3d(0, 0, -1);
  }
  return n;
}

FaceMesh build_mesh(const FaceBasis& basis, const CoefficientSet& coeffs) {
  FaceMesh mesh;
  mesh.positions = assemble_shape(basis, coeffs.alpha, coeffs.beta);
  mesh.albedo = assemble_texture(basis, coeffs.delta);
  mesh.normals = vertex_normals(mesh.positions, basis.triangles);
  mesh.triangles = basis.triangles;
  return mesh;
}

std::array<double, kShCoefficients> sh_basis(const Eigen::Vector3d& n) {
  const double pi = std::numbers::pi;
  const double c0 = 0.5 * std::sqrt(1.0 / pi);
  const double c1 = std::sqrt(3.0 / (4.0 * pi));
  const double c2 = 0.5 * std::sqrt(15.0 / pi);
  const double c20 = 0.25 * std::sqrt(5.0 / pi);
  const double c22 = 0.25 * std::sqrt(15.0 / pi);
  const double x = n.x(), y = n.y(), z = n.z();
  return {c0,
          c1 * y,
          c1 * z,
          c1 * x,
          c2 * x * y,
          c2 * y * z,
          c20 * (3.0 * z * z - 1.0),
          c2 * x * z,
          c22 * (x * x - y * y)};
}

Eigen::Vector3d sh_shading(const Eigen::Vector3d& normal, std::span<const double> gamma) {
  if (gamma.size() != static_cast<std::size_t>(kGammaSize))
    throw ConfigError("SH gamma must have 27 entries");
  if (std::abs(normal.norm() - 1.0) > 1e-6) throw ValidationError("sh_irradiance: normal is not unit length");
  const auto phi = sh_basis(normal);
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < kShCoefficients; ++b) s[c] += gamma[static_cast<std::size_t>(c * kShCoefficients + b)] * phi[b];
  return s;
}

Eigen::Vector3d sh_irradiance(const Eigen::Vector3d& normal, const Eigen::Vector3d& albedo,
                              std::span<const double> gamma) {
  return albedo.cwiseProduct(sh_shading(normal, gamma));
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& angles) {
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(angles[0], Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(angles[1], Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(angles[2], Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return rz * rx * ry;
}

VertexMatrix transform(const VertexMatrix& vertices, const Pose& pose) {
  const Eigen::Matrix3d r = rotation_matrix(pose.angles);
  VertexMatrix out = vertices * r.transpose();
  out.rowwise() += pose.translation.transpose();
  return out;
}

Projection project(const VertexMatrix& vertices, const Pose& pose, const Camera& camera) {
  camera.validate();
  const VertexMatrix cam = transform(vertices, pose);
  Projection p;
  p.pixels.resize(cam.rows(), 2);
  p.depth = cam.col(2);
  p.in_front.resize(static_cast<std::size_t>(cam.rows()));
  for (Eigen::Index i = 0; i < cam.rows(); ++i) {
    const double z = cam(i, 2);
    p.in_front[static_cast<std::size_t>(i)] = z > 0.0;
    if (z > 0.0) {
      p.pixels(i, 0) = camera.principal.x() + camera.focal * cam(i, 0) / z;
      p.pixels(i, 1) = camera.principal.y() - camera.focal * cam(i, 1) / z;
    } else {
      p.pixels(i, 0) = std::numeric_limits<double>::quiet_NaN();
      p.pixels(i, 1) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return p;
}

}  // namespace th::face3d
