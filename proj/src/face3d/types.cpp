#include "talkinghead/face3d/types.hpp"

#include <cmath>
#include <numbers>

#include "talkinghead/error.hpp"

namespace th::face3d {

Eigen::Matrix<double, 6, 1> Pose::as_vector() const {
  Eigen::Matrix<double, 6, 1> v;
  v << angles, translation;
  return v;
}

Pose Pose::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != kPoseSize) throw ConfigError("pose vector must have 6 entries");
  Pose p;
  p.angles = v.head<3>();
  p.translation = v.tail<3>();
  return p;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

CoefficientSet CoefficientSet::zeros(const BasisDims& dims) {
  CoefficientSet c;
  c.alpha = Eigen::VectorXd::Zero(dims.id);
  c.beta = Eigen::VectorXd::Zero(dims.exp);
  c.delta = Eigen::VectorXd::Zero(dims.tex);
  return c;
}

BasisDims CoefficientSet::dims() const {
  return {static_cast<int>(alpha.size()), static_cast<int>(beta.size()), static_cast<int>(delta.size())};
}

Eigen::VectorXd CoefficientSet::flatten() const {
  const BasisDims d = dims();
  Eigen::VectorXd v(d.total());
  v << alpha, beta, delta, gamma, pose.angles, pose.translation;
  return v;
}

CoefficientSet CoefficientSet::unflatten(const BasisDims& dims, const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != dims.total())
    throw ConfigError("coefficient vector has " + std::to_string(flat.size()) + " entries, expected " +
                      std::to_string(dims.total()));
  CoefficientSet c;
  int o = 0;
  c.alpha = flat.segment(o, dims.id);
  o += dims.id;
  c.beta = flat.segment(o, dims.exp);
  o += dims.exp;
  c.delta = flat.segment(o, dims.tex);
  o += dims.tex;
  c.gamma = flat.segment(o, kGammaSize);
  o += kGammaSize;
  c.pose.angles = flat.segment<3>(o);
  c.pose.translation = flat.segment<3>(o + 3);
  return c;
}

void CoefficientSet::validate(const BasisDims& d) const {
  if (alpha.size() != d.id || beta.size() != d.exp || delta.size() != d.tex || gamma.size() != kGammaSize)
    throw ConfigError("coefficient dimensions do not match the basis");
  for (int i = 0; i < 3; ++i) {
    const double a = pose.angles[i];
    if (!(a > -std::numbers::pi && a <= std::numbers::pi))
      throw ValidationError("Euler angle outside (-pi, pi]");
  }
}

void FaceBasis::validate() const {
  const auto n = mean_shape.size();
  if (n == 0 || n % 3 != 0) throw ConfigError("basis: mean shape must hold 3V entries");
  if (mean_texture.size() != n) throw ConfigError("basis: mean texture size mismatch");
  if (id.rows() != n || exp.rows() != n || tex.rows() != n) throw ConfigError("basis: basis row count mismatch");
  const int v = vertex_count();
  for (const auto& t : triangles)
    for (int idx : t)
      if (idx < 0 || idx >= v) throw ConfigError("basis: triangle index out of range");
}

Camera Camera::for_image(int width, int height, double focal_over_width) {
  Camera c;
  c.width = width;
  c.height = height;
  c.focal = focal_over_width * width;
  c.principal = Eigen::Vector2d(width / 2.0, height / 2.0);
  c.validate();
  return c;
}

void Camera::validate() const {
  if (!(focal > 0.0)) throw ConfigError("camera focal length must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (principal.x() < 0 || principal.x() > width || principal.y() < 0 || principal.y() > height)
    throw ConfigError("camera principal point outside the image");
}

}  // namespace th::face3d
