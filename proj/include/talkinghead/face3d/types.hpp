#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace th::face3d {

using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Triangle = std::array<int, 3>;

inline constexpr int kShBands = 3;
inline constexpr int kShCoefficients = kShBands * kShBands;  // per colour channel
inline constexpr int kGammaSize = 3 * kShCoefficients;       // R block, G block, B block
inline constexpr int kPoseSize = 6;

struct BasisDims {
  int id = 8;
  int exp = 6;
  int tex = 8;

  static constexpr BasisDims paper_scale() { return {80, 64, 80}; }
  [[nodiscard]] constexpr int total() const { return id + exp + tex + kGammaSize + kPoseSize; }
  bool operator==(const BasisDims&) const = default;
};

/// Head pose: Euler angles (pitch, yaw, roll) in radians, translation in model units.
struct Pose {
  Eigen::Vector3d angles = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  [[nodiscard]] Eigen::Matrix<double, 6, 1> as_vector() const;
  static Pose from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// One frame's morphable-model coefficients.
struct CoefficientSet {
  Eigen::VectorXd alpha;  // identity
  Eigen::VectorXd beta;   // expression
  Eigen::VectorXd delta;  // texture
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(kGammaSize);
  Pose pose;

  static CoefficientSet zeros(const BasisDims& dims);
  [[nodiscard]] BasisDims dims() const;
  // Order: alpha, beta, delta, gamma, (pitch, yaw, roll, tx, ty, tz).
  [[nodiscard]] Eigen::VectorXd flatten() const;
  static CoefficientSet unflatten(const BasisDims& dims, const Eigen::Ref<const Eigen::VectorXd>& flat);
  void validate(const BasisDims& dims) const;
};

struct FaceBasis {
  Eigen::VectorXd mean_shape;    // 3V, vertex-major (x0 y0 z0 x1 ...)
  Eigen::VectorXd mean_texture;  // 3V, RGB in [0,1]
  Eigen::MatrixXd id;            // 3V x D_id
  Eigen::MatrixXd exp;           // 3V x D_exp
  Eigen::MatrixXd tex;           // 3V x D_tex
  std::vector<Triangle> triangles;

  [[nodiscard]] int vertex_count() const { return static_cast<int>(mean_shape.size() / 3); }
  [[nodiscard]] BasisDims dims() const {
    return {static_cast<int>(id.cols()), static_cast<int>(exp.cols()), static_cast<int>(tex.cols())};
  }
  void validate() const;
};

struct FaceMesh {
  VertexMatrix positions;
  VertexMatrix albedo;
  VertexMatrix normals;
  std::vector<Triangle> triangles;

  [[nodiscard]] int vertex_count() const { return static_cast<int>(positions.rows()); }
};

/// Pinhole camera looking down +z; image y grows downwards.
struct Camera {
  double focal = 1.0;
  Eigen::Vector2d principal = Eigen::Vector2d::Zero();
  int width = 0;
  int height = 0;

  // Centered principal point, focal scaled to the image width.
  static Camera for_image(int width, int height, double focal_over_width = 2.0);
  void validate() const;
};

}  // namespace th::face3d
