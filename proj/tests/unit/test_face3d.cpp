#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/basis.hpp"
#include "talkinghead/face3d/fit.hpp"
#include "talkinghead/face3d/model.hpp"
#include "test_util.hpp"

namespace {

using namespace th::face3d;

Eigen::VectorXd randn(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

// Four-vertex toy basis with arbitrary (non-orthonormal) columns.
FaceBasis toy_basis(std::mt19937_64& rng) {
  FaceBasis b;
  b.mean_shape = randn(12, rng);
  b.mean_texture = Eigen::VectorXd::Constant(12, 0.5);
  b.id = Eigen::MatrixXd::NullaryExpr(12, 3, [&] { return std::normal_distribution<double>()(rng); });
  b.exp = Eigen::MatrixXd::NullaryExpr(12, 2, [&] { return std::normal_distribution<double>()(rng); });
  b.tex = Eigen::MatrixXd::NullaryExpr(12, 2, [&] { return 0.1 * std::normal_distribution<double>()(rng); });
  b.triangles = {{0, 1, 2}, {0, 2, 3}};
  return b;
}

const FaceBasis& default_basis() {
  static const FaceBasis b = make_synthetic_basis();
  return b;
}

TEST(CoefficientSet, PaperScaleDimension) {
  EXPECT_EQ(BasisDims::paper_scale().total(), 257);
  const auto c = CoefficientSet::zeros(BasisDims::paper_scale());
  EXPECT_EQ(c.flatten().size(), 257);
  const auto back = CoefficientSet::unflatten(BasisDims::paper_scale(), c.flatten());
  EXPECT_EQ(back.flatten(), c.flatten());
}

TEST(CoefficientSet, FlattenRoundTripAndValidation) {
  std::mt19937_64 rng(1);
  const BasisDims dims{};
  const Eigen::VectorXd flat = randn(dims.total(), rng, 0.3);
  const auto c = CoefficientSet::unflatten(dims, flat);
  EXPECT_EQ(c.flatten(), flat);
  EXPECT_NO_THROW(c.validate(dims));
  auto bad = c;
  bad.pose.angles[1] = 4.0;
  EXPECT_THROW(bad.validate(dims), th::ValidationError);
  EXPECT_THROW(c.validate(BasisDims{9, 6, 8}), th::ConfigError);
}

TEST(CoefficientSet, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(0.3 + 4 * std::numbers::pi), 0.3, 1e-12);
}

TEST(SyntheticBasis, DefaultShapeAndOrthonormality) {
  const FaceBasis& b = default_basis();
  EXPECT_EQ(b.vertex_count(), 642);
  EXPECT_EQ(b.dims(), BasisDims{});
  EXPECT_NO_THROW(b.validate());
  for (const Eigen::MatrixXd* m : {&b.id, &b.exp, &b.tex}) {
    const Eigen::MatrixXd g = m->transpose() * *m;
    EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-9);
  }
  // Identity and expression modes together are orthonormal as well.
  Eigen::MatrixXd both(b.id.rows(), b.id.cols() + b.exp.cols());
  both << b.id, b.exp;
  const Eigen::MatrixXd g = both.transpose() * both;
  EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-9);
  for (int i = 0; i < b.vertex_count(); ++i) EXPECT_NEAR(b.mean_shape.segment<3>(3 * i).norm(), 1.0, 1e-9);
}

TEST(SyntheticBasis, PaperScaleDimsAccepted) {
  SyntheticBasisConfig cfg;
  cfg.dims = BasisDims::paper_scale();
  cfg.smoothing_iterations = 2;
  const FaceBasis b = make_synthetic_basis(cfg);
  EXPECT_EQ(b.dims(), BasisDims::paper_scale());
  std::mt19937_64 rng(2);
  const VertexMatrix s = assemble_shape(b, randn(80, rng), randn(64, rng));
  EXPECT_EQ(s.size(), 3 * b.vertex_count());
  EXPECT_EQ(assemble_texture(b, randn(80, rng, 0.01)).rows(), b.vertex_count());
}

TEST(SyntheticBasis, SaveLoadRoundTrip) {
  th::test::TempDir dir("basis");
  const FaceBasis& b = default_basis();
  save_basis(b, dir.file("b.bin"));
  const FaceBasis r = load_basis(dir.file("b.bin"));
  EXPECT_EQ(r.triangles, b.triangles);
  EXPECT_LT((r.id - b.id).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((r.mean_shape - b.mean_shape).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SyntheticBasis, ObjExport) {
  th::test::TempDir dir("obj");
  const FaceMesh mesh = build_mesh(default_basis(), CoefficientSet::zeros(BasisDims{}));
  export_obj(mesh, dir.file("m.obj"));
  std::ifstream in(dir.file("m.obj"));
  std::string line;
  int v = 0, f = 0, vc = 0;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
    if (line.rfind("#vc ", 0) == 0) ++vc;
  }
  EXPECT_EQ(v, mesh.vertex_count());
  EXPECT_EQ(vc, mesh.vertex_count());
  EXPECT_EQ(f, static_cast<int>(mesh.triangles.size()));
}

TEST(AssembleShape, ZeroCoefficientsGiveMean) {
  const FaceBasis& b = default_basis();
  const VertexMatrix s = assemble_shape(b, Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(6));
  for (int i = 0; i < b.vertex_count(); ++i)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(s(i, k), b.mean_shape[3 * i + k]);
}

TEST(AssembleShape, MatchesHandProductOnToyBasis) {
  std::mt19937_64 rng(5);
  const FaceBasis b = toy_basis(rng);
  const Eigen::VectorXd a = randn(3, rng), e = randn(2, rng);
  const VertexMatrix s = assemble_shape(b, a, e);
  for (int v = 0; v < 4; ++v)
    for (int k = 0; k < 3; ++k) {
      const int row = 3 * v + k;
      double want = b.mean_shape[row];
      for (int j = 0; j < 3; ++j) want += b.id(row, j) * a[j];
      for (int j = 0; j < 2; ++j) want += b.exp(row, j) * e[j];
      EXPECT_NEAR(s(v, k), want, 1e-12);
    }
  EXPECT_THROW(assemble_shape(b, randn(4, rng), e), th::ConfigError);
}

TEST(AssembleShape, LinearInIdentity) {
  const FaceBasis& b = default_basis();
  std::mt19937_64 rng(6);
  const Eigen::VectorXd a1 = randn(8, rng), a2 = randn(8, rng), e = randn(6, rng);
  const VertexMatrix lhs = assemble_shape(b, a1 + a2, e);
  const Eigen::VectorXd shift = b.id * a2;
  VertexMatrix rhs = assemble_shape(b, a1, e);
  for (int i = 0; i < b.vertex_count(); ++i) rhs.row(i) += shift.segment<3>(3 * i).transpose();
  EXPECT_LT((lhs - rhs).norm() / lhs.norm(), 1e-9);
}

TEST(AssembleTexture, ZeroAndHandProductAndClamp) {
  const FaceBasis& b = default_basis();
  const VertexMatrix t0 = assemble_texture(b, Eigen::VectorXd::Zero(8));
  for (int i = 0; i < b.vertex_count(); ++i)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(t0(i, k), b.mean_texture[3 * i + k]);

  std::mt19937_64 rng(7);
  const FaceBasis tb = toy_basis(rng);
  const Eigen::VectorXd d = randn(2, rng);
  const VertexMatrix t = assemble_texture(tb, d);
  for (int v = 0; v < 4; ++v)
    for (int k = 0; k < 3; ++k) {
      const int row = 3 * v + k;
      const double raw = tb.mean_texture[row] + tb.tex(row, 0) * d[0] + tb.tex(row, 1) * d[1];
      EXPECT_NEAR(t(v, k), std::clamp(raw, 0.0, 1.0), 1e-12);
    }
  const VertexMatrix big = assemble_texture(b, Eigen::VectorXd::Constant(8, 50.0));
  EXPECT_GE(big.minCoeff(), 0.0);
  EXPECT_LE(big.maxCoeff(), 1.0);
  EXPECT_THROW(assemble_texture(b, Eigen::VectorXd::Zero(3)), th::ConfigError);
}

TEST(Mesh, NormalsAreUnitAndOutwardOnSphere) {
  const FaceMesh mesh = build_mesh(default_basis(), CoefficientSet::zeros(BasisDims{}));
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    EXPECT_NEAR(mesh.normals.row(i).norm(), 1.0, 1e-6);
    EXPECT_GT(mesh.normals.row(i).dot(mesh.positions.row(i)), 0.95);
  }
}

// Real SH in spherical coordinates via associated Legendre polynomials, no Condon-Shortley phase.
double sh_oracle(int l, int m, const Eigen::Vector3d& n) {
  const double theta = std::acos(std::clamp(n.z(), -1.0, 1.0));
  const double phi = std::atan2(n.y(), n.x());
  const double x = std::cos(theta), s = std::sin(theta);
  const int am = std::abs(m);
  double p = 0.0;
  if (l == 0) p = 1.0;
  if (l == 1) p = am == 0 ? x : s;
  if (l == 2) p = am == 0 ? 0.5 * (3 * x * x - 1) : am == 1 ? 3 * x * s : 3 * s * s;
  double fact_ratio = 1.0;  // (l-|m|)! / (l+|m|)!
  for (int k = l - am + 1; k <= l + am; ++k) fact_ratio /= k;
  const double norm = std::sqrt((2 * l + 1) / (4 * std::numbers::pi) * fact_ratio);
  if (m == 0) return norm * p;
  if (m > 0) return std::sqrt(2.0) * norm * p * std::cos(m * phi);
  return std::sqrt(2.0) * norm * p * std::sin(am * phi);
}

TEST(ShIrradiance, ZeroGammaIsBlack) {
  const std::vector<double> gamma(kGammaSize, 0.0);
  const Eigen::Vector3d c = sh_irradiance(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0.3, 0.5, 0.9), gamma);
  EXPECT_EQ(c, Eigen::Vector3d::Zero());
}

TEST(ShIrradiance, ConstantBandIsDirectionIndependent) {
  std::vector<double> gamma(kGammaSize, 0.0);
  gamma[0] = 0.7;
  gamma[9] = 1.1;
  gamma[18] = -0.4;
  const double phi0 = 0.5 / std::sqrt(std::numbers::pi);
  const Eigen::Vector3d albedo(0.2, 0.6, 0.8);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d n = randn(3, rng).normalized();
    const Eigen::Vector3d c = sh_irradiance(n, albedo, gamma);
    EXPECT_NEAR(c[0], 0.2 * 0.7 * phi0, 1e-12);
    EXPECT_NEAR(c[1], 0.6 * 1.1 * phi0, 1e-12);
    EXPECT_NEAR(c[2], 0.8 * -0.4 * phi0, 1e-12);
  }
}

TEST(ShIrradiance, MatchesSphericalCoordinateOracle) {
  const int lm[9][2] = {{0, 0}, {1, -1}, {1, 0}, {1, 1}, {2, -2}, {2, -1}, {2, 0}, {2, 1}, {2, 2}};
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Vector3d n = randn(3, rng).normalized();
    const auto phi = sh_basis(n);
    for (int b = 0; b < 9; ++b) EXPECT_NEAR(phi[b], sh_oracle(lm[b][0], lm[b][1], n), 1e-12);

    const Eigen::VectorXd gamma = randn(kGammaSize, rng);
    const Eigen::Vector3d albedo = Eigen::Vector3d::Random().cwiseAbs();
    const Eigen::Vector3d c = sh_irradiance(n, albedo, {gamma.data(), static_cast<std::size_t>(gamma.size())});
    for (int ch = 0; ch < 3; ++ch) {
      double want = 0.0;
      for (int b = 0; b < 9; ++b) want += gamma[ch * 9 + b] * sh_oracle(lm[b][0], lm[b][1], n);
      EXPECT_NEAR(c[ch], albedo[ch] * want, 1e-10);
    }
  }
}

TEST(ShIrradiance, LinearInAlbedoAndGamma) {
  std::mt19937_64 rng(10);
  const Eigen::Vector3d n = randn(3, rng).normalized();
  const Eigen::VectorXd g1 = randn(27, rng), g2 = randn(27, rng);
  const Eigen::Vector3d a1(0.1, 0.2, 0.3), a2(0.4, 0.1, 0.2);
  auto irr = [&](const Eigen::Vector3d& a, const Eigen::VectorXd& g) {
    return sh_irradiance(n, a, {g.data(), static_cast<std::size_t>(g.size())});
  };
  const Eigen::VectorXd gsum = g1 + 2.0 * g2;
  EXPECT_LT((irr(a1, gsum) - (irr(a1, g1) + 2.0 * irr(a1, g2))).norm(), 1e-12);
  EXPECT_LT((irr(a1 + a2, g1) - (irr(a1, g1) + irr(a2, g1))).norm(), 1e-12);
}

TEST(ShIrradiance, NonUnitNormalRejected) {
  const std::vector<double> gamma(kGammaSize, 0.1);
  EXPECT_THROW(sh_irradiance(Eigen::Vector3d(0, 0, 1.1), Eigen::Vector3d::Ones(), gamma), th::ValidationError);
  EXPECT_THROW(sh_irradiance(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::Ones(), std::vector<double>(5)),
               th::ConfigError);
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const Camera cam = Camera::for_image(64, 48);
  VertexMatrix v(1, 3);
  v << 0.0, 0.0, 0.0;
  Pose pose;
  pose.translation = Eigen::Vector3d(0, 0, 5);
  const Projection p = project(v, pose, cam);
  EXPECT_DOUBLE_EQ(p.pixels(0, 0), 32.0);
  EXPECT_DOUBLE_EQ(p.pixels(0, 1), 24.0);
  EXPECT_DOUBLE_EQ(p.depth[0], 5.0);
  EXPECT_TRUE(p.in_front[0]);
}

TEST(Project, YawOfPiMirrorsX) {
  const Camera cam = Camera::for_image(64, 64);
  VertexMatrix v(3, 3);
  v << 0.3, 0.1, 0.0, -0.5, 0.2, 0.0, 0.1, -0.4, 0.0;
  Pose p0, p1;
  p0.translation = p1.translation = Eigen::Vector3d(0, 0, 6);
  p1.angles = Eigen::Vector3d(0, std::numbers::pi, 0);
  const Projection a = project(v, p0, cam), b = project(v, p1, cam);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(b.pixels(i, 0) - 32.0, -(a.pixels(i, 0) - 32.0), 1e-9);
    EXPECT_NEAR(b.pixels(i, 1), a.pixels(i, 1), 1e-9);
  }
}

// Rotation composed from explicit elementary matrices, then a pinhole projection.
TEST(Project, MatchesHandComposedOracle) {
  const Camera cam = Camera::for_image(80, 60, 1.7);
  std::mt19937_64 rng(11);
  VertexMatrix v(3, 3);
  for (int i = 0; i < 9; ++i) v(i / 3, i % 3) = std::normal_distribution<double>(0, 0.5)(rng);
  Pose pose;
  pose.angles = Eigen::Vector3d(0.3, -0.7, 0.4);
  pose.translation = Eigen::Vector3d(0.2, -0.1, 7.0);
  const double cp = std::cos(0.3), sp = std::sin(0.3), cy = std::cos(-0.7), sy = std::sin(-0.7),
               cr = std::cos(0.4), sr = std::sin(0.4);
  Eigen::Matrix3d rx, ry, rz;
  rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
  const Eigen::Matrix3d r = rz * rx * ry;
  EXPECT_LT((rotation_matrix(pose.angles) - r).norm(), 1e-12);
  const Projection p = project(v, pose, cam);
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d c = r * v.row(i).transpose() + pose.translation;
    EXPECT_NEAR(p.pixels(i, 0), 40.0 + cam.focal * c.x() / c.z(), 1e-9);
    EXPECT_NEAR(p.pixels(i, 1), 30.0 - cam.focal * c.y() / c.z(), 1e-9);
    EXPECT_NEAR(p.depth[i], c.z(), 1e-12);
  }
}

TEST(Project, BehindCameraIsFlaggedNotThrown) {
  VertexMatrix v(2, 3);
  v << 0, 0, -10, 0, 0, 0;
  Pose pose;
  pose.translation = Eigen::Vector3d(0, 0, 5);
  const Projection p = project(v, pose, Camera::for_image(32, 32));
  EXPECT_FALSE(p.in_front[0]);
  EXPECT_TRUE(p.in_front[1]);
}

TEST(Project, InvariantUnderFocalAndDepthScaling) {
  const FaceBasis& b = default_basis();
  const VertexMatrix s = assemble_shape(b, Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(6));
  Camera cam = Camera::for_image(64, 64);
  Pose pose;
  pose.angles = Eigen::Vector3d(0.1, 0.2, -0.05);
  pose.translation = Eigen::Vector3d(0, 0, 6);
  const Projection a = project(s, pose, cam);
  // Scaling the scene about the camera centre: vertices and translation by k, focal unchanged,
  // equals scaling depth by k together with focal by k on the original x/y.
  const double k = 2.5;
  Camera cam2 = cam;
  cam2.focal *= k;
  const VertexMatrix cs = transform(s, pose);
  for (int i = 0; i < s.rows(); ++i) {
    const double x = cam2.principal.x() + cam2.focal * cs(i, 0) / (k * cs(i, 2));
    EXPECT_NEAR(x, a.pixels(i, 0), 1e-6);
  }
  std::vector<int> order_a(s.rows()), order_b(s.rows());
  std::iota(order_a.begin(), order_a.end(), 0);
  order_b = order_a;
  std::sort(order_a.begin(), order_a.end(), [&](int x, int y) { return a.depth[x] < a.depth[y]; });
  std::sort(order_b.begin(), order_b.end(), [&](int x, int y) { return k * cs(x, 2) < k * cs(y, 2); });
  EXPECT_EQ(order_a, order_b);
}

TEST(Camera, Validation) {
  Camera c = Camera::for_image(32, 32);
  EXPECT_NO_THROW(c.validate());
  c.focal = 0;
  EXPECT_THROW(c.validate(), th::ConfigError);
  c = Camera::for_image(32, 32);
  c.principal = Eigen::Vector2d(40, 10);
  EXPECT_THROW(c.validate(), th::ConfigError);
}

struct FitCase {
  Eigen::Matrix<double, Eigen::Dynamic, 2> landmarks;
  std::vector<int> ids;
};

FitCase synth_landmarks(const FaceBasis& b, const Eigen::VectorXd& a, const Eigen::VectorXd& e, const Pose& p,
                        const Camera& cam) {
  FitCase fc;
  fc.ids = face_landmark_indices(b, 68);
  const Projection pr = project(assemble_shape(b, a, e), p, cam);
  fc.landmarks.resize(static_cast<Eigen::Index>(fc.ids.size()), 2);
  for (std::size_t i = 0; i < fc.ids.size(); ++i) fc.landmarks.row(static_cast<Eigen::Index>(i)) = pr.pixels.row(fc.ids[i]);
  return fc;
}

TEST(FitToLandmarks, RecoversPoseFromSyntheticLandmarks) {
  const FaceBasis& b = default_basis();
  const Camera cam = Camera::for_image(256, 256);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 3; ++trial) {
    const Eigen::VectorXd a = randn(8, rng, 0.5), e = randn(6, rng, 0.5);
    Pose p;
    p.angles = randn(3, rng, 0.15);
    p.translation = Eigen::Vector3d(0.1, -0.05, 6.0) + randn(3, rng, 0.05);
    const FitCase fc = synth_landmarks(b, a, e, p, cam);
    const FitResult r = fit_to_landmarks(fc.landmarks, fc.ids, b, cam);
    EXPECT_LT(r.rmse_px, 0.5);
    EXPECT_LT((r.coefficients.pose.angles - p.angles).cwiseAbs().maxCoeff(), 1e-3) << "trial " << trial;
    EXPECT_FALSE(r.warning);
  }
}

TEST(FitToLandmarks, ZeroCoefficientsStayNearZero) {
  const FaceBasis& b = default_basis();
  const Camera cam = Camera::for_image(256, 256);
  Pose p;
  p.translation = Eigen::Vector3d(0, 0, 6);
  const FitCase fc = synth_landmarks(b, Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(6), p, cam);
  const FitResult r = fit_to_landmarks(fc.landmarks, fc.ids, b, cam);
  EXPECT_LT(r.coefficients.alpha.norm(), 1e-3);
  EXPECT_LT(r.coefficients.beta.norm(), 1e-3);
  EXPECT_LT(r.rmse_px, 0.5);
}

TEST(FitToLandmarks, TooFewLandmarks) {
  const FaceBasis& b = default_basis();
  Eigen::Matrix<double, Eigen::Dynamic, 2> lm(5, 2);
  lm.setConstant(10.0);
  EXPECT_THROW(fit_to_landmarks(lm, {0, 1, 2, 3, 4}, b, Camera::for_image(64, 64)), th::PreconditionError);
}

TEST(FitToLandmarks, ExhaustedBudgetSetsWarning) {
  const FaceBasis& b = default_basis();
  const Camera cam = Camera::for_image(256, 256);
  Pose p;
  p.angles = Eigen::Vector3d(0.2, -0.3, 0.1);
  p.translation = Eigen::Vector3d(0, 0, 6);
  std::mt19937_64 rng(13);
  const FitCase fc = synth_landmarks(b, randn(8, rng), randn(6, rng), p, cam);
  FitOptions opt;
  opt.max_iterations = 1;
  const FitResult r = fit_to_landmarks(fc.landmarks, fc.ids, b, cam, opt);
  EXPECT_TRUE(r.warning);
  EXPECT_TRUE(std::isfinite(r.rmse_px));
}

}  // namespace
