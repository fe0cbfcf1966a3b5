#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/basis.hpp"
#include "talkinghead/face3d/model.hpp"
#include "talkinghead/render/render.hpp"
#include "test_util.hpp"

namespace {

using namespace th;
using face3d::Pose;

std::vector<double> constant_gamma(double g) {
  std::vector<double> gamma(face3d::kGammaSize, 0.0);
  gamma[0] = gamma[9] = gamma[18] = g;
  return gamma;
}

Pose at_depth(double z) {
  Pose p;
  p.translation = Eigen::Vector3d(0, 0, z);
  return p;
}

// Flat triangles facing the camera (normals towards -z), given in model space.
face3d::FaceMesh flat_mesh(const std::vector<Eigen::Vector3d>& verts, const std::vector<face3d::Triangle>& tris,
                           const Eigen::Vector3d& albedo) {
  face3d::FaceMesh m;
  m.positions.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) m.positions.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  m.albedo = face3d::VertexMatrix::Zero(m.positions.rows(), 3);
  m.albedo.rowwise() = albedo.transpose();
  m.normals = face3d::VertexMatrix::Zero(m.positions.rows(), 3);
  m.normals.col(2).setConstant(-1.0);
  m.triangles = tris;
  return m;
}

TEST(Rasterize, ConstantBandTriangleIsUniform) {
  const auto cam = face3d::Camera::for_image(32, 32);
  const auto mesh = flat_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}}, {0.2, 0.5, 0.8});
  const auto gamma = constant_gamma(1.3);
  const auto f = render::rasterize(mesh, at_depth(5), cam, gamma);
  const double phi0 = 0.5 / std::sqrt(std::numbers::pi);
  ASSERT_GT(f.coverage(), 20u);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (!f.covered(x, y)) {
        EXPECT_EQ(f.image.at(x, y, 0), 0.0);
        continue;
      }
      EXPECT_NEAR(f.image.at(x, y, 0), 0.2 * 1.3 * phi0, 1e-12);
      EXPECT_NEAR(f.image.at(x, y, 1), 0.5 * 1.3 * phi0, 1e-12);
      EXPECT_NEAR(f.image.at(x, y, 2), 0.8 * 1.3 * phi0, 1e-12);
    }
}

TEST(Rasterize, NearerTriangleWinsEverywhere) {
  const auto cam = face3d::Camera::for_image(32, 32);
  // Same footprint direction; the second triangle is closer and drawn first.
  auto mesh = flat_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}, {-1.2, -0.8, -1}, {0.8, -1.2, -1}, {0.2, 1.1, -1}},
                        {{3, 4, 5}, {0, 1, 2}}, {0.5, 0.5, 0.5});
  mesh.albedo.row(0) = mesh.albedo.row(1) = mesh.albedo.row(2) = Eigen::RowVector3d(1, 0, 0);
  mesh.albedo.row(3) = mesh.albedo.row(4) = mesh.albedo.row(5) = Eigen::RowVector3d(0, 0, 1);
  const auto f = render::rasterize(mesh, at_depth(6), cam, constant_gamma(1.0));
  const auto far_only = render::rasterize(flat_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}}, {1, 0, 0}),
                                          at_depth(6), cam, constant_gamma(1.0));
  const auto near_only =
      render::rasterize(flat_mesh({{-1.2, -0.8, -1}, {0.8, -1.2, -1}, {0.2, 1.1, -1}}, {{0, 1, 2}}, {0, 0, 1}),
                        at_depth(6), cam, constant_gamma(1.0));
  int contested = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (far_only.covered(x, y) && near_only.covered(x, y)) {
        ++contested;
        EXPECT_EQ(f.image.at(x, y, 0), 0.0);
        EXPECT_GT(f.image.at(x, y, 2), 0.0);
        EXPECT_NEAR(f.depth[static_cast<std::size_t>(y) * 32 + x], 5.0, 1e-9);
      }
  EXPECT_GT(contested, 20);
}

// Brute force per pixel: ray/plane intersection in camera space for depth, barycentrics from a
// 2x2 solve for colour, nearest hit wins.
TEST(Rasterize, MatchesBruteForceOracleOnTenTriangles) {
  const auto cam = face3d::Camera::for_image(40, 30, 1.5);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.2, 1.2), zd(-0.8, 0.8), col(0.1, 0.9);
  std::normal_distribution<double> nd;
  face3d::FaceMesh mesh;
  mesh.positions.resize(30, 3);
  mesh.albedo.resize(30, 3);
  mesh.normals.resize(30, 3);
  for (int i = 0; i < 30; ++i) {
    mesh.positions.row(i) = Eigen::RowVector3d(u(rng), u(rng), zd(rng));
    mesh.albedo.row(i) = Eigen::RowVector3d(col(rng), col(rng), col(rng));
    Eigen::Vector3d n(nd(rng), nd(rng), -2.0 - std::abs(nd(rng)));
    mesh.normals.row(i) = n.normalized().transpose();
  }
  for (int t = 0; t < 10; ++t) mesh.triangles.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  Pose pose;
  pose.angles = Eigen::Vector3d(0.1, -0.2, 0.05);
  pose.translation = Eigen::Vector3d(0.1, 0.0, 5.0);
  std::vector<double> gamma(27);
  for (auto& g : gamma) g = 0.3 * nd(rng);
  gamma[0] = gamma[9] = gamma[18] = 2.0;

  const auto f = render::rasterize(mesh, pose, cam, gamma);

  const Eigen::Matrix3d r = face3d::rotation_matrix(pose.angles);
  std::vector<Eigen::Vector3d> cv(30), colour(30);
  std::vector<Eigen::Vector2d> pix(30);
  for (int i = 0; i < 30; ++i) {
    cv[i] = r * mesh.positions.row(i).transpose() + pose.translation;
    pix[i] = Eigen::Vector2d(cam.principal.x() + cam.focal * cv[i].x() / cv[i].z(),
                             cam.principal.y() - cam.focal * cv[i].y() / cv[i].z());
    const Eigen::Vector3d n = (r * mesh.normals.row(i).transpose()).normalized();
    colour[i] = face3d::sh_irradiance(n, mesh.albedo.row(i).transpose(), gamma);
  }
  int covered = 0;
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      const Eigen::Vector3d ray((p.x() - cam.principal.x()) / cam.focal, -(p.y() - cam.principal.y()) / cam.focal, 1.0);
      double best = std::numeric_limits<double>::infinity();
      Eigen::Vector3d want = Eigen::Vector3d::Zero();
      for (int t = 0; t < 10; ++t) {
        const int a = 3 * t, b = a + 1, c = a + 2;
        Eigen::Matrix2d m;
        m.col(0) = pix[b] - pix[a];
        m.col(1) = pix[c] - pix[a];
        const Eigen::Vector2d st = m.inverse() * (p - pix[a]);
        const double l0 = 1 - st.x() - st.y();
        if (st.x() < 0 || st.y() < 0 || l0 < 0) continue;
        const Eigen::Vector3d nrm = (cv[b] - cv[a]).cross(cv[c] - cv[a]);
        const double z = nrm.dot(cv[a]) / nrm.dot(ray);
        if (z < best) {
          best = z;
          want = l0 * colour[a] + st.x() * colour[b] + st.y() * colour[c];
        }
      }
      const bool hit = std::isfinite(best);
      ASSERT_EQ(f.covered(x, y), hit) << x << "," << y;
      if (!hit) continue;
      ++covered;
      EXPECT_NEAR(f.depth[static_cast<std::size_t>(y) * 40 + x], best, 1e-9);
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(f.image.at(x, y, ch), std::clamp(want[ch], 0.0, 1.0), 1e-6);
    }
  EXPECT_GT(covered, 100);
}

TEST(Rasterize, DeterministicAndOffscreenIsEmpty) {
  const auto& basis = face3d::make_synthetic_basis();
  const auto mesh = face3d::build_mesh(basis, face3d::CoefficientSet::zeros(basis.dims()));
  const auto cam = face3d::Camera::for_image(32, 32);
  const auto a = render::rasterize(mesh, at_depth(6), cam, constant_gamma(2.0));
  const auto b = render::rasterize(mesh, at_depth(6), cam, constant_gamma(2.0));
  EXPECT_EQ(a.image.data, b.image.data);
  EXPECT_EQ(a.mask, b.mask);
  Pose away = at_depth(6);
  away.translation.x() = 50.0;
  EXPECT_EQ(render::rasterize(mesh, away, cam, constant_gamma(2.0)).coverage(), 0u);
}

face3d::CoefficientSet frontal(const face3d::FaceBasis& basis, double gamma0) {
  auto c = face3d::CoefficientSet::zeros(basis.dims());
  c.gamma[0] = c.gamma[9] = c.gamma[18] = gamma0;
  c.gamma[2] = c.gamma[11] = c.gamma[20] = -0.3;
  c.pose.translation = Eigen::Vector3d(0, 0, 6);
  return c;
}

TEST(Albedo, UniformHalfIsRecovered) {
  auto basis = face3d::make_synthetic_basis();
  basis.mean_texture.setConstant(0.5);
  auto c = face3d::CoefficientSet::zeros(basis.dims());
  c.gamma[0] = c.gamma[9] = c.gamma[18] = 1.6;
  c.pose.translation = Eigen::Vector3d(0, 0, 6);
  const auto cam = face3d::Camera::for_image(96, 96);
  const auto img = render::rasterize(face3d::build_mesh(basis, c), c.pose, cam, constant_gamma(1.6)).image;
  const std::vector<Image> frames{img};
  const std::vector<face3d::CoefficientSet> coeffs{c};
  const auto r = render::extract_detailed_albedo(frames, coeffs, basis, cam);
  int visible = 0;
  for (int i = 0; i < basis.vertex_count(); ++i) {
    if (!r.visible[static_cast<std::size_t>(i)]) continue;
    ++visible;
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(r.albedo(i, ch), 0.5, 1e-9);
  }
  EXPECT_GT(visible, 100);
}

TEST(Albedo, RenderExtractRoundTrip) {
  const auto& basis = face3d::make_synthetic_basis();
  const auto cam = face3d::Camera::for_image(128, 128);
  auto c = frontal(basis, 2.0);
  c.delta = Eigen::VectorXd::LinSpaced(basis.dims().tex, -1.0, 1.0);
  const auto mesh = face3d::build_mesh(basis, c);
  const std::span<const double> gamma(c.gamma.data(), c.gamma.size());
  const auto truth = render::rasterize(mesh, c.pose, cam, gamma);
  const std::vector<Image> frames{truth.image};
  const std::vector<face3d::CoefficientSet> coeffs{c};
  const auto r = render::extract_detailed_albedo(frames, coeffs, basis, cam);
  int visible = 0;
  for (int i = 0; i < basis.vertex_count(); ++i) {
    if (!r.visible[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(r.albedo.row(i), mesh.albedo.row(i));
      continue;
    }
    ++visible;
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(r.albedo(i, ch), mesh.albedo(i, ch), 1e-2) << i;
  }
  EXPECT_GT(visible, 150);

  auto remesh = mesh;
  remesh.albedo = r.albedo;
  const auto again = render::rasterize(remesh, c.pose, cam, gamma);
  double err = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (truth.covered(x, y)) {
        for (int ch = 0; ch < 3; ++ch) err += std::abs(again.image.at(x, y, ch) - truth.image.at(x, y, ch));
        n += 3;
      }
  EXPECT_LT(err / static_cast<double>(n), 1e-2);
}

TEST(Albedo, NeutralFrameSelection) {
  const face3d::BasisDims dims{};
  std::vector<face3d::CoefficientSet> cs;
  for (double b : {0.0, 0.5})
    for (double rot : {0.1, 0.0}) {
      auto c = face3d::CoefficientSet::zeros(dims);
      c.beta[0] = b;
      c.pose.angles[1] = rot;
      cs.push_back(c);
    }
  EXPECT_EQ(render::select_neutral_frame(cs), 1);
  cs.erase(cs.begin() + 1);
  cs.push_back(cs[0]);
  EXPECT_EQ(render::select_neutral_frame(cs), 0);  // tie goes to the earlier frame
  EXPECT_THROW(render::select_neutral_frame({}), th::PreconditionError);
}

std::vector<Pose> yaw_sequence(const std::vector<double>& yaw) {
  std::vector<Pose> out(yaw.size());
  for (std::size_t i = 0; i < yaw.size(); ++i) out[i].angles[1] = yaw[i];
  return out;
}

TEST(Keyframes, MonotoneAndConstant) {
  std::vector<double> y(60);
  for (int i = 0; i < 60; ++i) y[i] = 0.01 * i;
  EXPECT_EQ(render::select_keyframes(yaw_sequence(y), 25), (std::vector<int>{0, 59}));
  EXPECT_EQ(render::select_keyframes(yaw_sequence(std::vector<double>(60, 0.2)), 25), (std::vector<int>{0, 59}));
  EXPECT_EQ(render::select_keyframes(yaw_sequence({0.3}), 25), (std::vector<int>{0}));
  EXPECT_THROW(render::select_keyframes({}, 25), th::PreconditionError);
}

TEST(Keyframes, SineCrestsAndTroughs) {
  std::vector<double> y(100);
  for (int i = 0; i < 100; ++i) y[i] = 0.2 * std::sin(2.0 * std::numbers::pi * i / 50.0);
  const auto keys = render::select_keyframes(yaw_sequence(y), 25);
  const std::vector<double> extrema{12.5, 37.5, 62.5, 87.5};
  for (int k : keys) {
    if (k == 0 || k == 99) continue;
    bool near = false;
    for (double e : extrema) near = near || std::abs(k - e) <= 1.0;
    EXPECT_TRUE(near) << k;
  }
  for (double e : extrema) {
    bool hit = false;
    for (int k : keys) hit = hit || std::abs(k - e) <= 1.0;
    EXPECT_TRUE(hit) << e;
  }
  EXPECT_EQ(keys.front(), 0);
  EXPECT_EQ(keys.back(), 99);
}

// Property: sorted, in range, and each interior key is a window extremum of some angle.
TEST(Keyframes, PropertyOnRandomWalks) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n(0.0, 0.02);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Pose> poses(80);
    for (int i = 1; i < 80; ++i)
      for (int a = 0; a < 3; ++a) poses[i].angles[a] = poses[i - 1].angles[a] + n(rng);
    const int window = 10 + trial;
    const auto keys = render::select_keyframes(poses, window);
    for (std::size_t i = 1; i < keys.size(); ++i) EXPECT_LT(keys[i - 1], keys[i]);
    for (int k : keys) {
      ASSERT_GE(k, 0);
      ASSERT_LT(k, 80);
      if (k == 0 || k == 79) continue;
      const int lo = std::max(0, k - window / 2), hi = std::min(79, k + window / 2);
      bool extreme = false;
      for (int a = 0; a < 3; ++a) {
        bool is_max = true, is_min = true;
        for (int j = lo; j <= hi; ++j) {
          is_max = is_max && poses[j].angles[a] <= poses[k].angles[a];
          is_min = is_min && poses[j].angles[a] >= poses[k].angles[a];
        }
        extreme = extreme || is_max || is_min;
      }
      EXPECT_TRUE(extreme) << k;
    }
  }
}

TEST(Background, ExactMatchAndTies) {
  std::vector<Pose> cand(5);
  for (int i = 0; i < 5; ++i) cand[i].angles[1] = 0.1 * i;
  EXPECT_EQ(render::match_background_index(cand[3], cand), 3);
  Pose q;
  q.angles[1] = 0.15;
  EXPECT_EQ(render::match_background_index(q, cand), 1);  // equidistant from 1 and 2
  EXPECT_THROW(render::match_background_index(q, {}), th::PreconditionError);
}

TEST(Background, DistanceWeights) {
  Pose a, b;
  b.angles[0] = std::numbers::pi / 180.0;  // one degree
  b.translation[2] = 2.0;
  EXPECT_NEAR(render::pose_distance_sq(a, b), 1.0 + 0.1 * 4.0, 1e-12);
}

TEST(Background, GridMatchesBruteForce) {
  std::vector<Pose> grid;
  std::vector<Image> frames;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) {
      Pose p;
      p.angles = Eigen::Vector3d(0.04 * i, 0.05 * j, 0.0);
      p.translation = Eigen::Vector3d(0.1 * i, 0.0, 6.0 + 0.1 * j);
      grid.push_back(p);
      frames.emplace_back(2, 2, 0.01 * static_cast<double>(grid.size()));
    }
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int t = 0; t < 50; ++t) {
    Pose q;
    q.angles = Eigen::Vector3d(u(rng), u(rng), u(rng) * 0.1);
    q.translation = Eigen::Vector3d(u(rng), u(rng), 6.0 + u(rng));
    int best = 0;
    double bd = 1e300;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Eigen::Vector3d da = (q.angles - grid[i].angles) * 180.0 / std::numbers::pi;
      const Eigen::Vector3d dt = q.translation - grid[i].translation;
      const double d = da.dot(da) + 0.1 * dt.dot(dt);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    const auto plate = render::match_background(q, frames, grid);
    EXPECT_EQ(plate.source_index, best);
    EXPECT_EQ(plate.image.data, frames[static_cast<std::size_t>(best)].data);
  }
}

render::BackgroundPlate plate(double colour, double yaw, int index) {
  render::BackgroundPlate p;
  p.image = Image(4, 4, colour);
  p.source_index = index;
  p.source_pose.angles[1] = yaw;
  p.source_pose.translation[2] = 6.0;
  return p;
}

TEST(Interpolate, FiveFrameGapWeights) {
  const std::vector<int> keys{2, 6};
  const auto w = render::interpolation_weights(keys, 9);
  const double want[9] = {0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1};
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(w[i].weight, want[i]) << i;
  EXPECT_THROW(render::interpolation_weights(std::vector<int>{3}, 5), th::PreconditionError);
  EXPECT_THROW(render::interpolation_weights(std::vector<int>{3, 3}, 5), th::ConfigError);
}

TEST(Interpolate, WeightsAffineBetweenKeys) {
  const std::vector<int> keys{0, 7, 10, 31};
  const auto w = render::interpolation_weights(keys, 32);
  for (int i = 0; i < 32; ++i) {
    EXPECT_GE(w[i].weight, 0.0);
    EXPECT_LE(w[i].weight, 1.0);
    const double pos = keys[static_cast<std::size_t>(w[i].key_a)] +
                       w[i].weight * (keys[static_cast<std::size_t>(w[i].key_b)] - keys[static_cast<std::size_t>(w[i].key_a)]);
    EXPECT_NEAR(pos, i, 1e-12);
  }
}

TEST(Interpolate, KeyframesAndMidpoint) {
  const std::vector<int> keys{0, 4};
  const std::vector<render::BackgroundPlate> plates{plate(0.2, 0.1, 10), plate(0.6, 0.3, 20)};
  std::vector<Pose> pred(5);
  for (auto& p : pred) p.translation[2] = 6.0;
  const auto out = render::interpolate_backgrounds(keys, plates, pred, 0.5);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(out[0].background.data, plates[0].image.data);
  EXPECT_EQ(out[4].background.data, plates[1].image.data);
  EXPECT_DOUBLE_EQ(out[0].background_pose.angles[1], 0.1);
  EXPECT_DOUBLE_EQ(out[4].background_pose.angles[1], 0.3);
  for (double v : out[2].background.data) EXPECT_NEAR(v, 0.4, 1e-12);
  EXPECT_NEAR(out[2].background_pose.angles[1], 0.2, 1e-12);
  EXPECT_NEAR(out[2].pose.angles[1], 0.1, 1e-12);  // halfway from the predicted 0 to 0.2
  const auto pure = render::interpolate_backgrounds(keys, plates, pred, 1.0);
  EXPECT_DOUBLE_EQ(pure[4].pose.angles[1], 0.3);
  const auto none = render::interpolate_backgrounds(keys, plates, pred, 0.0);
  EXPECT_DOUBLE_EQ(none[4].pose.angles[1], 0.0);
}

render::RenderedFrame solid_render(int w, int h, double v) {
  render::RenderedFrame f;
  f.image = Image(w, h, v);
  f.mask.assign(static_cast<std::size_t>(w) * h, 0);
  f.depth.assign(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  return f;
}

TEST(Composite, MaskSelection) {
  const Image bg(6, 5, 0.3);
  auto r = solid_render(6, 5, 0.9);
  EXPECT_EQ(render::composite(r, bg).data, bg.data);
  std::fill(r.mask.begin(), r.mask.end(), 1);
  EXPECT_EQ(render::composite(r, bg).data, r.image.data);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) r.mask[static_cast<std::size_t>(y) * 6 + x] = (x + y) % 2;
  const Image c = render::composite(r, bg);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.at(x, y, ch), (x + y) % 2 ? 0.9 : 0.3);
  EXPECT_EQ(render::composite(r, c).data, c.data);  // idempotent
  EXPECT_THROW(render::composite(r, Image(3, 3)), th::ConfigError);
}

TEST(PoseCsv, RoundTrip) {
  th::test::TempDir dir("pose_csv");
  std::vector<Pose> p(3);
  p[1].angles = Eigen::Vector3d(0.1, -0.2, 0.3);
  p[2].translation = Eigen::Vector3d(1, 2, 6);
  render::write_pose_csv(dir.file("p.csv"), p);
  const auto back = render::read_pose_csv(dir.file("p.csv"));
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back[i].as_vector(), p[i].as_vector());
}

TEST(SampleBilinear, CentresAndMidpoints) {
  Image img(2, 1);
  img.at(0, 0, 0) = 0.0;
  img.at(1, 0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(render::sample_bilinear(img, 0.5, 0.5)[0], 0.0);
  EXPECT_DOUBLE_EQ(render::sample_bilinear(img, 1.5, 0.5)[0], 1.0);
  EXPECT_DOUBLE_EQ(render::sample_bilinear(img, 1.0, 0.5)[0], 0.5);
}

}  // namespace
