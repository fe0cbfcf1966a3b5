#include "talkinghead/face3d/basis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/model.hpp"
#include "talkinghead/io/container.hpp"

namespace th::face3d {

namespace {

using Adjacency = std::vector<std::vector<int>>;

Adjacency adjacency(int vertex_count, const std::vector<Triangle>& triangles) {
  std::vector<std::set<int>> sets(static_cast<std::size_t>(vertex_count));
  for (const auto& t : triangles)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) sets[t[a]].insert(t[b]);
  Adjacency adj(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) adj[i].assign(sets[i].begin(), sets[i].end());
  return adj;
}

// Umbrella-operator smoothing of a per-vertex field with `channels` values per vertex.
void smooth_field(Eigen::VectorXd& field, const Adjacency& adj, int channels, int iterations) {
  const auto v = static_cast<int>(adj.size());
  Eigen::VectorXd next(field.size());
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < v; ++i) {
      for (int c = 0; c < channels; ++c) {
        double avg = 0.0;
        for (int j : adj[i]) avg += field[j * channels + c];
        avg /= static_cast<double>(adj[i].size());
        next[i * channels + c] = 0.5 * field[i * channels + c] + 0.5 * avg;
      }
    }
    field.swap(next);
  }
}

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  // Fix the sign ambiguity so each column correlates positively with its source.
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (q.col(c).dot(m.col(c)) < 0) q.col(c) *= -1.0;
  return q;
}

double gaussian_falloff(const Eigen::Vector3d& dir, const Eigen::Vector3d& centre, double sigma) {
  const double ang = std::acos(std::clamp(dir.normalized().dot(centre), -1.0, 1.0));
  return std::exp(-ang * ang / (2.0 * sigma * sigma));
}

}  // namespace

void icosphere(int subdivisions, VertexMatrix& vertices, std::vector<Triangle>& triangles) {
  if (subdivisions < 0) throw ConfigError("icosphere: negative subdivision level");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> pts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : pts) p.normalize();
  triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      pts.push_back((pts[a] + pts[b]).normalized());
      const int idx = static_cast<int>(pts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    next.reserve(triangles.size() * 4);
    for (const auto& tri : triangles) {
      const int ab = mid(tri[0], tri[1]);
      const int bc = mid(tri[1], tri[2]);
      const int ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    triangles.swap(next);
  }
  // Outward winding: (b-a) x (c-a) points away from the origin.
  for (auto& tri : triangles) {
    const Eigen::Vector3d n = (pts[tri[1]] - pts[tri[0]]).cross(pts[tri[2]] - pts[tri[0]]);
    if (n.dot(pts[tri[0]] + pts[tri[1]] + pts[tri[2]]) < 0) std::swap(tri[1], tri[2]);
  }
  vertices.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) vertices.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
}

Eigen::Vector3d mouth_direction() { return Eigen::Vector3d(0.0, -0.45, -0.89).normalized(); }

FaceBasis make_synthetic_basis(const SyntheticBasisConfig& config) {
  const BasisDims& dims = config.dims;
  if (dims.id < 0 || dims.exp < 0 || dims.tex < 0) throw ConfigError("basis dims must be nonnegative");
  VertexMatrix verts;
  FaceBasis basis;
  icosphere(config.subdivisions, verts, basis.triangles);
  const int v = static_cast<int>(verts.rows());
  const int n = 3 * v;
  if (dims.id + dims.exp > n || dims.tex > n) throw ConfigError("basis dims exceed 3V");
  const Adjacency adj = adjacency(v, basis.triangles);

  basis.mean_shape.resize(n);
  for (int i = 0; i < v; ++i) basis.mean_shape.segment<3>(3 * i) = verts.row(i).transpose();

  // Skin, with darker lips around the mouth and a hair cap on top.
  const Eigen::Vector3d skin(0.80, 0.60, 0.50), lips(0.62, 0.30, 0.30), hair(0.25, 0.18, 0.12);
  const Eigen::Vector3d mouth = mouth_direction();
  basis.mean_texture.resize(n);
  for (int i = 0; i < v; ++i) {
    const Eigen::Vector3d dir = verts.row(i).transpose();
    const double wl = gaussian_falloff(dir, mouth, 0.18);
    const double wh = 1.0 / (1.0 + std::exp(-(dir.y() - 0.62) * 18.0));
    Eigen::Vector3d c = skin * (1.0 - wl) + lips * wl;
    c = c * (1.0 - wh) + hair * wh;
    basis.mean_texture.segment<3>(3 * i) = c;
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_field = [&](int iterations) {
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f[i] = normal(rng);
    smooth_field(f, adj, 3, iterations);
    return f;
  };

  Eigen::MatrixXd shape_modes(n, dims.id + dims.exp);
  for (int c = 0; c < dims.id; ++c) shape_modes.col(c) = random_field(config.smoothing_iterations);
  for (int c = 0; c < dims.exp; ++c) {
    Eigen::VectorXd f = random_field(config.smoothing_iterations / 2);
    for (int i = 0; i < v; ++i) f.segment<3>(3 * i) *= gaussian_falloff(verts.row(i).transpose(), mouth, 0.45);
    shape_modes.col(dims.id + c) = f;
  }
  const Eigen::MatrixXd q = dims.id + dims.exp > 0 ? orthonormal_columns(shape_modes) : Eigen::MatrixXd(n, 0);
  basis.id = q.leftCols(dims.id);
  basis.exp = q.rightCols(dims.exp);

  Eigen::MatrixXd tex_modes(n, dims.tex);
  for (int c = 0; c < dims.tex; ++c) tex_modes.col(c) = random_field(config.smoothing_iterations);
  basis.tex = dims.tex > 0 ? orthonormal_columns(tex_modes) : Eigen::MatrixXd(n, 0);

  basis.validate();
  return basis;
}

std::vector<int> mouth_landmark_indices(const FaceBasis& basis, int count) {
  const Eigen::Vector3d mouth = mouth_direction();
  const int v = basis.vertex_count();
  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) {
    const Eigen::Vector3d dir = basis.mean_shape.segment<3>(3 * i).normalized();
    scored.emplace_back(-dir.dot(mouth), i);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  for (int i = 0; i < std::min(count, v); ++i) out.push_back(scored[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> face_landmark_indices(const FaceBasis& basis, int count) {
  const int v = basis.vertex_count();
  std::vector<int> front;
  for (int i = 0; i < v; ++i)
    if (basis.mean_shape.segment<3>(3 * i).normalized().z() < -0.35) front.push_back(i);
  if (front.empty()) return {};
  // Farthest-point sampling seeded at the vertex nearest the face centre.
  auto pos = [&](int i) { return Eigen::Vector3d(basis.mean_shape.segment<3>(3 * i)); };
  int seed = front[0];
  for (int i : front)
    if (pos(i).z() < pos(seed).z()) seed = i;
  std::vector<int> chosen{seed};
  std::vector<double> dist(front.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < std::min<int>(count, static_cast<int>(front.size()))) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t k = 0; k < front.size(); ++k) {
      dist[k] = std::min(dist[k], (pos(front[k]) - pos(chosen.back())).squaredNorm());
      if (dist[k] > best_d) {
        best_d = dist[k];
        best = k;
      }
    }
    chosen.push_back(front[best]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

void save_basis(const FaceBasis& basis, const std::string& path) {
  basis.validate();
  io::Container c;
  const BasisDims d = basis.dims();
  c.meta() = {{"kind", "face_basis"},
              {"vertex_count", basis.vertex_count()},
              {"triangle_count", basis.triangles.size()},
              {"dims", {{"id", d.id}, {"exp", d.exp}, {"tex", d.tex}}}};
  c.add_f32("mean_shape", {basis.mean_shape.size()}, std::span<const double>(basis.mean_shape.data(), basis.mean_shape.size()));
  c.add_f32("mean_texture", {basis.mean_texture.size()},
            std::span<const double>(basis.mean_texture.data(), basis.mean_texture.size()));
  c.add_matrix("basis_id", basis.id);
  c.add_matrix("basis_exp", basis.exp);
  c.add_matrix("basis_tex", basis.tex);
  std::vector<std::int32_t> tris;
  tris.reserve(basis.triangles.size() * 3);
  for (const auto& t : basis.triangles) tris.insert(tris.end(), t.begin(), t.end());
  c.add_i32("triangles", {static_cast<std::int64_t>(basis.triangles.size()), 3}, tris);
  c.write(path);
}

FaceBasis load_basis(const std::string& path) {
  const io::Container c = io::Container::read(path);
  if (c.meta().value("kind", "") != "face_basis") throw IoError("not a face_basis container: " + path);
  FaceBasis b;
  const auto ms = c.f32_as_double("mean_shape");
  const auto mt = c.f32_as_double("mean_texture");
  b.mean_shape = Eigen::Map<const Eigen::VectorXd>(ms.data(), static_cast<Eigen::Index>(ms.size()));
  b.mean_texture = Eigen::Map<const Eigen::VectorXd>(mt.data(), static_cast<Eigen::Index>(mt.size()));
  b.id = c.matrix("basis_id");
  b.exp = c.matrix("basis_exp");
  b.tex = c.matrix("basis_tex");
  const auto& tris = c.array("triangles");
  if (tris.dtype != "i32" || tris.i32.size() % 3 != 0) throw IoError("basis triangles malformed");
  for (std::size_t i = 0; i < tris.i32.size(); i += 3) b.triangles.push_back({tris.i32[i], tris.i32[i + 1], tris.i32[i + 2]});
  const int v = c.meta().value("vertex_count", -1);
  if (v != b.vertex_count()) throw IoError("basis header vertex_count disagrees with arrays");
  const auto dims = c.meta().at("dims");
  if (dims.at("id").get<int>() != b.id.cols() || dims.at("exp").get<int>() != b.exp.cols() ||
      dims.at("tex").get<int>() != b.tex.cols())
    throw IoError("basis header dims disagree with arrays");
  b.validate();
  return b;
}

void export_obj(const FaceMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write obj: " + path);
  out << "# talkinghead face mesh\n# vertex colours follow as '#vc r g b' comment lines, one per vertex\n";
  out << std::setprecision(9);
  for (Eigen::Index i = 0; i < mesh.positions.rows(); ++i)
    out << "v " << mesh.positions(i, 0) << ' ' << mesh.positions(i, 1) << ' ' << mesh.positions(i, 2) << '\n';
  for (Eigen::Index i = 0; i < mesh.normals.rows(); ++i)
    out << "vn " << mesh.normals(i, 0) << ' ' << mesh.normals(i, 1) << ' ' << mesh.normals(i, 2) << '\n';
  for (Eigen::Index i = 0; i < mesh.albedo.rows(); ++i)
    out << "#vc " << mesh.albedo(i, 0) << ' ' << mesh.albedo(i, 1) << ' ' << mesh.albedo(i, 2) << '\n';
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << "//" << t[0] + 1 << ' ' << t[1] + 1 << "//" << t[1] + 1 << ' ' << t[2] + 1 << "//"
        << t[2] + 1 << '\n';
}

}  // namespace th::face3d
