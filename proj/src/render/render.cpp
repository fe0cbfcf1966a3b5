#include "talkinghead/render/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/model.hpp"
#include "talkinghead/io/csv.hpp"

namespace th::render {

using face3d::Pose;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

Eigen::Vector3d camera_normal(const Eigen::Matrix3d& rot, const Eigen::Vector3d& n) {
  Eigen::Vector3d r = rot * n;
  const double len = r.norm();
  return len > 0.0 ? Eigen::Vector3d(r / len) : Eigen::Vector3d(0.0, 0.0, -1.0);
}

void check_gamma(std::span<const double> gamma) {
  if (gamma.size() != static_cast<std::size_t>(face3d::kGammaSize))
    throw ConfigError("gamma must have " + std::to_string(face3d::kGammaSize) + " entries");
}

Pose lerp(const Pose& a, const Pose& b, double w) {
  Pose p;
  p.angles = (1.0 - w) * a.angles + w * b.angles;
  p.translation = (1.0 - w) * a.translation + w * b.translation;
  return p;
}

}  // namespace

std::size_t RenderedFrame::coverage() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

RenderedFrame rasterize(const face3d::FaceMesh& mesh, const Pose& pose, const face3d::Camera& camera,
                        std::span<const double> gamma) {
  camera.validate();
  check_gamma(gamma);
  const int v_count = mesh.vertex_count();
  if (mesh.albedo.rows() != v_count || mesh.normals.rows() != v_count)
    throw ConfigError("rasterize: mesh positions, albedo and normals differ in length");

  const int w = camera.width, h = camera.height;
  RenderedFrame out;
  out.image = Image(w, h, 0.0);
  out.mask.assign(static_cast<std::size_t>(w) * h, 0);
  out.depth.assign(static_cast<std::size_t>(w) * h, kInf);
  out.pose = pose;

  const auto proj = face3d::project(mesh.positions, pose, camera);
  const Eigen::Matrix3d rot = face3d::rotation_matrix(pose.angles);
  std::vector<Eigen::Vector3d> colour(static_cast<std::size_t>(v_count));
  for (int i = 0; i < v_count; ++i)
    colour[static_cast<std::size_t>(i)] = face3d::sh_irradiance(
        camera_normal(rot, mesh.normals.row(i).transpose()), mesh.albedo.row(i).transpose(), gamma);

  for (const auto& tri : mesh.triangles) {
    bool front = true;
    for (int k : tri) {
      if (k < 0 || k >= v_count) throw ConfigError("rasterize: triangle index out of range");
      front = front && proj.in_front[static_cast<std::size_t>(k)];
    }
    if (!front) continue;
    const Eigen::Vector2d p0 = proj.pixels.row(tri[0]).transpose();
    const Eigen::Vector2d p1 = proj.pixels.row(tri[1]).transpose();
    const Eigen::Vector2d p2 = proj.pixels.row(tri[2]).transpose();
    const double area = edge(p0, p1, p2.x(), p2.y());
    if (std::abs(area) < 1e-12) continue;

    const double umin = std::min({p0.x(), p1.x(), p2.x()}), umax = std::max({p0.x(), p1.x(), p2.x()});
    const double vmin = std::min({p0.y(), p1.y(), p2.y()}), vmax = std::max({p0.y(), p1.y(), p2.y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(umin - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(umax - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(vmax - 0.5)));
    const double iz0 = 1.0 / proj.depth[tri[0]], iz1 = 1.0 / proj.depth[tri[1]], iz2 = 1.0 / proj.depth[tri[2]];
    const auto& c0 = colour[static_cast<std::size_t>(tri[0])];
    const auto& c1 = colour[static_cast<std::size_t>(tri[1])];
    const auto& c2 = colour[static_cast<std::size_t>(tri[2])];

    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double b0 = edge(p1, p2, px, py) / area;
        const double b1 = edge(p2, p0, px, py) / area;
        const double b2 = edge(p0, p1, px, py) / area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        const double z = 1.0 / (b0 * iz0 + b1 * iz1 + b2 * iz2);
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        if (!(z < out.depth[pix])) continue;
        out.depth[pix] = z;
        out.mask[pix] = 1;
        const Eigen::Vector3d c = b0 * c0 + b1 * c1 + b2 * c2;
        for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = std::clamp(c[ch], 0.0, 1.0);
      }
    }
  }
  if (out.coverage() == 0) warn("rasterize: face is entirely off-screen");
  return out;
}

int select_neutral_frame(std::span<const face3d::CoefficientSet> coefficients) {
  if (coefficients.empty()) throw PreconditionError("select_neutral_frame: no frames");
  int best = 0;
  double best_score = kInf;
  for (std::size_t i = 0; i < coefficients.size(); ++i) {
    const double s = coefficients[i].beta.norm() + coefficients[i].pose.angles.norm();
    if (s < best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Eigen::Vector3d sample_bilinear(const Image& image, double u, double v) {
  const double fx = u - 0.5, fy = v - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, image.width - 1);
    y = std::clamp(y, 0, image.height - 1);
    return Eigen::Vector3d(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
         ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

AlbedoResult extract_detailed_albedo(std::span<const Image> frames,
                                     std::span<const face3d::CoefficientSet> coefficients,
                                     const face3d::FaceBasis& basis, const face3d::Camera& camera) {
  if (frames.empty() || frames.size() != coefficients.size())
    throw PreconditionError("extract_detailed_albedo: need matching, nonempty frames and coefficients");
  camera.validate();
  AlbedoResult res;
  res.selected_frame = select_neutral_frame(coefficients);
  const Image& frame = frames[static_cast<std::size_t>(res.selected_frame)];
  if (frame.width != camera.width || frame.height != camera.height)
    throw ConfigError("extract_detailed_albedo: frame size differs from camera");
  const auto& coeffs = coefficients[static_cast<std::size_t>(res.selected_frame)];

  const face3d::FaceMesh mesh = face3d::build_mesh(basis, coeffs);
  const RenderedFrame ref = rasterize(mesh, coeffs.pose, camera, std::span<const double>(coeffs.gamma.data(), coeffs.gamma.size()));
  const auto proj = face3d::project(mesh.positions, coeffs.pose, camera);
  const face3d::VertexMatrix cam = face3d::transform(mesh.positions, coeffs.pose);
  const Eigen::Matrix3d rot = face3d::rotation_matrix(coeffs.pose.angles);
  const std::span<const double> gamma(coeffs.gamma.data(), coeffs.gamma.size());

  const int v_count = mesh.vertex_count();
  res.albedo = mesh.albedo;
  res.visible.assign(static_cast<std::size_t>(v_count), false);
  const int w = camera.width, h = camera.height;
  int visible = 0;
  for (int i = 0; i < v_count; ++i) {
    if (!proj.in_front[static_cast<std::size_t>(i)]) continue;
    const Eigen::Vector3d n = camera_normal(rot, mesh.normals.row(i).transpose());
    const Eigen::Vector3d view = cam.row(i).transpose();
    if (n.dot(view) > -0.2 * view.norm()) continue;  // back-facing or grazing
    const double u = proj.pixels(i, 0), v = proj.pixels(i, 1);
    const int xn = static_cast<int>(std::floor(u)), yn = static_cast<int>(std::floor(v));
    if (xn < 0 || yn < 0 || xn >= w || yn >= h) continue;
    const double z = proj.depth[i];
    if (std::abs(ref.depth[static_cast<std::size_t>(yn) * w + xn] - z) > 0.02 * z) continue;  // occluded
    const int tx = static_cast<int>(std::floor(u - 0.5)), ty = static_cast<int>(std::floor(v - 0.5));
    bool taps = true;
    for (int dy = 0; dy <= 1 && taps; ++dy)
      for (int dx = 0; dx <= 1 && taps; ++dx) {
        const int x = tx + dx, y = ty + dy;
        taps = x >= 0 && y >= 0 && x < w && y < h && ref.covered(x, y);
      }
    if (!taps) continue;
    const Eigen::Vector3d sample = sample_bilinear(frame, u, v);
    const Eigen::Vector3d shade = face3d::sh_shading(n, gamma);
    for (int c = 0; c < 3; ++c) res.albedo(i, c) = std::clamp(sample[c] / std::max(shade[c], 1e-3), 0.0, 1.0);
    res.visible[static_cast<std::size_t>(i)] = true;
    ++visible;
  }
  if (visible == 0) throw PreconditionError("extract_detailed_albedo: no visible vertex in the selected frame");
  return res;
}

std::vector<int> select_keyframes(std::span<const Pose> poses, int window) {
  if (poses.empty()) throw PreconditionError("select_keyframes: empty pose sequence");
  if (window < 1) throw ConfigError("select_keyframes: window must be positive");
  const int n = static_cast<int>(poses.size());
  const int half = window / 2;
  std::vector<int> keys{0, n - 1};
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
      int arg_max = lo, arg_min = lo;
      for (int j = lo; j <= hi; ++j) {
        const double vj = poses[static_cast<std::size_t>(j)].angles[a];
        if (vj > poses[static_cast<std::size_t>(arg_max)].angles[a]) arg_max = j;
        if (vj < poses[static_cast<std::size_t>(arg_min)].angles[a]) arg_min = j;
      }
      if (poses[static_cast<std::size_t>(arg_max)].angles[a] == poses[static_cast<std::size_t>(arg_min)].angles[a])
        continue;  // flat window
      if (i == arg_max || i == arg_min) keys.push_back(i);
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

double pose_distance_sq(const Pose& a, const Pose& b, const PoseDistanceWeights& w) {
  const double deg = 180.0 / M_PI;
  return w.angle * ((a.angles - b.angles) * deg).squaredNorm() +
         w.translation * (a.translation - b.translation).squaredNorm();
}

int match_background_index(const Pose& query, std::span<const Pose> candidates, const PoseDistanceWeights& w) {
  if (candidates.empty()) throw PreconditionError("match_background: empty input video");
  int best = 0;
  double best_d = kInf;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = pose_distance_sq(query, candidates[i], w);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

BackgroundPlate match_background(const Pose& query, std::span<const Image> frames, std::span<const Pose> poses,
                                 const PoseDistanceWeights& w) {
  if (frames.size() != poses.size()) throw ConfigError("match_background: frame and pose counts differ");
  const int k = match_background_index(query, poses, w);
  return {frames[static_cast<std::size_t>(k)], k, poses[static_cast<std::size_t>(k)]};
}

std::vector<InterpolationWeight> interpolation_weights(std::span<const int> keyframes, int frame_count) {
  if (keyframes.size() < 2) throw PreconditionError("interpolation needs at least two keyframes");
  for (std::size_t k = 1; k < keyframes.size(); ++k)
    if (keyframes[k] <= keyframes[k - 1]) throw ConfigError("keyframes must be strictly increasing");
  const int last = static_cast<int>(keyframes.size()) - 1;
  std::vector<InterpolationWeight> out(static_cast<std::size_t>(frame_count));
  int seg = 0;
  for (int i = 0; i < frame_count; ++i) {
    auto& wt = out[static_cast<std::size_t>(i)];
    if (i <= keyframes[0]) {
      wt = {0, 1, 0.0};
      continue;
    }
    if (i >= keyframes[static_cast<std::size_t>(last)]) {
      wt = {last - 1, last, 1.0};
      continue;
    }
    while (keyframes[static_cast<std::size_t>(seg) + 1] < i) ++seg;
    const int ka = keyframes[static_cast<std::size_t>(seg)], kb = keyframes[static_cast<std::size_t>(seg) + 1];
    wt = {seg, seg + 1, static_cast<double>(i - ka) / static_cast<double>(kb - ka)};
  }
  return out;
}

std::vector<InterpolatedFrame> interpolate_backgrounds(std::span<const int> keyframes,
                                                       std::span<const BackgroundPlate> plates,
                                                       std::span<const Pose> predicted, double blend) {
  if (plates.size() != keyframes.size()) throw ConfigError("interpolate_backgrounds: one plate per keyframe");
  if (blend < 0.0 || blend > 1.0) throw ConfigError("interpolate_backgrounds: blend must be in [0,1]");
  for (const auto& p : plates)
    if (!p.image.same_size(plates[0].image)) throw ConfigError("interpolate_backgrounds: plate sizes differ");
  const auto weights = interpolation_weights(keyframes, static_cast<int>(predicted.size()));
  std::vector<InterpolatedFrame> out(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& wt = weights[i];
    const auto& a = plates[static_cast<std::size_t>(wt.key_a)];
    const auto& b = plates[static_cast<std::size_t>(wt.key_b)];
    auto& f = out[i];
    f.background = Image(a.image.width, a.image.height);
    for (std::size_t k = 0; k < f.background.data.size(); ++k)
      f.background.data[k] = (1.0 - wt.weight) * a.image.data[k] + wt.weight * b.image.data[k];
    f.background_pose = lerp(a.source_pose, b.source_pose, wt.weight);
    f.pose = lerp(predicted[i], f.background_pose, blend);
  }
  return out;
}

Image composite(const RenderedFrame& rendered, const Image& background) {
  if (!rendered.image.same_size(background)) throw ConfigError("composite: render and background sizes differ");
  Image out = background;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      if (rendered.covered(x, y))
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = rendered.image.at(x, y, c);
  return out;
}

void write_pose_csv(const std::string& path, std::span<const Pose> poses) {
  io::Table t;
  t.header = {"frame", "pitch", "yaw", "roll", "tx", "ty", "tz"};
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto v = poses[i].as_vector();
    t.rows.push_back({static_cast<double>(i), v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  io::write_csv(path, t);
}

std::vector<Pose> read_pose_csv(const std::string& path) {
  const io::Table t = io::read_csv(path);
  if (t.header.size() != 7) throw IoError("pose CSV must have 7 columns: " + path);
  std::vector<Pose> out;
  for (const auto& r : t.rows) {
    Eigen::VectorXd v(6);
    for (int k = 0; k < 6; ++k) v[k] = r[static_cast<std::size_t>(k) + 1];
    out.push_back(Pose::from_vector(v));
  }
  return out;
}

}  // namespace th::render
