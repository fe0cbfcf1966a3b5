#include "talkinghead/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "talkinghead/error.hpp"

namespace th::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b) || a.data.size() != b.data.size() || a.empty())
    throw ConfigError(std::string(what) + ": images must be nonempty and of equal size");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of one channel plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& plane, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const Eigen::Index h = plane.rows() - n + 1, w = plane.cols() - n + 1;
  Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(plane.rows(), w);
  for (Eigen::Index y = 0; y < plane.rows(); ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * plane(y, x + i);
      tmp(y, x) = acc;
    }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * tmp(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

Eigen::MatrixXd channel(const Image& img, int c) {
  Eigen::MatrixXd m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m(y, x) = img.at(x, y, c);
  return m;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y, bool& degenerate) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double scale_x = std::max(1.0, mx * mx) * n, scale_y = std::max(1.0, my * my) * n;
  degenerate = sxx <= 1e-24 * scale_x || syy <= 1e-24 * scale_y;
  if (degenerate) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, const SsimConfig& cfg) {
  require_same(a, b, "ssim");
  if (a.width < cfg.window || a.height < cfg.window)
    throw PreconditionError("ssim: image smaller than the " + std::to_string(cfg.window) + "px window");
  const auto k = gaussian_kernel(cfg.window, cfg.sigma);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Eigen::MatrixXd x = channel(a, c), y = channel(b, c);
    const Eigen::MatrixXd mx = filter_valid(x, k), my = filter_valid(y, k);
    const Eigen::MatrixXd sxx = filter_valid(x.cwiseProduct(x), k) - mx.cwiseProduct(mx);
    const Eigen::MatrixXd syy = filter_valid(y.cwiseProduct(y), k) - my.cwiseProduct(my);
    const Eigen::MatrixXd sxy = filter_valid(x.cwiseProduct(y), k) - mx.cwiseProduct(my);
    const Eigen::ArrayXXd num = (2 * mx.cwiseProduct(my).array() + c1) * (2 * sxy.array() + c2);
    const Eigen::ArrayXXd den =
        (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
    total += (num / den).mean();
  }
  return total / 3.0;
}

double lmd(const LandmarkSequence& generated, const LandmarkSequence& truth, bool align) {
  if (generated.size() != truth.size() || generated.empty()) throw ConfigError("lmd: frame counts differ or are zero");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < generated.size(); ++t) {
    const auto& g = generated[t];
    const auto& r = truth[t];
    if (g.rows() != r.rows() || g.rows() == 0) throw ConfigError("lmd: landmark counts differ or are zero");
    Eigen::RowVector2d shift = Eigen::RowVector2d::Zero();
    if (align) shift = r.colwise().mean() - g.colwise().mean();
    for (Eigen::Index i = 0; i < g.rows(); ++i) acc += (g.row(i) + shift - r.row(i)).norm();
    count += static_cast<std::size_t>(g.rows());
  }
  return acc / static_cast<double>(count);
}

int HistogramConfig::bins() const {
  const double n = (max_deg - min_deg) / bin_deg;
  const int b = static_cast<int>(std::lround(n));
  if (b <= 1 || std::abs(n - b) > 1e-9) throw ConfigError("histogram: range must be a multiple of the bin width");
  return b;
}

PoseHistogram pose_histogram(const Eigen::MatrixXd& angles_rad, const HistogramConfig& config) {
  if (angles_rad.rows() == 0) throw PreconditionError("pose_histogram: empty sequence");
  if (angles_rad.cols() < 3) throw ConfigError("pose_histogram: need pitch, yaw and roll columns");
  const int nb = config.bins();
  PoseHistogram h;
  h.config = config;
  bool clamped = false;
  const double n = static_cast<double>(angles_rad.rows());
  for (int a = 0; a < 3; ++a) {
    auto& bins = h.angle[static_cast<std::size_t>(a)];
    bins.assign(static_cast<std::size_t>(nb), 0.0);
    for (Eigen::Index t = 0; t < angles_rad.rows(); ++t) {
      const double deg = angles_rad(t, a) * 180.0 / M_PI;
      if (!std::isfinite(deg)) throw ValidationError("pose_histogram: non-finite angle");
      int b = static_cast<int>(std::floor((deg - config.min_deg) / config.bin_deg));
      if (b < 0 || b >= nb) {
        // The upper support edge itself belongs to the last bin.
        if (!(deg == config.max_deg)) clamped = true;
        b = std::clamp(b, 0, nb - 1);
      }
      bins[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& v : bins) v /= n;  // counts first, so a single occupied bin holds exactly 1
  }
  if (clamped) warn("pose_histogram: angles outside the histogram support were clamped");
  return h;
}

PoseHistogram pose_histogram(std::span<const face3d::Pose> poses, const HistogramConfig& config) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(poses.size()), 3);
  for (std::size_t i = 0; i < poses.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = poses[i].angles.transpose();
  return pose_histogram(m, config);
}

double wasserstein1(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.size() < 2) throw ConfigError("wasserstein1: histograms must share at least two bins");
  double cp = 0.0, cq = 0.0, acc = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
    acc += std::abs(cp - cq);
  }
  return acc / static_cast<double>(p.size() - 1);
}

double hs_score(const PoseHistogram& real, const PoseHistogram& generated) {
  if (real.config.bins() != generated.config.bins() || real.config.min_deg != generated.config.min_deg ||
      real.config.bin_deg != generated.config.bin_deg)
    throw ConfigError("hs_score: histograms use different bins");
  double w = 0.0;
  for (std::size_t a = 0; a < 3; ++a) w += wasserstein1(real.angle[a], generated.angle[a]);
  return std::clamp(1.0 - w / 3.0, 0.0, 1.0);
}

CorrelationResult audio_pose_correlation(const Eigen::MatrixXd& features, const Eigen::MatrixXd& angles,
                                         double radius) {
  if (features.rows() != angles.rows()) throw ConfigError("audio_pose_correlation: frame counts differ");
  if (features.rows() < 3) throw PreconditionError("audio_pose_correlation: need at least 3 frames");
  if (angles.cols() < 3) throw ConfigError("audio_pose_correlation: need three angle columns");
  std::vector<double> fd, pd;
  const Eigen::Index t_len = features.rows();
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double r = radius * features.row(t).norm();
    for (Eigen::Index u = 0; u < t_len; ++u) {
      if (u == t) continue;
      const double d = (features.row(t) - features.row(u)).norm();
      if (d > r) continue;
      fd.push_back(d);
      pd.push_back((angles.row(t).head<3>() - angles.row(u).head<3>()).norm());
    }
  }
  if (fd.empty()) throw PreconditionError("audio_pose_correlation: every neighbourhood is empty");
  CorrelationResult res;
  res.pairs = fd.size();
  bool degenerate = false;
  const double c = pearson(fd, pd, degenerate);
  if (degenerate)
    warn("audio_pose_correlation: zero variance in a distance list; correlation undefined");
  else
    res.coefficient = c;
  return res;
}

void write_report_json(const std::string& path, std::span<const MetricRow> rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["name"] = r.name;
    o["psnr"] = r.psnr;
    o["ssim"] = r.ssim;
    o["lmd"] = r.lmd;
    o["hs"] = r.hs;
    o["correlation"] = r.correlation ? nlohmann::ordered_json(*r.correlation) : nlohmann::ordered_json(nullptr);
    j.push_back(o);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  out << j.dump(2) << '\n';
}

void write_report_csv(const std::string& path, std::span<const MetricRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  out << "name,psnr,ssim,lmd,hs,correlation\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.name << ',' << r.psnr << ',' << r.ssim << ',' << r.lmd << ',' << r.hs << ',';
    if (r.correlation) out << *r.correlation;
    out << '\n';
  }
}

}  // namespace th::metrics
