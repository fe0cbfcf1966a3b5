#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talkinghead/face3d/types.hpp"
#include "talkinghead/io/image.hpp"

namespace th::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for images in [0,1]; identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over all valid window positions, averaged over the colour channels.
double ssim(const Image& a, const Image& b, const SsimConfig& config = {});

/// Per-frame landmark sets, each L x 2 pixels.
using LandmarkSequence = std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>>;

/// Mean Euclidean landmark distance; with `align` each frame's sets are centred first.
double lmd(const LandmarkSequence& generated, const LandmarkSequence& truth, bool align = true);

struct HistogramConfig {
  double min_deg = -90.0;
  double max_deg = 90.0;
  double bin_deg = 1.0;

  [[nodiscard]] int bins() const;
};

/// Normalized per-angle histograms of (pitch, yaw, roll).
struct PoseHistogram {
  HistogramConfig config;
  std::array<std::vector<double>, 3> angle;
};

/// Angles outside the support are clamped into the edge bins with a warning.
PoseHistogram pose_histogram(std::span<const face3d::Pose> poses, const HistogramConfig& config = {});
PoseHistogram pose_histogram(const Eigen::MatrixXd& angles_rad, const HistogramConfig& config = {});

/// 1-D W1 between two histograms on the same bins, as a fraction of the distance between
/// the outermost bin centres (point masses in the two edge bins give 1).
double wasserstein1(std::span<const double> p, std::span<const double> q);

/// 1 - mean over the three angles of the normalized W1.
double hs_score(const PoseHistogram& real, const PoseHistogram& generated);

struct CorrelationResult {
  std::optional<double> coefficient;  // empty when a distance list has zero variance
  std::size_t pairs = 0;
};

/// Pearson correlation between feature distances and pose-angle distances over
/// ordered pairs (t, t') with |s_t - s_t'| <= radius * |s_t|.
CorrelationResult audio_pose_correlation(const Eigen::MatrixXd& features, const Eigen::MatrixXd& angles,
                                         double radius = 0.5);

/// One evaluated video.
struct MetricRow {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  double lmd = 0;
  double hs = 0;
  std::optional<double> correlation;
};

void write_report_json(const std::string& path, std::span<const MetricRow> rows);
void write_report_csv(const std::string& path, std::span<const MetricRow> rows);

}  // namespace th::metrics
