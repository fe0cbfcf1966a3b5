#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talkinghead/audio/mfcc.hpp"
#include "talkinghead/face3d/types.hpp"
#include "talkinghead/io/image.hpp"

namespace th::pipeline {

/// Version of the fixed audio-to-motion ground-truth function. Bump when it changes.
inline constexpr int kMotionVersion = 1;
inline constexpr int kAudioBands = 4;

struct CorpusSpec {
  int identities = 4;
  int frames = 400;  // per identity
  double fps = 25.0;
  int image_size = 32;
  int sample_rate = 16000;
  std::uint64_t seed = 2024;
  face3d::BasisDims dims{};
  int basis_subdivisions = 3;
  double tint_strength = 0.2;      // per-channel albedo gain of "real" frames, +-
  double detail_amplitude = 0.03;  // high-frequency per-vertex albedo detail
  double expression_noise = 0.02;
  double pose_noise_deg = 0.3;

  void validate() const;
};

struct IdentityData {
  int index = 0;
  face3d::CoefficientSet base;        // alpha, delta, gamma; beta and pose vary per frame
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();
  face3d::VertexMatrix detailed_albedo;
  Eigen::Vector3d background_colour = Eigen::Vector3d::Constant(0.5);
  audio::AudioClip audio;
  Eigen::MatrixXd envelopes;          // T x kAudioBands, the latent driving signal
  Eigen::MatrixXd beta;               // T x D_exp
  std::vector<face3d::Pose> poses;    // T
  std::vector<Image> rendered;        // low-frequency albedo over the background
  std::vector<Image> real;            // detailed albedo over the same background

  [[nodiscard]] int frames() const { return static_cast<int>(poses.size()); }
  [[nodiscard]] face3d::CoefficientSet coefficients(int t) const;
  [[nodiscard]] Eigen::MatrixXd pose_matrix() const;  // T x 6
};

struct Corpus {
  CorpusSpec spec;
  face3d::FaceBasis basis;
  face3d::Camera camera;
  std::vector<IdentityData> identities;
};

/// Deterministic in spec.seed. Audio is quantized to 16-bit and frames to 8-bit, so a
/// corpus read back from disk equals the synthesized one.
Corpus synthesize_corpus(const CorpusSpec& spec, bool render_frames = true);

/// Smooth pose-dependent backdrop with an identity colour.
Image make_background(int size, const Eigen::Vector3d& colour, const face3d::Pose& pose);

/// Ground-truth motion from the per-frame band envelopes (values in [0,1]).
Eigen::MatrixXd motion_expression(const Eigen::MatrixXd& envelopes, int exp_dim);
Eigen::MatrixXd motion_pose_angles(const Eigen::MatrixXd& envelopes);  // T x 3, before identity bias/amplitude

void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus read_corpus(const std::string& dir, bool load_frames = true);
std::string identity_dir(const std::string& corpus_dir, int index);

/// Per-frame coefficient table: frame, beta..., pitch, yaw, roll, tx, ty, tz.
void write_coefficients_csv(const std::string& path, const Eigen::MatrixXd& beta, const std::vector<face3d::Pose>& poses);
void read_coefficients_csv(const std::string& path, Eigen::MatrixXd& beta, std::vector<face3d::Pose>& poses);

}  // namespace th::pipeline
