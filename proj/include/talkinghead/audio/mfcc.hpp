#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace th::audio {

struct AudioClip {
  std::vector<double> samples;  // mono PCM in [-1, 1]
  int sample_rate = 16000;

  [[nodiscard]] double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  void validate() const;
};

struct MfccConfig {
  int sample_rate = 16000;
  int window = 400;  // 25 ms Hann
  int hop = 160;     // 10 ms
  int n_fft = 512;
  int n_mel = 26;
  int n_cepstra = 13;
  int context_frames = 28;  // 280 ms centred on each video frame
  double fps = 25.0;
  double log_floor = 1e-10;

  [[nodiscard]] int feature_dim() const { return n_cepstra * context_frames; }
  [[nodiscard]] int context_samples() const { return context_frames * hop; }
};

/// One row per video frame: the concatenated MFCC frames of the context window.
struct AudioFeatureSequence {
  Eigen::MatrixXd features;  // T x (n_cepstra * context_frames)
  double frame_rate = 25.0;

  [[nodiscard]] int frames() const { return static_cast<int>(features.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(features.cols()); }
};

/// Frame-level analysis of a single window starting at `start` in `signal`.
struct MfccFrame {
  std::vector<double> cepstra;       // c0 = log frame energy, c1.. = DCT-II of log mel energies
  std::vector<double> mel_energies;  // before the log
};

/// Triangular mel filterbank, n_mel x (n_fft/2 + 1), HTK mel scale.
Eigen::MatrixXd mel_filterbank(const MfccConfig& config);
/// Centre frequency (Hz) of each mel filter plus the two outer edges: n_mel + 2 points.
std::vector<double> mel_edge_frequencies(const MfccConfig& config);

/// Analyzes windows of a signal already at config.sample_rate.
class MfccAnalyzer {
 public:
  explicit MfccAnalyzer(const MfccConfig& config);
  ~MfccAnalyzer();
  MfccAnalyzer(const MfccAnalyzer&) = delete;
  MfccAnalyzer& operator=(const MfccAnalyzer&) = delete;

  [[nodiscard]] MfccFrame analyze(std::span<const double> window_samples) const;
  [[nodiscard]] const MfccConfig& config() const { return config_; }

 private:
  struct Impl;
  MfccConfig config_;
  Eigen::MatrixXd filterbank_;
  std::vector<double> hann_;
  Impl* impl_;
};

/// Linear-interpolation resampler.
AudioClip resample(const AudioClip& clip, int target_rate);

AudioFeatureSequence compute_mfcc(const AudioClip& clip, const MfccConfig& config = {});

/// Euclidean distance between two feature rows.
double mfcc_distance(std::span<const double> a, std::span<const double> b);

AudioClip load_wav(const std::string& path);
void save_wav(const AudioClip& clip, const std::string& path);

void save_features_csv(const AudioFeatureSequence& seq, const std::string& path);
/// Container kind "audio_features": array "features" (T x D f32), meta frame_rate.
void save_features(const AudioFeatureSequence& seq, const std::string& path);
AudioFeatureSequence load_features(const std::string& path);

}  // namespace th::audio
