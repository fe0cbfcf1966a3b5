#include "talkinghead/audio/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fftw3.h>

#include "talkinghead/error.hpp"
#include "talkinghead/io/container.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/io/wav.hpp"

namespace th::audio {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// numpy-style "reflect" padding (edge sample not repeated).
double reflected(const std::vector<double>& x, long i) {
  const long n = static_cast<long>(x.size());
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<std::size_t>(i)];
}

}  // namespace

void AudioClip::validate() const {
  if (sample_rate <= 0) throw ValidationError("audio sample rate must be positive");
  for (double s : samples)
    if (!std::isfinite(s)) throw ValidationError("audio contains non-finite samples");
}

std::vector<double> mel_edge_frequencies(const MfccConfig& config) {
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(config.sample_rate / 2.0);
  std::vector<double> hz(static_cast<std::size_t>(config.n_mel + 2));
  for (int i = 0; i < config.n_mel + 2; ++i) hz[i] = mel_to_hz(lo + (hi - lo) * i / (config.n_mel + 1));
  return hz;
}

Eigen::MatrixXd mel_filterbank(const MfccConfig& config) {
  const int bins = config.n_fft / 2 + 1;
  const auto edges = mel_edge_frequencies(config);
  std::vector<int> bin(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i)
    bin[i] = static_cast<int>(std::floor((config.n_fft + 1) * edges[i] / config.sample_rate));
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mel, bins);
  for (int m = 0; m < config.n_mel; ++m) {
    const int left = bin[m], centre = bin[m + 1], right = bin[m + 2];
    for (int k = left; k < centre; ++k) fb(m, k) = static_cast<double>(k - left) / std::max(centre - left, 1);
    for (int k = centre; k < right && k < bins; ++k)
      fb(m, k) = static_cast<double>(right - k) / std::max(right - centre, 1);
  }
  return fb;
}

struct MfccAnalyzer::Impl {
  int n = 0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
};

MfccAnalyzer::MfccAnalyzer(const MfccConfig& config)
    : config_(config), filterbank_(mel_filterbank(config)), impl_(new Impl) {
  if (config.window <= 0 || config.window > config.n_fft || config.hop <= 0 || config.n_cepstra > config.n_mel ||
      config.n_cepstra < 1 || config.context_frames < 1 || config.fps <= 0)
    throw ConfigError("invalid MFCC configuration");
  hann_.resize(static_cast<std::size_t>(config.window));
  // Periodic Hann window.
  for (int i = 0; i < config.window; ++i)
    hann_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / config.window);
  impl_->n = config.n_fft;
  impl_->in = fftw_alloc_real(static_cast<std::size_t>(config.n_fft));
  impl_->out = fftw_alloc_complex(static_cast<std::size_t>(config.n_fft / 2 + 1));
  impl_->plan = fftw_plan_dft_r2c_1d(config.n_fft, impl_->in, impl_->out, FFTW_ESTIMATE);
}

MfccAnalyzer::~MfccAnalyzer() {
  fftw_destroy_plan(impl_->plan);
  fftw_free(impl_->in);
  fftw_free(impl_->out);
  delete impl_;
}

MfccFrame MfccAnalyzer::analyze(std::span<const double> window_samples) const {
  if (window_samples.size() != static_cast<std::size_t>(config_.window))
    throw ConfigError("analyze: window has the wrong length");
  const int n = config_.n_fft;
  for (int i = 0; i < n; ++i) impl_->in[i] = i < config_.window ? window_samples[i] * hann_[i] : 0.0;
  fftw_execute(impl_->plan);
  const int bins = n / 2 + 1;
  Eigen::VectorXd power(bins);
  for (int k = 0; k < bins; ++k)
    power[k] = (impl_->out[k][0] * impl_->out[k][0] + impl_->out[k][1] * impl_->out[k][1]) / n;

  MfccFrame frame;
  const Eigen::VectorXd mel = filterbank_ * power;
  frame.mel_energies.assign(mel.data(), mel.data() + mel.size());

  const int m = config_.n_mel;
  std::vector<double> logmel(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) logmel[i] = std::log(std::max(mel[i], config_.log_floor));
  frame.cepstra.resize(static_cast<std::size_t>(config_.n_cepstra));
  for (int k = 1; k < config_.n_cepstra; ++k) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += logmel[i] * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * m));
    frame.cepstra[k] = acc * std::sqrt(2.0 / m);
  }
  frame.cepstra[0] = std::log(std::max(power.sum(), config_.log_floor));
  return frame;
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  clip.validate();
  if (target_rate <= 0) throw ConfigError("resample: target rate must be positive");
  if (clip.sample_rate == target_rate) return clip;
  AudioClip out;
  out.sample_rate = target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::floor(static_cast<double>(clip.samples.size()) * target_rate / clip.sample_rate));
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * clip.sample_rate / target_rate;
    const auto i0 = static_cast<std::size_t>(t);
    const double f = t - static_cast<double>(i0);
    const double a = clip.samples[std::min(i0, clip.samples.size() - 1)];
    const double b = clip.samples[std::min(i0 + 1, clip.samples.size() - 1)];
    out.samples[i] = a + f * (b - a);
  }
  return out;
}

AudioFeatureSequence compute_mfcc(const AudioClip& input, const MfccConfig& config) {
  input.validate();
  const AudioClip clip = resample(input, config.sample_rate);
  const auto n = static_cast<long>(clip.samples.size());
  if (n < config.context_samples())
    throw PreconditionError("compute_mfcc: clip is shorter than one context window (" +
                            std::to_string(config.context_samples()) + " samples)");

  MfccAnalyzer analyzer(config);
  const double samples_per_frame = config.sample_rate / config.fps;
  const int rows = static_cast<int>(std::floor(static_cast<double>(n) / samples_per_frame + 1e-9));
  const int k = config.context_frames;

  AudioFeatureSequence seq;
  seq.frame_rate = config.fps;
  seq.features.resize(rows, config.feature_dim());
  std::vector<double> window(static_cast<std::size_t>(config.window));
  for (int t = 0; t < rows; ++t) {
    const double centre = (t + 0.5) * samples_per_frame;
    for (int j = 0; j < k; ++j) {
      // Analysis-window centres are spaced one hop apart, symmetric about the frame centre.
      const double wc = centre + (j - (k - 1) / 2.0) * config.hop;
      const long start = std::lround(wc - config.window / 2.0);
      for (int i = 0; i < config.window; ++i) window[i] = reflected(clip.samples, start + i);
      const MfccFrame f = analyzer.analyze(window);
      for (int c = 0; c < config.n_cepstra; ++c) seq.features(t, j * config.n_cepstra + c) = f.cepstra[c];
    }
  }
  return seq;
}

double mfcc_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("mfcc_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

AudioClip load_wav(const std::string& path) {
  io::WavData w = io::read_wav(path);
  return AudioClip{std::move(w.samples), w.sample_rate};
}

void save_wav(const AudioClip& clip, const std::string& path) { io::write_wav(path, clip.samples, clip.sample_rate); }

void save_features_csv(const AudioFeatureSequence& seq, const std::string& path) {
  io::write_matrix_csv(path, seq.features);
}

void save_features(const AudioFeatureSequence& seq, const std::string& path) {
  io::Container c;
  c.meta() = {{"kind", "audio_features"}, {"frame_rate", seq.frame_rate}, {"frames", seq.frames()}, {"dim", seq.dim()}};
  c.add_matrix("features", seq.features);
  c.write(path);
}

AudioFeatureSequence load_features(const std::string& path) {
  const io::Container c = io::Container::read(path);
  if (c.meta().value("kind", "") != "audio_features") throw IoError("not an audio_features container: " + path);
  AudioFeatureSequence s;
  s.frame_rate = c.meta().at("frame_rate").get<double>();
  s.features = c.matrix("features");
  return s;
}

}  // namespace th::audio
