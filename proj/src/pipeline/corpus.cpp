#include "talkinghead/pipeline/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/basis.hpp"
#include "talkinghead/face3d/model.hpp"
#include "talkinghead/io/container.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/io/png.hpp"
#include "talkinghead/render/render.hpp"

namespace th::pipeline {

namespace fs = std::filesystem;
using face3d::Pose;

namespace {

constexpr double kDeg = M_PI / 180.0;
constexpr double kHeadDepth = 6.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename M>
M as_f32(const M& m) {
  return m.template cast<float>().template cast<double>();
}

void quantize_image(Image& img) {
  for (auto& v : img.data) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
}

// AR(1) noise with the given stationary standard deviation.
Eigen::MatrixXd smooth_noise(int rows, int cols, double sd, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  const double innov = sd * std::sqrt(1.0 - rho * rho);
  for (int c = 0; c < cols; ++c) {
    double x = sd * n(rng);
    for (int r = 0; r < rows; ++r) {
      out(r, c) = x;
      x = rho * x + innov * n(rng);
    }
  }
  return out;
}

Eigen::MatrixXd motion_matrix(int rows, std::uint64_t salt) {
  std::mt19937_64 rng(0x7A1CULL + 977ULL * static_cast<std::uint64_t>(kMotionVersion) + salt);
  std::normal_distribution<double> n(0.0, 0.8);
  Eigen::MatrixXd m(rows, kAudioBands);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < kAudioBands; ++c) m(r, c) = n(rng);
  return m;
}

std::array<double, face3d::kGammaSize> base_lighting() {
  // Ambient plus a soft key light from the camera side and slightly above.
  const double phi0 = 0.5 * std::sqrt(1.0 / M_PI), phi1 = std::sqrt(3.0 / (4.0 * M_PI));
  std::array<double, face3d::kGammaSize> g{};
  for (int c = 0; c < 3; ++c) {
    g[static_cast<std::size_t>(c * 9 + 0)] = 0.72 / phi0;
    g[static_cast<std::size_t>(c * 9 + 1)] = 0.08 / phi1;
    g[static_cast<std::size_t>(c * 9 + 2)] = -0.22 / phi1;
  }
  return g;
}

std::string frame_name(int t) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << t << ".png";
  return s.str();
}

}  // namespace

void CorpusSpec::validate() const {
  if (identities < 1 || frames < 1 || image_size < 8 || sample_rate <= 0 || !(fps > 0.0))
    throw ConfigError("corpus spec: counts and rates must be positive (image_size >= 8)");
  if (dims.id <= 0 || dims.exp <= 0 || dims.tex <= 0) throw ConfigError("corpus spec: basis dims must be positive");
  if (tint_strength < 0 || detail_amplitude < 0 || expression_noise < 0 || pose_noise_deg < 0)
    throw ConfigError("corpus spec: noise and detail parameters must be nonnegative");
}

face3d::CoefficientSet IdentityData::coefficients(int t) const {
  face3d::CoefficientSet c = base;
  c.beta = beta.row(t).transpose();
  c.pose = poses[static_cast<std::size_t>(t)];
  return c;
}

Eigen::MatrixXd IdentityData::pose_matrix() const {
  Eigen::MatrixXd m(frames(), 6);
  for (int t = 0; t < frames(); ++t) m.row(t) = poses[static_cast<std::size_t>(t)].as_vector().transpose();
  return m;
}

Eigen::MatrixXd motion_expression(const Eigen::MatrixXd& envelopes, int exp_dim) {
  const Eigen::MatrixXd m = motion_matrix(exp_dim, 1);
  return (1.5 * (((2.0 * envelopes.array() - 1.0).matrix() * m.transpose()).array().tanh())).matrix();
}

Eigen::MatrixXd motion_pose_angles(const Eigen::MatrixXd& envelopes) {
  // Driven by band loudness on a log scale, as heard.
  const Eigen::MatrixXd m = motion_matrix(3, 2);
  const Eigen::MatrixXd loud = (0.7 * ((envelopes.array() + 0.05).log() + 1.0)).matrix();
  return ((loud * m.transpose()).array().tanh()).matrix();
}

Image make_background(int size, const Eigen::Vector3d& colour, const Pose& pose) {
  Image img(size, size);
  const double yaw = pose.angles[1], pitch = pose.angles[0];
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      const double wave = 0.12 * std::sin(2.0 * M_PI * 1.5 * u + 4.0 * yaw) * std::cos(2.0 * M_PI * v + 3.0 * pitch);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(colour[c] + wave + 0.08 * (v - 0.5), 0.0, 1.0);
    }
  return img;
}

Corpus synthesize_corpus(const CorpusSpec& spec, bool render_frames) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  face3d::SyntheticBasisConfig bcfg;
  bcfg.subdivisions = spec.basis_subdivisions;
  bcfg.dims = spec.dims;
  corpus.basis = face3d::make_synthetic_basis(bcfg);
  corpus.camera = face3d::Camera::for_image(spec.image_size, spec.image_size);
  const int v_count = corpus.basis.vertex_count();
  const auto lighting = base_lighting();
  const std::array<double, kAudioBands> carriers{220.0, 660.0, 1500.0, 3200.0};

  for (int id = 0; id < spec.identities; ++id) {
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(id) * 7919ULL + 1ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    IdentityData d;
    d.index = id;
    d.base = face3d::CoefficientSet::zeros(spec.dims);
    for (int i = 0; i < spec.dims.id; ++i) d.base.alpha[i] = 1.0 * normal(rng);
    for (int i = 0; i < spec.dims.tex; ++i) d.base.delta[i] = 1.0 * normal(rng);
    for (int i = 0; i < face3d::kGammaSize; ++i) d.base.gamma[i] = lighting[static_cast<std::size_t>(i)] + 0.05 * normal(rng);
    d.base.alpha = as_f32(d.base.alpha);
    d.base.delta = as_f32(d.base.delta);
    d.base.gamma = as_f32(d.base.gamma);
    for (int c = 0; c < 3; ++c) d.tint[c] = 1.0 + spec.tint_strength * uniform(-1.0, 1.0);
    d.tint = as_f32(d.tint);
    for (int c = 0; c < 3; ++c) d.background_colour[c] = uniform(0.2, 0.7);
    d.background_colour = as_f32(d.background_colour);

    const face3d::VertexMatrix low = face3d::assemble_texture(corpus.basis, d.base.delta);
    d.detailed_albedo.resize(v_count, 3);
    for (int v = 0; v < v_count; ++v)
      for (int c = 0; c < 3; ++c)
        d.detailed_albedo(v, c) = std::clamp(low(v, c) * d.tint[c] + spec.detail_amplitude * uniform(-1.0, 1.0), 0.0, 1.0);
    d.detailed_albedo = as_f32(d.detailed_albedo);

    // Audio: band carriers (speaker-dependent pitch) under slow smooth envelopes.
    struct Band {
      double carrier, phase, phase2;
      std::array<double, 3> freq, offset, amp;
    };
    std::array<Band, kAudioBands> bands{};
    for (int b = 0; b < kAudioBands; ++b) {
      auto& bd = bands[static_cast<std::size_t>(b)];
      bd.carrier = carriers[static_cast<std::size_t>(b)] * (1.0 + 0.15 * uniform(-1.0, 1.0));
      bd.phase = uniform(0.0, 2.0 * M_PI);
      bd.phase2 = uniform(0.0, 2.0 * M_PI);
      for (int j = 0; j < 3; ++j) {
        bd.freq[static_cast<std::size_t>(j)] = uniform(0.2, 1.2);
        bd.offset[static_cast<std::size_t>(j)] = uniform(0.0, 2.0 * M_PI);
        bd.amp[static_cast<std::size_t>(j)] = uniform(0.5, 1.0);
      }
    }
    auto envelope = [&](int b, double tau) {
      const auto& bd = bands[static_cast<std::size_t>(b)];
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += bd.amp[j] * std::sin(2.0 * M_PI * bd.freq[j] * tau + bd.offset[j]);
      return sigmoid(2.5 * s);
    };

    const int frames = spec.frames;
    const auto n_samples = static_cast<std::size_t>(std::llround(frames * spec.sample_rate / spec.fps));
    d.audio.sample_rate = spec.sample_rate;
    d.audio.samples.resize(n_samples);
    for (std::size_t n = 0; n < n_samples; ++n) {
      const double tau = static_cast<double>(n) / spec.sample_rate;
      double x = 0.002 * normal(rng);
      for (int b = 0; b < kAudioBands; ++b) {
        const auto& bd = bands[static_cast<std::size_t>(b)];
        const double w = 2.0 * M_PI * bd.carrier * tau;
        x += 0.16 * envelope(b, tau) * (std::sin(w + bd.phase) + 0.4 * std::sin(2.0 * w + bd.phase2));
      }
      d.audio.samples[n] = std::clamp(static_cast<double>(std::lround(x * 32768.0)), -32768.0, 32767.0) / 32768.0;
    }

    d.envelopes.resize(frames, kAudioBands);
    for (int t = 0; t < frames; ++t)
      for (int b = 0; b < kAudioBands; ++b) d.envelopes(t, b) = envelope(b, (t + 0.5) / spec.fps);
    d.envelopes = as_f32(d.envelopes);

    d.beta = motion_expression(d.envelopes, spec.dims.exp) +
             smooth_noise(frames, spec.dims.exp, spec.expression_noise, 0.9, rng);

    Eigen::Vector3d bias, amp;
    for (int a = 0; a < 3; ++a) {
      bias[a] = uniform(-8.0, 8.0) * kDeg;
      amp[a] = uniform(4.0, 10.0) * kDeg;
    }
    const Eigen::MatrixXd motion = motion_pose_angles(d.envelopes);
    const Eigen::MatrixXd angle_noise = smooth_noise(frames, 3, spec.pose_noise_deg * kDeg, 0.8, rng);
    const Eigen::MatrixXd shift_noise = smooth_noise(frames, 2, 0.01, 0.9, rng);
    d.poses.resize(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      Pose p;
      for (int a = 0; a < 3; ++a) p.angles[a] = bias[a] + amp[a] * motion(t, a) + angle_noise(t, a);
      p.translation = Eigen::Vector3d(shift_noise(t, 0), shift_noise(t, 1), kHeadDepth);
      d.poses[static_cast<std::size_t>(t)] = p;
    }

    if (render_frames) {
      d.rendered.reserve(static_cast<std::size_t>(frames));
      d.real.reserve(static_cast<std::size_t>(frames));
      const std::span<const double> gamma(d.base.gamma.data(), static_cast<std::size_t>(d.base.gamma.size()));
      for (int t = 0; t < frames; ++t) {
        const auto coeffs = d.coefficients(t);
        face3d::FaceMesh mesh = face3d::build_mesh(corpus.basis, coeffs);
        const Image bg = make_background(spec.image_size, d.background_colour, coeffs.pose);
        Image r = render::composite(render::rasterize(mesh, coeffs.pose, corpus.camera, gamma), bg);
        mesh.albedo = d.detailed_albedo;
        Image g = render::composite(render::rasterize(mesh, coeffs.pose, corpus.camera, gamma), bg);
        quantize_image(r);
        quantize_image(g);
        d.rendered.push_back(std::move(r));
        d.real.push_back(std::move(g));
      }
    }
    corpus.identities.push_back(std::move(d));
  }
  return corpus;
}

std::string identity_dir(const std::string& corpus_dir, int index) {
  std::ostringstream s;
  s << "identity_" << std::setw(2) << std::setfill('0') << index;
  return (fs::path(corpus_dir) / s.str()).string();
}

void write_coefficients_csv(const std::string& path, const Eigen::MatrixXd& beta, const std::vector<Pose>& poses) {
  if (beta.rows() != static_cast<Eigen::Index>(poses.size())) throw ConfigError("coefficient CSV: row counts differ");
  io::Table t;
  t.header.push_back("frame");
  for (Eigen::Index k = 0; k < beta.cols(); ++k) t.header.push_back("beta" + std::to_string(k));
  for (const char* h : {"pitch", "yaw", "roll", "tx", "ty", "tz"}) t.header.emplace_back(h);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    std::vector<double> row{static_cast<double>(i)};
    for (Eigen::Index k = 0; k < beta.cols(); ++k) row.push_back(beta(static_cast<Eigen::Index>(i), k));
    const auto p = poses[i].as_vector();
    for (int k = 0; k < 6; ++k) row.push_back(p[k]);
    t.rows.push_back(std::move(row));
  }
  io::write_csv(path, t);
}

void read_coefficients_csv(const std::string& path, Eigen::MatrixXd& beta, std::vector<Pose>& poses) {
  const io::Table t = io::read_csv(path);
  const int exp = static_cast<int>(t.header.size()) - 7;
  if (exp < 0) throw IoError("coefficient CSV has too few columns: " + path);
  beta.resize(static_cast<Eigen::Index>(t.rows.size()), exp);
  poses.clear();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r.size() != t.header.size()) throw IoError("ragged coefficient CSV: " + path);
    for (int k = 0; k < exp; ++k) beta(static_cast<Eigen::Index>(i), k) = r[static_cast<std::size_t>(1 + k)];
    Eigen::VectorXd p(6);
    for (int k = 0; k < 6; ++k) p[k] = r[static_cast<std::size_t>(1 + exp + k)];
    poses.push_back(Pose::from_vector(p));
  }
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  const auto& s = corpus.spec;
  nlohmann::ordered_json manifest = {
      {"kind", "talkinghead_corpus"},
      {"motion_version", kMotionVersion},
      {"identities", s.identities},
      {"frames", s.frames},
      {"fps", s.fps},
      {"image_size", s.image_size},
      {"sample_rate", s.sample_rate},
      {"seed", s.seed},
      {"dims", {s.dims.id, s.dims.exp, s.dims.tex}},
      {"basis_subdivisions", s.basis_subdivisions},
      {"tint_strength", s.tint_strength},
      {"detail_amplitude", s.detail_amplitude},
      {"expression_noise", s.expression_noise},
      {"pose_noise_deg", s.pose_noise_deg},
  };
  std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << '\n';
  face3d::save_basis(corpus.basis, (fs::path(dir) / "basis.bin").string());

  for (const auto& d : corpus.identities) {
    const fs::path idir = identity_dir(dir, d.index);
    fs::create_directories(idir);
    audio::save_wav(d.audio, (idir / "audio.wav").string());
    write_coefficients_csv((idir / "coefficients.csv").string(), d.beta, d.poses);
    io::Container c;
    c.meta() = {{"kind", "identity"}, {"index", d.index}};
    c.add_matrix("alpha", d.base.alpha);
    c.add_matrix("delta", d.base.delta);
    c.add_matrix("gamma", d.base.gamma);
    c.add_matrix("tint", d.tint);
    c.add_matrix("background_colour", d.background_colour);
    c.add_matrix("detailed_albedo", d.detailed_albedo);
    c.add_matrix("envelopes", d.envelopes);
    c.write((idir / "identity.bin").string());
    if (!d.rendered.empty()) {
      fs::create_directories(idir / "rendered");
      fs::create_directories(idir / "real");
      for (int t = 0; t < d.frames(); ++t) {
        io::write_png((idir / "rendered" / frame_name(t)).string(), d.rendered[static_cast<std::size_t>(t)]);
        io::write_png((idir / "real" / frame_name(t)).string(), d.real[static_cast<std::size_t>(t)]);
      }
    }
  }
}

Corpus read_corpus(const std::string& dir, bool load_frames) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("corpus manifest missing in " + dir + " (run prepare first)");
  const auto m = nlohmann::json::parse(in);
  if (m.value("kind", "") != "talkinghead_corpus") throw IoError("not a corpus manifest: " + dir);
  if (m.value("motion_version", 0) != kMotionVersion) throw IoError("corpus was generated by another motion version");
  Corpus corpus;
  auto& s = corpus.spec;
  s.identities = m.at("identities");
  s.frames = m.at("frames");
  s.fps = m.at("fps");
  s.image_size = m.at("image_size");
  s.sample_rate = m.at("sample_rate");
  s.seed = m.at("seed");
  s.dims = {m.at("dims")[0], m.at("dims")[1], m.at("dims")[2]};
  s.basis_subdivisions = m.at("basis_subdivisions");
  s.tint_strength = m.at("tint_strength");
  s.detail_amplitude = m.at("detail_amplitude");
  s.expression_noise = m.at("expression_noise");
  s.pose_noise_deg = m.at("pose_noise_deg");
  corpus.basis = face3d::load_basis((fs::path(dir) / "basis.bin").string());
  corpus.camera = face3d::Camera::for_image(s.image_size, s.image_size);

  for (int id = 0; id < s.identities; ++id) {
    const fs::path idir = identity_dir(dir, id);
    IdentityData d;
    d.index = id;
    d.audio = audio::load_wav((idir / "audio.wav").string());
    read_coefficients_csv((idir / "coefficients.csv").string(), d.beta, d.poses);
    const auto c = io::Container::read((idir / "identity.bin").string());
    d.base = face3d::CoefficientSet::zeros(s.dims);
    d.base.alpha = c.matrix("alpha").col(0);
    d.base.delta = c.matrix("delta").col(0);
    d.base.gamma = c.matrix("gamma").col(0);
    d.tint = c.matrix("tint").col(0);
    d.background_colour = c.matrix("background_colour").col(0);
    d.detailed_albedo = c.matrix("detailed_albedo");
    d.envelopes = c.matrix("envelopes");
    if (load_frames) {
      for (int t = 0; t < d.frames(); ++t) {
        d.rendered.push_back(io::read_png((idir / "rendered" / frame_name(t)).string()));
        d.real.push_back(io::read_png((idir / "real" / frame_name(t)).string()));
      }
    }
    corpus.identities.push_back(std::move(d));
  }
  return corpus;
}

}  // namespace th::pipeline
