#include "talkinghead/pipeline/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "talkinghead/error.hpp"

namespace th::pipeline {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("config: bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto i = [&](int& dst) { dst = parse_number<int>(key, v); };
  auto d = [&](double& dst) { dst = parse_number<double>(key, v); };
  const std::map<std::string, std::function<void()>> setters = {
      {"data_root", [&] { data_root = v; }},
      {"identities", [&] { i(corpus.identities); }},
      {"frames_per_identity", [&] { i(corpus.frames); }},
      {"fps", [&] { d(corpus.fps); }},
      {"image_size", [&] { i(corpus.image_size); }},
      {"sample_rate", [&] { i(corpus.sample_rate); }},
      {"id_dim", [&] { i(corpus.dims.id); }},
      {"exp_dim", [&] { i(corpus.dims.exp); }},
      {"tex_dim", [&] { i(corpus.dims.tex); }},
      {"basis_subdivisions", [&] { i(corpus.basis_subdivisions); }},
      {"tint_strength", [&] { d(corpus.tint_strength); }},
      {"detail_amplitude", [&] { d(corpus.detail_amplitude); }},
      {"expression_noise", [&] { d(corpus.expression_noise); }},
      {"pose_noise_deg", [&] { d(corpus.pose_noise_deg); }},
      {"finetune_frames", [&] { i(finetune_frames); }},
      {"holdout_start", [&] { i(holdout_start); }},
      {"chunk_frames", [&] { i(chunk_frames); }},
      {"validation_fraction", [&] { d(validation_fraction); }},
      {"encoder_width", [&] { i(encoder_width); }},
      {"hidden", [&] { i(hidden); }},
      {"general_epochs", [&] { i(general_epochs); }},
      {"general_lr", [&] { d(general_lr); }},
      {"finetune_epochs", [&] { i(finetune_epochs); }},
      {"finetune_lr", [&] { d(finetune_lr); }},
      {"lambda_pose", [&] { d(loss.pose); }},
      {"lambda_pose_continuity", [&] { d(loss.pose_continuity); }},
      {"lambda_expression_continuity", [&] { d(loss.expression_continuity); }},
      {"keyframe_window", [&] { i(keyframe_window); }},
      {"pose_blend", [&] { d(pose_blend); }},
      {"smoothing_window", [&] { i(smoothing_window); }},
      {"gan_base_width", [&] { i(gan_base_width); }},
      {"gan_depth", [&] { i(gan_depth); }},
      {"refiner_epochs", [&] { i(refiner_epochs); }},
      {"refiner_finetune_epochs", [&] { i(refiner_finetune_epochs); }},
      {"identity_warmup_epochs", [&] { i(identity_warmup_epochs); }},
      {"bank_capacity", [&] { i(bank_capacity); }},
      {"tau", [&] { d(tau); }},
      {"margin", [&] { d(margin); }},
      {"lambda_l1", [&] { d(gan_loss.l1); }},
      {"lambda_attention", [&] { d(gan_loss.attention); }},
      {"lambda_tv", [&] { d(gan_loss.tv); }},
      {"generator_lr", [&] { d(generator_lr); }},
      {"discriminator_lr", [&] { d(discriminator_lr); }},
      {"use_finetune", [&] { use_finetune = parse_bool(key, v); }},
      {"use_refiner", [&] { use_refiner = parse_bool(key, v); }},
      {"sweep_lengths",
       [&] {
         sweep_lengths.clear();
         std::istringstream in(v);
         std::string item;
         while (std::getline(in, item, ','))
           if (!trim(item).empty()) sweep_lengths.push_back(parse_number<int>(key, trim(item)));
       }},
      {"seed",
       [&] {
         seed = parse_number<std::uint64_t>(key, v);
         corpus.seed = seed;
       }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second();
}

void RunConfig::validate() const {
  corpus.validate();
  if (corpus.identities < 2) throw ConfigError("config: need at least one general identity plus the target");
  if (finetune_frames < 1 || finetune_frames > holdout_start)
    throw ConfigError("config: finetune_frames must be in [1, holdout_start]");
  if (holdout_start >= corpus.frames) throw ConfigError("config: holdout_start must leave held-out target frames");
  for (int n : sweep_lengths)
    if (n < 1 || n > holdout_start) throw ConfigError("config: sweep lengths must be in [1, holdout_start]");
  if (chunk_frames < 1) throw ConfigError("config: chunk_frames must be positive");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) throw ConfigError("config: validation_fraction in [0,1)");
  if (loss.pose < 0 || loss.pose_continuity < 0 || loss.expression_continuity < 0 || gan_loss.l1 < 0 ||
      gan_loss.attention < 0 || gan_loss.tv < 0)
    throw ConfigError("config: loss weights must be nonnegative");
  if (general_epochs < 0 || finetune_epochs < 0 || refiner_epochs < 0 || refiner_finetune_epochs < 0)
    throw ConfigError("config: epoch counts must be nonnegative");
  if (!(general_lr >= 0) || !(finetune_lr >= 0) || !(generator_lr >= 0) || !(discriminator_lr >= 0))
    throw ConfigError("config: learning rates must be nonnegative");
  if (pose_blend < 0 || pose_blend > 1) throw ConfigError("config: pose_blend must be in [0,1]");
  if (smoothing_window < 1 || keyframe_window < 0 || bank_capacity < 1)
    throw ConfigError("config: windows and bank capacity must be positive");
  gan_config().validate();
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::string lengths;
  for (std::size_t k = 0; k < sweep_lengths.size(); ++k) lengths += (k ? "," : "") + std::to_string(sweep_lengths[k]);
  return {{"data_root", data_root},
          {"identities", str(corpus.identities)},
          {"frames_per_identity", str(corpus.frames)},
          {"fps", str(corpus.fps)},
          {"image_size", str(corpus.image_size)},
          {"exp_dim", str(corpus.dims.exp)},
          {"finetune_frames", str(finetune_frames)},
          {"holdout_start", str(holdout_start)},
          {"general_epochs", str(general_epochs)},
          {"finetune_epochs", str(finetune_epochs)},
          {"refiner_epochs", str(refiner_epochs)},
          {"use_finetune", use_finetune ? "true" : "false"},
          {"use_refiner", use_refiner ? "true" : "false"},
          {"sweep_lengths", lengths},
          {"seed", str(seed)}};
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  RunConfig cfg;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : from_file(path);
  if (const char* env = std::getenv("TALKINGHEAD_DATA"); env != nullptr && *env != '\0') cfg.data_root = env;
  return cfg;
}

int RunConfig::window_frames() const {
  return keyframe_window > 0 ? keyframe_window : std::max(1, static_cast<int>(std::lround(corpus.fps)));
}

a2c::MapperConfig RunConfig::mapper_config() const {
  a2c::MapperConfig m;
  m.input_dim = audio::MfccConfig{}.feature_dim();
  m.encoder_width = encoder_width;
  m.hidden = hidden;
  m.exp_dim = corpus.dims.exp;
  m.seed = seed + 1;
  return m;
}

refine::GanConfig RunConfig::gan_config() const {
  refine::GanConfig g;
  g.image_size = corpus.image_size;
  g.base_width = gan_base_width;
  g.depth = gan_depth;
  g.seed = seed + 2;
  return g;
}

refine::RefineTrainConfig RunConfig::refine_config(int epochs, int warmup) const {
  refine::RefineTrainConfig r;
  r.epochs = epochs;
  r.identity_warmup_epochs = warmup;
  r.tau = tau;
  r.margin = margin;
  r.bank_capacity = bank_capacity;
  r.weights = gan_loss;
  r.generator_adam.lr = generator_lr;
  r.discriminator_adam.lr = discriminator_lr;
  r.shuffle_seed = seed + 3;
  return r;
}

std::string Paths::corpus() const { return (fs::path(root) / "corpus").string(); }
std::string Paths::models() const { return (fs::path(root) / "models").string(); }
std::string Paths::output() const { return (fs::path(root) / "output").string(); }
std::string Paths::reports() const { return (fs::path(root) / "reports").string(); }
std::string Paths::general_mapper() const { return (fs::path(models()) / "mapper_general.bin").string(); }
std::string Paths::personal_mapper() const { return (fs::path(models()) / "mapper_personal.bin").string(); }
std::string Paths::general_refiner() const { return (fs::path(models()) / "refiner_general.bin").string(); }
std::string Paths::personal_refiner() const { return (fs::path(models()) / "refiner_personal.bin").string(); }

}  // namespace th::pipeline
