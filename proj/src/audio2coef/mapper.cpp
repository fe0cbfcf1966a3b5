#include "talkinghead/audio2coef/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "talkinghead/error.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/nn/ops.hpp"

namespace th::a2c {

namespace {

nn::Tensor to_tensor(const Eigen::MatrixXd& m) {
  nn::Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

Eigen::MatrixXd to_matrix(const nn::Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int r = 0; r < t.dim(0); ++r)
    for (int c = 0; c < t.dim(1); ++c) m(r, c) = t[static_cast<std::size_t>(r) * t.dim(1) + c];
  return m;
}

Eigen::MatrixXd time_diff(const Eigen::MatrixXd& m) {
  if (m.rows() < 2) return Eigen::MatrixXd::Zero(0, m.cols());
  return m.bottomRows(m.rows() - 1) - m.topRows(m.rows() - 1);
}

}  // namespace

Standardizer Standardizer::identity(int dim) {
  return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& data) {
  if (data.rows() == 0) throw PreconditionError("Standardizer::fit on empty data");
  Standardizer s;
  s.mean = data.colwise().mean();
  s.scale.resize(data.cols());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double var = (data.col(c).array() - s.mean[c]).square().mean();
    const double sd = std::sqrt(var);
    s.scale[c] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw ConfigError("Standardizer: column count mismatch");
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw ConfigError("Standardizer: column count mismatch");
  return (x.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

void SequenceSample::validate() const {
  const int t = frames();
  if (beta.rows() != t || pose.rows() != t) throw ConfigError("sequence sample: audio, beta and pose lengths differ");
  if (pose.cols() != 6) throw ConfigError("sequence sample: pose must have 6 columns");
  for (Eigen::Index r = 0; r < pose.rows(); ++r)
    for (int a = 0; a < 3; ++a)
      if (!(pose(r, a) > -M_PI && pose(r, a) <= M_PI)) throw ValidationError("pose angle outside (-pi, pi]");
}

RecurrentMapper::RecurrentMapper(MapperConfig config)
    : feature_norm(Standardizer::identity(config.input_dim)),
      pose_norm(Standardizer::identity(6)),
      config_(config) {
  if (config.input_dim <= 0 || config.encoder_width <= 0 || config.hidden <= 0 || config.exp_dim <= 0)
    throw ConfigError("mapper dimensions must be positive");
  std::mt19937_64 rng(config.seed);
  const int d = config.input_dim, e = config.encoder_width, h = config.hidden;
  enc_w1_ = params_.add("enc_w1", nn::xavier_uniform({e, d}, d, e, rng));
  enc_b1_ = params_.add("enc_b1", nn::Tensor({e}));
  enc_w2_ = params_.add("enc_w2", nn::xavier_uniform({e, e}, e, e, rng));
  enc_b2_ = params_.add("enc_b2", nn::Tensor({e}));
  lstm_wx_ = params_.add("lstm_wx", nn::xavier_uniform({4 * h, e}, e, 4 * h, rng));
  nn::Tensor bias({4 * h});
  for (int i = h; i < 2 * h; ++i) bias[static_cast<std::size_t>(i)] = 1.0;  // forget gate
  lstm_bx_ = params_.add("lstm_bx", bias);
  lstm_wh_ = params_.add("lstm_wh", nn::xavier_uniform({h, 4 * h}, h, 4 * h, rng));
  auto head = [&](int out) {
    return config.zero_heads ? nn::Tensor({out, h}) : nn::xavier_uniform({out, h}, h, out, rng);
  };
  head_exp_w_ = params_.add("head_exp_w", head(config.exp_dim));
  head_exp_b_ = params_.add("head_exp_b", nn::Tensor({config.exp_dim}));
  head_pose_w_ = params_.add("head_pose_w", head(6));
  head_pose_b_ = params_.add("head_pose_b", nn::Tensor({6}));
}

RecurrentMapper::Graph RecurrentMapper::build(const Eigen::MatrixXd& raw_features) const {
  if (raw_features.rows() == 0) throw PreconditionError("mapper: empty audio sequence");
  if (raw_features.cols() != config_.input_dim)
    throw ConfigError("mapper: expected " + std::to_string(config_.input_dim) + " feature columns, got " +
                      std::to_string(raw_features.cols()));
  if (!raw_features.allFinite()) throw ValidationError("mapper: NaN or Inf in audio features");

  const int t_len = static_cast<int>(raw_features.rows());
  const int h = config_.hidden;
  auto x = nn::constant(to_tensor(feature_norm.apply(raw_features)));
  auto e1 = nn::tanh(nn::linear(x, enc_w1_, enc_b1_));
  auto e2 = nn::tanh(nn::linear(e1, enc_w2_, enc_b2_));
  auto gates_in = nn::linear(e2, lstm_wx_, lstm_bx_);

  auto hidden = nn::constant(nn::Tensor({1, h}));
  auto cell = nn::constant(nn::Tensor({1, h}));
  std::vector<nn::Var> states;
  states.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    auto z = nn::add(nn::rows(gates_in, t, 1), nn::matmul(hidden, lstm_wh_));
    auto in_gate = nn::sigmoid(nn::cols(z, 0, h));
    auto forget = nn::sigmoid(nn::cols(z, h, h));
    auto candidate = nn::tanh(nn::cols(z, 2 * h, h));
    auto out_gate = nn::sigmoid(nn::cols(z, 3 * h, h));
    cell = nn::add(nn::mul(forget, cell), nn::mul(in_gate, candidate));
    hidden = nn::mul(out_gate, nn::tanh(cell));
    states.push_back(hidden);
  }
  auto hs = nn::concat0(states);
  return {nn::linear(hs, head_exp_w_, head_exp_b_), nn::linear(hs, head_pose_w_, head_pose_b_)};
}

Prediction RecurrentMapper::forward(const Eigen::MatrixXd& raw_features) const {
  const Graph g = build(raw_features);
  return {to_matrix(g.beta->value), pose_norm.invert(to_matrix(g.pose->value))};
}

Prediction RecurrentMapper::forward(const audio::AudioFeatureSequence& audio) const {
  return forward(audio.features);
}

void RecurrentMapper::save(const std::string& path) const {
  io::Container c;
  c.meta() = {{"kind", "audio2coef_mapper"},
              {"input_dim", config_.input_dim},
              {"encoder_width", config_.encoder_width},
              {"hidden", config_.hidden},
              {"exp_dim", config_.exp_dim},
              {"trained", trained}};
  auto store_row = [&](const std::string& name, const Eigen::RowVectorXd& v) {
    c.add_f32(name, {v.size()}, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  };
  store_row("feature_mean", feature_norm.mean);
  store_row("feature_scale", feature_norm.scale);
  store_row("pose_mean", pose_norm.mean);
  store_row("pose_scale", pose_norm.scale);
  params_.store(c, "param/");
  c.write(path);
}

RecurrentMapper RecurrentMapper::load(const std::string& path) {
  const io::Container c = io::Container::read(path);
  if (c.meta().value("kind", "") != "audio2coef_mapper") throw IoError("not an audio2coef_mapper container: " + path);
  MapperConfig cfg;
  cfg.input_dim = c.meta().at("input_dim");
  cfg.encoder_width = c.meta().at("encoder_width");
  cfg.hidden = c.meta().at("hidden");
  cfg.exp_dim = c.meta().at("exp_dim");
  RecurrentMapper m(cfg);
  m.trained = c.meta().value("trained", false);
  auto row = [&](const std::string& name) {
    const auto v = c.f32_as_double(name);
    return Eigen::RowVectorXd(Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m.feature_norm = {row("feature_mean"), row("feature_scale")};
  m.pose_norm = {row("pose_mean"), row("pose_scale")};
  m.params_.load(c, "param/");
  return m;
}

LossTerms sequence_loss(const Eigen::MatrixXd& beta_pred, const Eigen::MatrixXd& pose_pred,
                        const Eigen::MatrixXd& beta_gt, const Eigen::MatrixXd& pose_gt, const LossWeights& w) {
  if (beta_pred.rows() != beta_gt.rows() || beta_pred.cols() != beta_gt.cols() || pose_pred.rows() != pose_gt.rows() ||
      pose_pred.cols() != pose_gt.cols() || beta_pred.rows() != pose_pred.rows())
    throw ConfigError("sequence_loss: shape mismatch");
  if (beta_pred.rows() == 0) throw PreconditionError("sequence_loss: empty sequence");
  LossTerms l;
  l.expression = (beta_pred - beta_gt).array().square().mean();
  l.pose = (pose_pred - pose_gt).array().square().mean();
  l.pose_continuity = time_diff(pose_pred).squaredNorm();
  l.expression_continuity = time_diff(beta_pred).squaredNorm();
  l.total = l.expression + w.pose * l.pose + w.pose_continuity * l.pose_continuity +
            w.expression_continuity * l.expression_continuity;
  return l;
}

nn::Var sequence_loss(const nn::Var& beta_pred, const nn::Var& pose_pred, const Eigen::MatrixXd& beta_gt,
                      const Eigen::MatrixXd& pose_gt, const LossWeights& w) {
  const int t_len = beta_pred->value.dim(0);
  auto expr = nn::mean(nn::square(nn::sub(beta_pred, nn::constant(to_tensor(beta_gt)))));
  auto pose = nn::mean(nn::square(nn::sub(pose_pred, nn::constant(to_tensor(pose_gt)))));
  auto total = nn::add(expr, nn::scale(pose, w.pose));
  if (t_len > 1) {
    auto diff = [t_len](const nn::Var& v) {
      return nn::sum(nn::square(nn::sub(nn::rows(v, 1, t_len - 1), nn::rows(v, 0, t_len - 1))));
    };
    total = nn::add(total, nn::scale(diff(pose_pred), w.pose_continuity));
    total = nn::add(total, nn::scale(diff(beta_pred), w.expression_continuity));
  }
  return total;
}

LossTerms evaluate_loss(const RecurrentMapper& mapper, const SequenceSample& sample, const LossWeights& weights) {
  const auto g = mapper.build(sample.audio.features);
  return sequence_loss(to_matrix(g.beta->value), to_matrix(g.pose->value), sample.beta,
                       mapper.pose_norm.apply(sample.pose), weights);
}

namespace {

// One Adam step on one sequence; returns the pre-step loss.
double step_on(RecurrentMapper& mapper, nn::Adam& opt, const SequenceSample& s, const LossWeights& w) {
  opt.zero_grad();
  const auto g = mapper.build(s.audio.features);
  auto loss = sequence_loss(g.beta, g.pose, s.beta, mapper.pose_norm.apply(s.pose), w);
  const double value = loss->value.item();
  if (!std::isfinite(value)) return value;
  nn::backward(loss);
  opt.step();
  return value;
}

}  // namespace

TrainReport train_general(RecurrentMapper& mapper, const std::vector<SequenceSample>& corpus,
                          const TrainConfig& config) {
  if (corpus.empty()) throw PreconditionError("train_general: empty corpus");
  for (const auto& s : corpus) s.validate();

  if (config.fit_standardizers) {
    Eigen::Index rows = 0;
    for (const auto& s : corpus) rows += s.frames();
    Eigen::MatrixXd feats(rows, corpus[0].audio.dim());
    Eigen::MatrixXd poses(rows, 6);
    Eigen::Index r = 0;
    for (const auto& s : corpus) {
      feats.middleRows(r, s.frames()) = s.audio.features;
      poses.middleRows(r, s.frames()) = s.pose;
      r += s.frames();
    }
    mapper.feature_norm = Standardizer::fit(feats);
    mapper.pose_norm = Standardizer::fit(poses);
  }

  TrainReport report;
  for (const auto& s : corpus) report.initial_loss += evaluate_loss(mapper, s, config.weights).total;
  report.initial_loss /= static_cast<double>(corpus.size());

  nn::Adam opt(mapper.params().vars(), config.adam);
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  auto last_good = mapper.params().snapshot();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    bool bad = false;
    for (std::size_t idx : order) {
      const double l = step_on(mapper, opt, corpus[idx], config.weights);
      if (!std::isfinite(l) || !mapper.params().all_finite()) {
        bad = true;
        break;
      }
      acc += l;
    }
    if (bad) {
      mapper.params().restore(last_good);
      report.diverged = true;
      warn("train_general: loss diverged; restored last good parameters");
      if (!config.checkpoint_path.empty()) mapper.save(config.checkpoint_path);
      break;
    }
    report.loss_curve.push_back(acc / static_cast<double>(corpus.size()));
    report.epochs_run = epoch + 1;
    last_good = mapper.params().snapshot();
    mapper.trained = true;
    if (!config.checkpoint_path.empty()) mapper.save(config.checkpoint_path);
  }
  mapper.trained = true;
  report.final_loss = 0.0;
  for (const auto& s : corpus) report.final_loss += evaluate_loss(mapper, s, config.weights).total;
  report.final_loss /= static_cast<double>(corpus.size());
  return report;
}

TrainReport finetune(RecurrentMapper& mapper, const SequenceSample& target, const TrainConfig& config) {
  if (!mapper.trained) throw PreconditionError("finetune: mapper has not been trained");
  if (target.frames() == 0) throw PreconditionError("finetune: empty target sequence");
  target.validate();

  TrainReport report;
  report.initial_loss = evaluate_loss(mapper, target, config.weights).total;
  double best = report.initial_loss;
  auto best_params = mapper.params().snapshot();

  nn::Adam opt(mapper.params().vars(), config.adam);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto before = mapper.params().snapshot();
    // l is the loss of the parameters held before this step.
    const double l = step_on(mapper, opt, target, config.weights);
    if (!std::isfinite(l) || !mapper.params().all_finite()) {
      report.diverged = true;
      warn("finetune: loss diverged; keeping best parameters");
      break;
    }
    report.loss_curve.push_back(l);
    report.epochs_run = epoch + 1;
    if (l < best) {
      best = l;
      best_params = std::move(before);
    }
  }
  if (!report.diverged && mapper.params().all_finite()) {
    const double last = evaluate_loss(mapper, target, config.weights).total;
    if (std::isfinite(last) && last < best) {
      best = last;
      best_params = mapper.params().snapshot();
    }
  }
  mapper.params().restore(best_params);
  report.final_loss = best;
  return report;
}

void save_loss_curve(const TrainReport& report, const std::string& path) {
  io::Table t;
  t.header = {"epoch", "loss"};
  for (std::size_t i = 0; i < report.loss_curve.size(); ++i)
    t.rows.push_back({static_cast<double>(i), report.loss_curve[i]});
  io::write_csv(path, t);
}

}  // namespace th::a2c
