#include "talkinghead/refine/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "talkinghead/error.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/nn/ops.hpp"

namespace th::refine {

namespace {

constexpr double kLeak = 0.2;

int level_channels(const GanConfig& c, int level) {
  if (level == 0) return 9;
  return c.base_width * std::min(1 << (level - 1), 8);
}

nn::Var window_input(const FrameWindow& w) {
  return nn::concat0({nn::constant(w.rendered[0]), nn::constant(w.rendered[1]), nn::constant(w.rendered[2])});
}

}  // namespace

void GanConfig::validate() const {
  if (image_size <= 0 || base_width <= 0 || depth <= 0 || disc_layers <= 0 || encoder_width <= 0 ||
      identity_dim <= 0 || spatial_dim <= 0 || identity_mlp_width <= 0)
    throw ConfigError("gan config: sizes must be positive");
  if (image_size % (1 << depth) != 0) throw ConfigError("gan config: image size must be divisible by 2^depth");
  if (discriminator_output_size(image_size, disc_layers) < 1)
    throw ConfigError("gan config: discriminator too deep for the image size");
}

int discriminator_output_size(int input_size, int layers) {
  int s = input_size;
  for (int i = 0; i < layers; ++i) {
    const int num = s + 2 - 4;
    if (num < 0) return 0;
    s = num / 2 + 1;
  }
  return s;  // 3x3, pad 1, stride 1 head
}

FrameWindow make_window(std::span<const nn::Tensor> frames, int t) {
  if (t < 0 || t >= static_cast<int>(frames.size())) throw PreconditionError("make_window: frame index out of range");
  FrameWindow w;
  for (int k = 0; k < 3; ++k) w.rendered[static_cast<std::size_t>(k)] = frames[static_cast<std::size_t>(std::max(0, t - 2 + k))];
  for (const auto& f : w.rendered)
    if (f.shape() != w.rendered[2].shape()) throw ConfigError("make_window: frame sizes differ");
  return w;
}

nn::Tensor image_to_tensor(const Image& image) {
  nn::Tensor t({3, image.height, image.width});
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) t[c * n + static_cast<std::size_t>(y) * image.width + x] = image.at(x, y, c);
  return t;
}

Image tensor_to_image(const nn::Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ConfigError("tensor_to_image: expected [3,H,W]");
  const int h = t.dim(1), w = t.dim(2);
  Image img(w, h);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = t[c * n + static_cast<std::size_t>(y) * w + x];
  return img;
}

GanModel::Conv GanModel::make_conv(nn::ParamSet& set, const std::string& name, int in, int out, int k, int stride,
                                   int pad, std::mt19937_64& rng, double bias) {
  Conv c;
  c.weight = set.add(name + ".w", nn::he_normal({out, in, k, k}, in * k * k, rng));
  c.bias = set.add(name + ".b", nn::Tensor({out}, bias));
  c.stride = stride;
  c.pad = pad;
  return c;
}

GanModel::Encoder GanModel::make_encoder(nn::ParamSet& set, int out_dim, std::mt19937_64& rng) {
  Encoder e;
  const int w = config_.encoder_width;
  const int widths[5] = {3, w, 2 * w, 2 * w, 2 * w};
  for (int i = 0; i < 4; ++i)
    e.convs.push_back(make_conv(set, "conv" + std::to_string(i), widths[i], widths[i + 1], 3, 2, 1, rng));
  e.fc_w = set.add("fc.w", nn::xavier_uniform({out_dim, 2 * w}, 2 * w, out_dim, rng));
  e.fc_b = set.add("fc.b", nn::Tensor({out_dim}));
  return e;
}

GanModel::GanModel(GanConfig config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int depth = config_.depth;

  for (int l = 1; l <= depth; ++l)
    down_.push_back(make_conv(gen_, "down" + std::to_string(l), level_channels(config_, l - 1),
                              level_channels(config_, l), 4, 2, 1, rng));
  int in = level_channels(config_, depth);
  int adain_total = 0;
  for (int l = depth; l >= 1; --l) {
    const int out = l > 1 ? level_channels(config_, l - 1) : config_.base_width;
    up_.push_back(make_conv(gen_, "up" + std::to_string(l), in, out, 3, 1, 1, rng));
    up_channels_.push_back(out);
    adain_total += 2 * out;
    in = out + level_channels(config_, l - 1);
  }
  head_attention_ = make_conv(gen_, "head_a", in, 1, 3, 1, 1, rng, 2.0);  // start close to the render
  head_color_ = make_conv(gen_, "head_c", in, 3, 3, 1, 1, rng);
  const int mw = config_.identity_mlp_width;
  id_w1_ = gen_.add("idmlp.w1", nn::xavier_uniform({mw, config_.identity_dim}, config_.identity_dim, mw, rng));
  id_b1_ = gen_.add("idmlp.b1", nn::Tensor({mw}));
  nn::Tensor w2 = nn::xavier_uniform({adain_total, mw}, mw, adain_total, rng);
  for (auto& x : w2.values()) x *= 0.1;
  id_w2_ = gen_.add("idmlp.w2", w2);
  id_b2_ = gen_.add("idmlp.b2", nn::Tensor({adain_total}));

  int dc = 12;
  for (int i = 0; i < config_.disc_layers; ++i) {
    const int out = config_.base_width * std::min(1 << i, 8);
    disc_convs_.push_back(make_conv(disc_, "conv" + std::to_string(i), dc, out, 4, 2, 1, rng));
    dc = out;
  }
  disc_head_ = make_conv(disc_, "head", dc, 1, 3, 1, 1, rng);

  spatial_enc_ = make_encoder(spatial_, config_.spatial_dim, rng);
  identity_enc_ = make_encoder(identity_, config_.identity_dim, rng);
}

nn::Var GanModel::apply(const Conv& c, const nn::Var& x) const {
  return nn::conv2d(x, c.weight, c.bias, c.stride, c.pad);
}

nn::Var GanModel::encode(const Encoder& e, const nn::Var& x) const {
  nn::Var h = x;
  for (const auto& c : e.convs) h = nn::leaky_relu(apply(c, h), kLeak);
  auto pooled = nn::reshape(nn::global_avg_pool(h), {1, h->value.dim(0)});
  return nn::reshape(nn::l2_normalize(nn::linear(pooled, e.fc_w, e.fc_b)), {static_cast<int>(e.fc_b->value.size())});
}

nn::Var GanModel::spatial_feature(const nn::Var& rendered) const { return encode(spatial_enc_, rendered); }
nn::Var GanModel::identity_feature(const nn::Var& real) const { return encode(identity_enc_, real); }

GeneratorOutput GanModel::generate(const FrameWindow& window, const nn::Var& identity,
                                   const GenerateOptions& options) const {
  const auto& r = window.current();
  if (r.rank() != 3 || r.dim(0) != 3 || r.dim(1) != config_.image_size || r.dim(2) != config_.image_size)
    throw ConfigError("generate: frame must be [3," + std::to_string(config_.image_size) + "," +
                      std::to_string(config_.image_size) + "]");
  if (identity->value.size() != static_cast<std::size_t>(config_.identity_dim))
    throw ConfigError("generate: identity feature has wrong dimension");
  nn::Var f = identity;
  double ss = 0.0;
  for (double v : identity->value.values()) ss += v * v;
  if (std::abs(std::sqrt(ss) - 1.0) > 1e-6) {
    warn("generate: identity feature is not unit norm; normalizing");
    f = nn::l2_normalize(identity);
  }

  std::vector<nn::Var> skips{window_input(window)};
  nn::Var h = skips[0];
  for (std::size_t l = 0; l < down_.size(); ++l) {
    h = nn::leaky_relu(apply(down_[l], h), kLeak);
    if (l > 0 && h->value.dim(1) > 1) h = nn::instance_norm(h);
    skips.push_back(h);
  }

  auto style = nn::linear(nn::tanh(nn::linear(nn::reshape(f, {1, config_.identity_dim}), id_w1_, id_b1_)), id_w2_, id_b2_);
  int offset = 0;
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const int c = up_channels_[i];
    auto scale = nn::add_scalar(nn::reshape(nn::cols(style, offset, c), {c}), 1.0);
    auto shift = nn::reshape(nn::cols(style, offset + c, c), {c});
    offset += 2 * c;
    h = apply(up_[i], nn::upsample2x(h));
    h = nn::relu(nn::channel_affine(nn::instance_norm(h), scale, shift));
    h = nn::concat0({h, skips[skips.size() - 2 - i]});
  }

  GeneratorOutput out;
  if (options.forced_attention) {
    out.attention = nn::constant(nn::Tensor({1, r.dim(1), r.dim(2)}, *options.forced_attention));
  } else {
    out.attention = nn::sigmoid(apply(head_attention_, h));
  }
  out.color = nn::sigmoid(apply(head_color_, h));
  out.output = nn::attention_composite(out.attention, nn::constant(r), out.color);
  return out;
}

nn::Var GanModel::discriminate(const FrameWindow& window, const nn::Var& checking) const {
  if (checking->value.shape() != window.current().shape()) throw ConfigError("discriminate: checking frame size differs");
  nn::Var h = nn::concat0({window_input(window), checking});
  for (std::size_t i = 0; i < disc_convs_.size(); ++i) {
    h = apply(disc_convs_[i], h);
    if (i > 0 && h->value.dim(1) > 1) h = nn::instance_norm(h);
    h = nn::leaky_relu(h, kLeak);
  }
  return apply(disc_head_, h);
}

void GanModel::save(const std::string& path) const {
  io::Container c;
  c.meta() = {{"kind", "refine_gan"},
              {"image_size", config_.image_size},
              {"base_width", config_.base_width},
              {"depth", config_.depth},
              {"disc_layers", config_.disc_layers},
              {"encoder_width", config_.encoder_width},
              {"identity_dim", config_.identity_dim},
              {"spatial_dim", config_.spatial_dim},
              {"identity_mlp_width", config_.identity_mlp_width}};
  gen_.store(c, "g/");
  disc_.store(c, "d/");
  spatial_.store(c, "s/");
  identity_.store(c, "i/");
  c.write(path);
}

GanModel GanModel::load(const std::string& path) {
  const auto c = io::Container::read(path);
  if (c.meta().value("kind", "") != "refine_gan") throw IoError("not a refine_gan container: " + path);
  GanConfig cfg;
  cfg.image_size = c.meta().at("image_size");
  cfg.base_width = c.meta().at("base_width");
  cfg.depth = c.meta().at("depth");
  cfg.disc_layers = c.meta().at("disc_layers");
  cfg.encoder_width = c.meta().at("encoder_width");
  cfg.identity_dim = c.meta().at("identity_dim");
  cfg.spatial_dim = c.meta().at("spatial_dim");
  cfg.identity_mlp_width = c.meta().at("identity_mlp_width");
  GanModel m(cfg);
  m.gen_.load(c, "g/");
  m.disc_.load(c, "d/");
  m.spatial_.load(c, "s/");
  m.identity_.load(c, "i/");
  return m;
}

GanLosses gan_loss(const nn::Var& d_real, const nn::Var& d_fake_for_d, const nn::Var& d_fake_for_g,
                   const GeneratorOutput& gen, const nn::Tensor& real, const GanLossWeights& w) {
  if (real.shape() != gen.output->value.shape()) throw ConfigError("gan_loss: real frame size differs from output");
  GanLosses out;
  out.discriminator = nn::add(nn::scale(nn::mean(nn::log_sigmoid(d_real)), -1.0),
                              nn::scale(nn::mean(nn::log_sigmoid(nn::scale(d_fake_for_d, -1.0))), -1.0));
  auto adv = nn::mean(nn::log_sigmoid(nn::scale(d_fake_for_g, -1.0)));
  auto l1 = nn::mean(nn::abs(nn::sub(nn::constant(real), gen.output)));
  auto att = nn::sqrt(nn::mean(nn::square(gen.attention)));
  auto tv = nn::total_variation_sq(gen.attention);
  out.adversarial = adv->value.item();
  out.l1 = l1->value.item();
  out.attention = att->value.item();
  out.tv = tv->value.item();
  out.generator = nn::add(nn::add(adv, nn::scale(l1, w.l1)), nn::add(nn::scale(att, w.attention), nn::scale(tv, w.tv)));
  return out;
}

namespace {

Eigen::VectorXd to_vector(const nn::Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

nn::Var from_vector(const Eigen::VectorXd& v) {
  return nn::constant(nn::Tensor({static_cast<int>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())));
}

}  // namespace

RefineTrainReport train_refiner(GanModel& model, MemoryBank& bank, std::span<const PairedFrame> corpus,
                                const RefineTrainConfig& config) {
  if (corpus.empty()) throw PreconditionError("train_refiner: empty corpus");
  nn::Adam g_opt(model.generator_params().vars(), config.generator_adam);
  nn::Adam d_opt(model.discriminator_params().vars(), config.discriminator_adam);
  nn::Adam s_opt(model.spatial_params().vars(), config.encoder_adam);
  nn::Adam i_opt(model.identity_params().vars(), config.generator_adam);

  RefineTrainReport report;
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  auto snapshot = [&] {
    return std::array<std::vector<nn::Tensor>, 4>{model.generator_params().snapshot(), model.discriminator_params().snapshot(),
                                                  model.spatial_params().snapshot(), model.identity_params().snapshot()};
  };
  auto last_good = snapshot();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const bool warmup = epoch < config.identity_warmup_epochs;
    if (config.identity_warmup_epochs > 0 && epoch == config.identity_warmup_epochs)
      bank.clear();  // values written by the still-moving encoder are stale
    std::shuffle(order.begin(), order.end(), rng);
    double g_acc = 0, d_acc = 0, t_acc = 0, l1_acc = 0;
    bool bad = false;
    for (std::size_t idx : order) {
      const auto& item = corpus[idx];
      const auto real = nn::constant(item.real);

      // Memory network: triplet step on the spatial encoder, then the bank update.
      s_opt.zero_grad();
      auto q = model.spatial_feature(nn::constant(item.window.current()));
      const Eigen::VectorXd v_gt = to_vector(model.identity_feature(real)->value);
      auto triplet = threshold_triplet_loss(bank, q, v_gt, config.tau, config.margin);
      t_acc += triplet->value.item();
      if (triplet->value.item() > 0.0) {
        nn::backward(triplet);
        s_opt.step();
      }
      bank.update(to_vector(q->value), v_gt, config.tau);

      // Discriminator then generator.
      i_opt.zero_grad();
      g_opt.zero_grad();
      const nn::Var f = warmup ? model.identity_feature(real) : from_vector(v_gt);
      const auto gen = model.generate(item.window, f);
      d_opt.zero_grad();
      const auto d_real = model.discriminate(item.window, real);
      const auto d_fake_d = model.discriminate(item.window, nn::constant(gen.output->value));
      const auto d_fake_g = model.discriminate(item.window, gen.output);
      const auto losses = gan_loss(d_real, d_fake_d, d_fake_g, gen, item.real, config.weights);
      const double g_value = losses.generator->value.item();
      if (!std::isfinite(g_value) || !std::isfinite(losses.discriminator->value.item())) {
        bad = true;
        break;
      }
      nn::backward(losses.discriminator);
      d_opt.step();
      g_opt.zero_grad();
      nn::backward(losses.generator);
      g_opt.step();
      if (warmup) i_opt.step();
      g_acc += g_value;
      d_acc += losses.discriminator->value.item();
      l1_acc += losses.l1;
    }
    if (bad) {
      report.aborted = true;
      warn("train_refiner: generator loss is not finite; restoring last checkpoint");
      model.generator_params().restore(last_good[0]);
      model.discriminator_params().restore(last_good[1]);
      model.spatial_params().restore(last_good[2]);
      model.identity_params().restore(last_good[3]);
      break;
    }
    const double n = static_cast<double>(corpus.size());
    report.generator_loss.push_back(g_acc / n);
    report.discriminator_loss.push_back(d_acc / n);
    report.triplet_loss.push_back(t_acc / n);
    report.l1_loss.push_back(l1_acc / n);
    report.epochs_run = epoch + 1;
    last_good = snapshot();
    if (!config.checkpoint_path.empty()) {
      model.save(config.checkpoint_path);
      bank.save(config.checkpoint_path + ".bank");
    }
  }
  return report;
}

std::vector<Image> refine_sequence(const GanModel& model, const MemoryBank& bank, std::span<const nn::Tensor> rendered,
                                   int smoothing_window) {
  if (rendered.empty()) return {};
  if (bank.empty()) throw PreconditionError("refine_sequence: memory bank is empty");
  std::vector<Eigen::VectorXd> retrieved;
  retrieved.reserve(rendered.size());
  for (const auto& r : rendered) retrieved.push_back(bank.retrieve(to_vector(model.spatial_feature(nn::constant(r))->value)));
  const auto smoothed = smooth_retrieved(retrieved, smoothing_window);
  std::vector<Image> out;
  out.reserve(rendered.size());
  for (std::size_t t = 0; t < rendered.size(); ++t) {
    const auto gen = model.generate(make_window(rendered, static_cast<int>(t)), from_vector(smoothed[t]));
    Image img = tensor_to_image(gen.output->value);
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

void save_refine_report(const RefineTrainReport& report, const std::string& path) {
  io::Table t;
  t.header = {"epoch", "generator", "discriminator", "triplet", "l1"};
  for (std::size_t i = 0; i < report.generator_loss.size(); ++i)
    t.rows.push_back({static_cast<double>(i), report.generator_loss[i], report.discriminator_loss[i],
                      report.triplet_loss[i], report.l1_loss[i]});
  io::write_csv(path, t);
}

}  // namespace th::refine
