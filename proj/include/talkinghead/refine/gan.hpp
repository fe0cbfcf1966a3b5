#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talkinghead/io/image.hpp"
#include "talkinghead/nn/adam.hpp"
#include "talkinghead/nn/params.hpp"
#include "talkinghead/refine/memory.hpp"

namespace th::refine {

struct GanConfig {
  int image_size = 32;
  int base_width = 8;
  int depth = 4;               // down levels == up levels
  int disc_layers = 3;         // strided 4x4 convs before the 1-channel head
  int encoder_width = 8;
  int identity_dim = 64;       // D_f
  int spatial_dim = 64;        // D_s
  int identity_mlp_width = 64;
  std::uint64_t seed = 11;

  void validate() const;
};

struct GanLossWeights {
  double l1 = 100.0;
  double attention = 2.0;
  double tv = 1e-5;
};

/// Rendered frames r_{t-2}, r_{t-1}, r_t as [3,H,W] tensors.
struct FrameWindow {
  std::array<nn::Tensor, 3> rendered;

  [[nodiscard]] const nn::Tensor& current() const { return rendered[2]; }
};

/// Window ending at t; frames before the start repeat frame 0.
FrameWindow make_window(std::span<const nn::Tensor> frames, int t);

nn::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const nn::Tensor& t);

struct GeneratorOutput {
  nn::Var output;     // o = A * r + (1 - A) * C, [3,H,W]
  nn::Var attention;  // A, [1,H,W]
  nn::Var color;      // C, [3,H,W]
};

struct GenerateOptions {
  std::optional<double> forced_attention;  // replaces the A head with a constant
};

/// Spatial size of the patch map: each strided layer maps s -> floor((s + 2 - 4) / 2) + 1,
/// the 3x3 head keeps the size.
int discriminator_output_size(int input_size, int layers);

/// U-shaped generator with skip connections and AdaIN-conditioned decoder, a PatchGAN
/// discriminator over (window, checking frame), and the two feature encoders.
class GanModel {
 public:
  explicit GanModel(GanConfig config = {});

  // f is renormalized (with a warning) when it is not unit length.
  [[nodiscard]] GeneratorOutput generate(const FrameWindow& window, const nn::Var& identity,
                                         const GenerateOptions& options = {}) const;
  [[nodiscard]] nn::Var discriminate(const FrameWindow& window, const nn::Var& checking) const;
  [[nodiscard]] nn::Var spatial_feature(const nn::Var& rendered) const;
  [[nodiscard]] nn::Var identity_feature(const nn::Var& real) const;

  [[nodiscard]] const GanConfig& config() const { return config_; }
  nn::ParamSet& generator_params() { return gen_; }
  nn::ParamSet& discriminator_params() { return disc_; }
  nn::ParamSet& spatial_params() { return spatial_; }
  nn::ParamSet& identity_params() { return identity_; }
  [[nodiscard]] const nn::ParamSet& generator_params() const { return gen_; }
  [[nodiscard]] const nn::ParamSet& discriminator_params() const { return disc_; }

  void save(const std::string& path) const;
  static GanModel load(const std::string& path);

 private:
  struct Conv {
    nn::Var weight, bias;
    int stride = 1, pad = 0;
  };
  struct Encoder {
    std::vector<Conv> convs;
    nn::Var fc_w, fc_b;
  };

  Conv make_conv(nn::ParamSet& set, const std::string& name, int in, int out, int k, int stride, int pad,
                 std::mt19937_64& rng, double bias = 0.0);
  Encoder make_encoder(nn::ParamSet& set, int out_dim, std::mt19937_64& rng);
  [[nodiscard]] nn::Var apply(const Conv& c, const nn::Var& x) const;
  [[nodiscard]] nn::Var encode(const Encoder& e, const nn::Var& x) const;

  GanConfig config_;
  nn::ParamSet gen_, disc_, spatial_, identity_;
  std::vector<Conv> down_, up_;
  std::vector<int> up_channels_;
  Conv head_attention_, head_color_;
  nn::Var id_w1_, id_b1_, id_w2_, id_b2_;
  std::vector<Conv> disc_convs_;
  Conv disc_head_;
  Encoder spatial_enc_, identity_enc_;
};

struct GanLosses {
  nn::Var generator;
  nn::Var discriminator;
  double adversarial = 0, l1 = 0, attention = 0, tv = 0;
};

/// Saturating log-loss: D minimizes -log s(D(real)) - log(1 - s(D(fake))),
/// G minimizes log(1 - s(D(fake))) + l1 * mean|g - o| + attention * rms(A) + tv * TV(A).
/// rms(A) is the L2 norm of the mask divided by sqrt(pixel count).
/// d_fake_for_d must be computed from a detached o.
GanLosses gan_loss(const nn::Var& d_real, const nn::Var& d_fake_for_d, const nn::Var& d_fake_for_g,
                   const GeneratorOutput& gen, const nn::Tensor& real, const GanLossWeights& weights);

struct PairedFrame {
  int identity = 0;
  int frame = 0;
  FrameWindow window;
  nn::Tensor real;
};

struct RefineTrainConfig {
  int epochs = 20;
  int identity_warmup_epochs = 5;  // identity encoder trains with G, then freezes
  double tau = 0.5;
  double margin = 0.2;
  int bank_capacity = 64;
  GanLossWeights weights{};
  nn::AdamConfig generator_adam{2e-3, 0.5, 0.999, 1e-8};
  nn::AdamConfig discriminator_adam{2e-4, 0.5, 0.999, 1e-8};
  nn::AdamConfig encoder_adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t shuffle_seed = 5;
  std::string checkpoint_path;  // model; bank goes to <path>.bank
};

struct RefineTrainReport {
  std::vector<double> generator_loss;      // per epoch means
  std::vector<double> discriminator_loss;
  std::vector<double> triplet_loss;
  std::vector<double> l1_loss;
  bool aborted = false;
  int epochs_run = 0;
};

RefineTrainReport train_refiner(GanModel& model, MemoryBank& bank, std::span<const PairedFrame> corpus,
                                const RefineTrainConfig& config);

/// Inference path: spatial feature -> memory retrieval -> smoothing -> generator.
std::vector<Image> refine_sequence(const GanModel& model, const MemoryBank& bank, std::span<const nn::Tensor> rendered,
                                   int smoothing_window = 3);

void save_refine_report(const RefineTrainReport& report, const std::string& path);

}  // namespace th::refine
