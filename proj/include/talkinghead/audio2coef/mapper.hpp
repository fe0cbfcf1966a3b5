#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talkinghead/audio/mfcc.hpp"
#include "talkinghead/nn/adam.hpp"
#include "talkinghead/nn/params.hpp"

namespace th::a2c {

struct MapperConfig {
  int input_dim = 364;
  int encoder_width = 64;
  int hidden = 32;
  int exp_dim = 6;
  std::uint64_t seed = 1;
  bool zero_heads = false;

  static MapperConfig paper_scale() { return {364, 256, 256, 64, 1, false}; }
};

/// Per-column affine normalization: (x - mean) / scale.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer identity(int dim);
  static Standardizer fit(const Eigen::MatrixXd& data);
  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
};

struct SequenceSample {
  audio::AudioFeatureSequence audio;
  Eigen::MatrixXd beta;  // T x D_exp
  Eigen::MatrixXd pose;  // T x 6 (pitch, yaw, roll, tx, ty, tz)

  [[nodiscard]] int frames() const { return audio.frames(); }
  void validate() const;
};

struct Prediction {
  Eigen::MatrixXd beta;
  Eigen::MatrixXd pose;
};

/// Audio encoder E (2-layer tanh MLP), one LSTM cell, and two linear heads
/// for expression and pose. Pose outputs are learned in standardized units.
class RecurrentMapper {
 public:
  explicit RecurrentMapper(MapperConfig config = {});

  struct Graph {
    nn::Var beta;  // T x D_exp
    nn::Var pose;  // T x 6, standardized
  };

  // Throws ValidationError on NaN/Inf input before running the recurrence.
  [[nodiscard]] Graph build(const Eigen::MatrixXd& raw_features) const;

  /// Inference; pose is mapped back to natural units.
  [[nodiscard]] Prediction forward(const audio::AudioFeatureSequence& audio) const;
  [[nodiscard]] Prediction forward(const Eigen::MatrixXd& raw_features) const;

  [[nodiscard]] const MapperConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  [[nodiscard]] const nn::ParamSet& params() const { return params_; }

  Standardizer feature_norm;
  Standardizer pose_norm;
  bool trained = false;

  void save(const std::string& path) const;
  static RecurrentMapper load(const std::string& path);

 private:
  MapperConfig config_;
  nn::ParamSet params_;
  nn::Var enc_w1_, enc_b1_, enc_w2_, enc_b2_;
  nn::Var lstm_wx_, lstm_bx_, lstm_wh_;
  nn::Var head_exp_w_, head_exp_b_, head_pose_w_, head_pose_b_;
};

struct LossWeights {
  double pose = 0.2;
  double pose_continuity = 0.01;
  double expression_continuity = 1e-4;
};

struct LossTerms {
  double expression = 0;
  double pose = 0;
  double pose_continuity = 0;
  double expression_continuity = 0;
  double total = 0;
};

/// MSE(beta) + w.pose * MSE(p) + w.pose_continuity * sum_t |p(t+1)-p(t)|^2
///   + w.expression_continuity * sum_t |beta(t+1)-beta(t)|^2.
LossTerms sequence_loss(const Eigen::MatrixXd& beta_pred, const Eigen::MatrixXd& pose_pred,
                        const Eigen::MatrixXd& beta_gt, const Eigen::MatrixXd& pose_gt,
                        const LossWeights& weights = {});

nn::Var sequence_loss(const nn::Var& beta_pred, const nn::Var& pose_pred, const Eigen::MatrixXd& beta_gt,
                      const Eigen::MatrixXd& pose_gt, const LossWeights& weights = {});

struct TrainConfig {
  int epochs = 100;
  nn::AdamConfig adam{1e-4};
  LossWeights weights{};
  bool fit_standardizers = true;  // general training only
  std::string checkpoint_path;    // empty: no checkpoints
  std::uint64_t shuffle_seed = 7;
};

struct TrainReport {
  std::vector<double> loss_curve;  // mean training loss per epoch
  double initial_loss = 0;
  double final_loss = 0;
  bool diverged = false;
  int epochs_run = 0;
};

TrainReport train_general(RecurrentMapper& mapper, const std::vector<SequenceSample>& corpus,
                          const TrainConfig& config);

/// Personalizes a trained mapper on one target sequence, updating every parameter.
/// The returned mapper state is the lowest-loss state seen on the target.
TrainReport finetune(RecurrentMapper& mapper, const SequenceSample& target, const TrainConfig& config);

/// Loss of a mapper on one sample, in the standardized pose space used for training.
LossTerms evaluate_loss(const RecurrentMapper& mapper, const SequenceSample& sample, const LossWeights& weights = {});

void save_loss_curve(const TrainReport& report, const std::string& path);

}  // namespace th::a2c
