#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "talkinghead/audio2coef/mapper.hpp"
#include "talkinghead/pipeline/corpus.hpp"
#include "talkinghead/refine/gan.hpp"

namespace th::pipeline {

/// Everything one run needs. Read from a key = value text file; '#' starts a comment.
struct RunConfig {
  std::string data_root = "data";
  CorpusSpec corpus{};

  // Stage 1
  int finetune_frames = 300;
  int holdout_start = 300;  // target frames from here on are never trained on
  int chunk_frames = 100;
  double validation_fraction = 0.1;
  int encoder_width = 64;
  int hidden = 32;
  int general_epochs = 60;
  double general_lr = 2e-3;
  int finetune_epochs = 150;
  double finetune_lr = 1e-3;
  a2c::LossWeights loss{};

  // Stage 2
  int keyframe_window = 0;  // 0: one second of frames
  double pose_blend = 0.5;
  int smoothing_window = 3;
  int gan_base_width = 8;
  int gan_depth = 4;
  int refiner_epochs = 6;
  int refiner_finetune_epochs = 3;
  int identity_warmup_epochs = 2;
  int bank_capacity = 64;
  double tau = 0.5;
  double margin = 0.2;
  refine::GanLossWeights gan_loss{};
  double generator_lr = 2e-3;
  double discriminator_lr = 2e-4;

  bool use_finetune = true;
  bool use_refiner = true;
  std::vector<int> sweep_lengths{100, 200, 300};
  std::uint64_t seed = 2024;

  /// Sets one key; throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  [[nodiscard]] std::map<std::string, std::string> entries() const;

  static RunConfig from_file(const std::string& path);
  /// Defaults, then the file (if any), then TALKINGHEAD_DATA for the data root.
  static RunConfig load(const std::string& path);

  [[nodiscard]] int window_frames() const;
  [[nodiscard]] a2c::MapperConfig mapper_config() const;
  [[nodiscard]] refine::GanConfig gan_config() const;
  [[nodiscard]] refine::RefineTrainConfig refine_config(int epochs, int warmup) const;
};

struct Paths {
  std::string root;

  [[nodiscard]] std::string corpus() const;
  [[nodiscard]] std::string models() const;
  [[nodiscard]] std::string output() const;
  [[nodiscard]] std::string reports() const;
  [[nodiscard]] std::string general_mapper() const;
  [[nodiscard]] std::string personal_mapper() const;
  [[nodiscard]] std::string general_refiner() const;
  [[nodiscard]] std::string personal_refiner() const;
};

}  // namespace th::pipeline
