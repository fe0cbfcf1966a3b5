#pragma once

#include <string>
#include <vector>

#include "talkinghead/audio2coef/mapper.hpp"
#include "talkinghead/metrics/metrics.hpp"
#include "talkinghead/pipeline/config.hpp"
#include "talkinghead/pipeline/corpus.hpp"
#include "talkinghead/refine/gan.hpp"

namespace th::pipeline {

/// Rows [start, start + count) of an identity as a mapper training sample.
a2c::SequenceSample make_sample(const IdentityData& identity, const audio::AudioFeatureSequence& features, int start,
                                int count);
/// Consecutive non-overlapping chunks covering [start, end); a short tail is dropped.
std::vector<a2c::SequenceSample> make_chunks(const IdentityData& identity, const audio::AudioFeatureSequence& features,
                                             int start, int end, int chunk);
/// (rendered window, real frame) pairs for frames [start, start + count).
std::vector<refine::PairedFrame> make_pairs(const IdentityData& identity, int start, int count);

/// Projected mouth landmarks for each frame.
metrics::LandmarkSequence mouth_landmarks(const Corpus& corpus, const IdentityData& identity,
                                          const Eigen::MatrixXd& beta, const std::vector<face3d::Pose>& poses);

struct GenerationResult {
  Eigen::MatrixXd beta;                      // T x D_exp, mapper output
  std::vector<face3d::Pose> predicted_poses; // mapper output
  std::vector<face3d::Pose> render_poses;    // after blending towards the matched backgrounds
  std::vector<int> keyframes;
  std::vector<Image> rendered;               // composites before refinement
  std::vector<Image> frames;                 // final output
};

struct EvaluationInput {
  std::vector<Image> truth_frames;
  std::vector<Image> frames;
  metrics::LandmarkSequence truth_landmarks;
  metrics::LandmarkSequence landmarks;
  std::vector<face3d::Pose> truth_poses;
  std::vector<face3d::Pose> poses;
  Eigen::MatrixXd features;
};

metrics::MetricRow evaluate_sequences(const std::string& name, const EvaluationInput& in);

// Stages; all files live under config.data_root.
void prepare(const RunConfig& config);
void train_general(const RunConfig& config);
void finetune(const RunConfig& config);
GenerationResult generate(const RunConfig& config);
std::vector<metrics::MetricRow> evaluate(const RunConfig& config);
std::vector<metrics::MetricRow> sweep_finetune_length(const RunConfig& config);

/// Lower-level entry points shared by the stages and the sweep.
void finetune_models(const RunConfig& config, int frames, const std::string& mapper_out, const std::string& refiner_out);
GenerationResult generate_to(const RunConfig& config, const std::string& mapper_path, const std::string& refiner_path,
                             const std::string& out_dir);
metrics::MetricRow evaluate_dir(const RunConfig& config, const std::string& out_dir, const std::string& name);

}  // namespace th::pipeline
