#include "talkinghead/pipeline/stages.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/basis.hpp"
#include "talkinghead/face3d/model.hpp"
#include "talkinghead/io/png.hpp"
#include "talkinghead/render/render.hpp"

namespace th::pipeline {

namespace fs = std::filesystem;
using face3d::Pose;

namespace {

std::string frame_name(int t) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << t << ".png";
  return s.str();
}

std::string features_path(const Paths& p, int identity) {
  return (fs::path(identity_dir(p.corpus(), identity)) / "features.bin").string();
}

void log(const std::string& msg) {
  if (!quiet()) std::cerr << "[talkinghead] " << msg << '\n';
}

void write_frames(const std::string& dir, const std::vector<Image>& frames) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < frames.size(); ++t)
    io::write_png((fs::path(dir) / frame_name(static_cast<int>(t))).string(), frames[t]);
}

std::vector<Image> read_frames(const std::string& dir, int count) {
  std::vector<Image> out;
  for (int t = 0; t < count; ++t) out.push_back(io::read_png((fs::path(dir) / frame_name(t)).string()));
  return out;
}

std::vector<nn::Tensor> to_tensors(const std::vector<Image>& frames) {
  std::vector<nn::Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(refine::image_to_tensor(f));
  return out;
}

void require_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) throw PreconditionError("missing " + path + " (" + hint + ")");
}

std::vector<Pose> poses_from_matrix(const Eigen::MatrixXd& m) {
  std::vector<Pose> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Pose p = Pose::from_vector(m.row(r).transpose());
    for (int a = 0; a < 3; ++a) p.angles[a] = face3d::wrap_angle(p.angles[a]);
    out.push_back(p);
  }
  return out;
}

const IdentityData& target_of(const Corpus& c) { return c.identities.back(); }

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

a2c::SequenceSample make_sample(const IdentityData& identity, const audio::AudioFeatureSequence& features, int start,
                                int count) {
  if (start < 0 || count < 0 || start + count > identity.frames() || start + count > features.frames())
    throw PreconditionError("make_sample: frame range out of bounds");
  a2c::SequenceSample s;
  s.audio.frame_rate = features.frame_rate;
  s.audio.features = features.features.middleRows(start, count);
  s.beta = identity.beta.middleRows(start, count);
  s.pose = identity.pose_matrix().middleRows(start, count);
  return s;
}

std::vector<a2c::SequenceSample> make_chunks(const IdentityData& identity, const audio::AudioFeatureSequence& features,
                                             int start, int end, int chunk) {
  std::vector<a2c::SequenceSample> out;
  for (int s = start; s + chunk <= end; s += chunk) out.push_back(make_sample(identity, features, s, chunk));
  return out;
}

std::vector<refine::PairedFrame> make_pairs(const IdentityData& identity, int start, int count) {
  if (identity.rendered.size() < static_cast<std::size_t>(start + count) || identity.real.size() < identity.rendered.size())
    throw PreconditionError("make_pairs: frames not loaded or range out of bounds");
  const auto rendered = to_tensors(identity.rendered);
  std::vector<refine::PairedFrame> out;
  for (int t = start; t < start + count; ++t) {
    refine::PairedFrame p;
    p.identity = identity.index;
    p.frame = t;
    p.window = refine::make_window(rendered, t);
    p.real = refine::image_to_tensor(identity.real[static_cast<std::size_t>(t)]);
    out.push_back(std::move(p));
  }
  return out;
}

metrics::LandmarkSequence mouth_landmarks(const Corpus& corpus, const IdentityData& identity,
                                          const Eigen::MatrixXd& beta, const std::vector<Pose>& poses) {
  if (beta.rows() != static_cast<Eigen::Index>(poses.size())) throw ConfigError("mouth_landmarks: length mismatch");
  const auto ids = face3d::mouth_landmark_indices(corpus.basis);
  metrics::LandmarkSequence out;
  for (std::size_t t = 0; t < poses.size(); ++t) {
    const auto shape = face3d::assemble_shape(corpus.basis, identity.base.alpha, beta.row(static_cast<Eigen::Index>(t)).transpose());
    face3d::VertexMatrix pts(static_cast<Eigen::Index>(ids.size()), 3);
    for (std::size_t k = 0; k < ids.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = shape.row(ids[k]);
    out.push_back(face3d::project(pts, poses[t], corpus.camera).pixels);
  }
  return out;
}

metrics::MetricRow evaluate_sequences(const std::string& name, const EvaluationInput& in) {
  if (in.frames.size() != in.truth_frames.size() || in.frames.empty())
    throw ConfigError("evaluate: generated and reference frame counts differ");
  metrics::MetricRow row;
  row.name = name;
  for (std::size_t t = 0; t < in.frames.size(); ++t) {
    row.psnr += metrics::psnr(in.frames[t], in.truth_frames[t]);
    row.ssim += metrics::ssim(in.frames[t], in.truth_frames[t]);
  }
  row.psnr /= static_cast<double>(in.frames.size());
  row.ssim /= static_cast<double>(in.frames.size());
  row.lmd = metrics::lmd(in.landmarks, in.truth_landmarks, true);
  row.hs = metrics::hs_score(metrics::pose_histogram(in.truth_poses), metrics::pose_histogram(in.poses));
  Eigen::MatrixXd angles(static_cast<Eigen::Index>(in.poses.size()), 3);
  for (std::size_t t = 0; t < in.poses.size(); ++t) angles.row(static_cast<Eigen::Index>(t)) = in.poses[t].angles.transpose();
  if (in.features.rows() >= 3) {
    try {
      row.correlation = metrics::audio_pose_correlation(in.features, angles).coefficient;
    } catch (const PreconditionError& e) {
      warn(std::string("evaluate: ") + e.what());
    }
  }
  return row;
}

void prepare(const RunConfig& config) {
  config.validate();
  const Paths p{config.data_root};
  log("synthesizing corpus: " + std::to_string(config.corpus.identities) + " identities x " +
      std::to_string(config.corpus.frames) + " frames");
  const Corpus corpus = synthesize_corpus(config.corpus, true);
  write_corpus(corpus, p.corpus());
  audio::MfccConfig mc;
  mc.fps = config.corpus.fps;
  mc.sample_rate = config.corpus.sample_rate;
  for (const auto& d : corpus.identities) audio::save_features(audio::compute_mfcc(d.audio, mc), features_path(p, d.index));
  log("corpus written to " + p.corpus());
}

void train_general(const RunConfig& config) {
  config.validate();
  const Paths p{config.data_root};
  require_file(fs::path(p.corpus()) / "manifest.json", "run prepare first");
  const Corpus corpus = read_corpus(p.corpus(), config.use_refiner);
  fs::create_directories(p.models());

  // General identities are all but the target (the last one).
  std::vector<a2c::SequenceSample> chunks;
  for (std::size_t i = 0; i + 1 < corpus.identities.size(); ++i) {
    const auto& d = corpus.identities[i];
    const auto f = audio::load_features(features_path(p, d.index));
    for (auto& c : make_chunks(d, f, 0, d.frames(), config.chunk_frames)) chunks.push_back(std::move(c));
  }
  if (chunks.empty()) throw PreconditionError("train-general: no training sequences (chunk_frames too large?)");
  std::mt19937_64 rng(config.seed + 4);
  std::shuffle(chunks.begin(), chunks.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(chunks.size() * config.validation_fraction));
  if (n_val == 0 && config.validation_fraction > 0 && chunks.size() >= 2) n_val = 1;
  const std::vector<a2c::SequenceSample> val(chunks.end() - static_cast<std::ptrdiff_t>(n_val), chunks.end());
  chunks.resize(chunks.size() - n_val);

  a2c::RecurrentMapper mapper(config.mapper_config());
  a2c::TrainConfig tc;
  tc.epochs = config.general_epochs;
  tc.adam.lr = config.general_lr;
  tc.weights = config.loss;
  tc.shuffle_seed = config.seed + 5;
  tc.checkpoint_path = p.general_mapper();
  log("training general mapper on " + std::to_string(chunks.size()) + " sequences");
  const auto report = a2c::train_general(mapper, chunks, tc);
  mapper.save(p.general_mapper());
  a2c::save_loss_curve(report, (fs::path(p.models()) / "mapper_general_loss.csv").string());
  double val_loss = 0.0;
  for (const auto& s : val) val_loss += a2c::evaluate_loss(mapper, s, config.loss).total;
  nlohmann::ordered_json summary = {{"train_sequences", chunks.size()},
                                    {"validation_sequences", val.size()},
                                    {"initial_loss", report.initial_loss},
                                    {"final_loss", report.final_loss},
                                    {"diverged", report.diverged}};
  summary["validation_loss"] = val.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(val_loss / val.size());
  write_json((fs::path(p.models()) / "mapper_general.json").string(), summary);

  if (config.use_refiner) {
    std::vector<refine::PairedFrame> pairs;
    for (std::size_t i = 0; i + 1 < corpus.identities.size(); ++i) {
      auto part = make_pairs(corpus.identities[i], 0, corpus.identities[i].frames());
      std::move(part.begin(), part.end(), std::back_inserter(pairs));
    }
    refine::GanModel model(config.gan_config());
    refine::MemoryBank bank(config.bank_capacity, model.config().spatial_dim, model.config().identity_dim);
    auto rc = config.refine_config(config.refiner_epochs, config.identity_warmup_epochs);
    rc.checkpoint_path = p.general_refiner();
    log("training refiner on " + std::to_string(pairs.size()) + " frame pairs");
    const auto rr = refine::train_refiner(model, bank, pairs, rc);
    model.save(p.general_refiner());
    bank.save(p.general_refiner() + ".bank");
    refine::save_refine_report(rr, (fs::path(p.models()) / "refiner_general_loss.csv").string());
  }
}

void finetune_models(const RunConfig& config, int frames, const std::string& mapper_out, const std::string& refiner_out) {
  const Paths p{config.data_root};
  require_file(p.general_mapper(), "run train-general first");
  const Corpus corpus = read_corpus(p.corpus(), config.use_refiner);
  const auto& target = target_of(corpus);
  const auto f = audio::load_features(features_path(p, target.index));

  auto mapper = a2c::RecurrentMapper::load(p.general_mapper());
  a2c::TrainConfig tc;
  tc.epochs = config.finetune_epochs;
  tc.adam.lr = config.finetune_lr;
  tc.weights = config.loss;
  log("fine-tuning mapper on " + std::to_string(frames) + " target frames");
  const auto report = a2c::finetune(mapper, make_sample(target, f, 0, frames), tc);
  mapper.save(mapper_out);
  a2c::save_loss_curve(report, fs::path(mapper_out).replace_extension(".loss.csv").string());

  if (config.use_refiner) {
    require_file(p.general_refiner(), "run train-general with the refiner enabled");
    auto model = refine::GanModel::load(p.general_refiner());
    auto bank = refine::MemoryBank::load(p.general_refiner() + ".bank");
    const auto pairs = make_pairs(target, 0, frames);
    const auto rr = refine::train_refiner(model, bank, pairs, config.refine_config(config.refiner_finetune_epochs, 0));
    model.save(refiner_out);
    bank.save(refiner_out + ".bank");
    refine::save_refine_report(rr, fs::path(refiner_out).replace_extension(".loss.csv").string());
  }
}

void finetune(const RunConfig& config) {
  config.validate();
  if (!config.use_finetune) {
    warn("finetune: disabled (--no-finetune); generation will use the general models");
    return;
  }
  const Paths p{config.data_root};
  finetune_models(config, config.finetune_frames, p.personal_mapper(), p.personal_refiner());
}

GenerationResult generate_to(const RunConfig& config, const std::string& mapper_path, const std::string& refiner_path,
                             const std::string& out_dir) {
  const Paths p{config.data_root};
  require_file(mapper_path, "train or fine-tune the mapper first");
  const Corpus corpus = read_corpus(p.corpus(), true);
  const auto& target = target_of(corpus);
  const auto f = audio::load_features(features_path(p, target.index));
  const int start = config.holdout_start, count = target.frames() - config.holdout_start;
  const int n_input = config.finetune_frames;

  // Stage 1: audio to expression and pose.
  const auto mapper = a2c::RecurrentMapper::load(mapper_path);
  const Eigen::MatrixXd source = f.features.middleRows(start, count);
  const auto pred = mapper.forward(source);
  GenerationResult g;
  g.beta = pred.beta;
  g.predicted_poses = poses_from_matrix(pred.pose);
  fs::create_directories(out_dir);
  write_coefficients_csv((fs::path(out_dir) / "coefficients.csv").string(), g.beta, g.predicted_poses);

  // Stage 2: backgrounds from the input video, rendering, refinement.
  const std::vector<Image> input_frames(target.real.begin(), target.real.begin() + n_input);
  const std::vector<Pose> input_poses(target.poses.begin(), target.poses.begin() + n_input);
  g.keyframes = render::select_keyframes(g.predicted_poses, config.window_frames());
  std::vector<render::BackgroundPlate> plates;
  for (int k : g.keyframes)
    plates.push_back(render::match_background(g.predicted_poses[static_cast<std::size_t>(k)], input_frames, input_poses));
  std::vector<render::InterpolatedFrame> interp;
  if (g.keyframes.size() >= 2) {
    interp = render::interpolate_backgrounds(g.keyframes, plates, g.predicted_poses, config.pose_blend);
  } else {
    interp.push_back({plates[0].image, plates[0].source_pose, g.predicted_poses[0]});
  }

  face3d::VertexMatrix albedo;
  if (config.use_finetune) {
    albedo = face3d::assemble_texture(corpus.basis, target.base.delta);
  } else {
    std::vector<face3d::CoefficientSet> input_coeffs;
    for (int t = 0; t < n_input; ++t) input_coeffs.push_back(target.coefficients(t));
    albedo = render::extract_detailed_albedo(input_frames, input_coeffs, corpus.basis, corpus.camera).albedo;
  }
  const std::span<const double> gamma(target.base.gamma.data(), static_cast<std::size_t>(target.base.gamma.size()));
  for (int t = 0; t < count; ++t) {
    face3d::CoefficientSet c = target.base;
    c.beta = g.beta.row(t).transpose();
    c.pose = interp[static_cast<std::size_t>(t)].pose;
    face3d::FaceMesh mesh = face3d::build_mesh(corpus.basis, c);
    mesh.albedo = albedo;
    g.render_poses.push_back(c.pose);
    g.rendered.push_back(render::composite(render::rasterize(mesh, c.pose, corpus.camera, gamma),
                                           interp[static_cast<std::size_t>(t)].background));
  }
  render::write_pose_csv((fs::path(out_dir) / "render_poses.csv").string(), g.render_poses);
  write_frames((fs::path(out_dir) / "rendered").string(), g.rendered);

  if (config.use_refiner) {
    require_file(refiner_path, "train the refiner first");
    const auto model = refine::GanModel::load(refiner_path);
    const auto bank = refine::MemoryBank::load(refiner_path + ".bank");
    g.frames = refine::refine_sequence(model, bank, to_tensors(g.rendered), config.smoothing_window);
  } else {
    g.frames = g.rendered;
  }
  write_frames((fs::path(out_dir) / "frames").string(), g.frames);
  write_json((fs::path(out_dir) / "keyframes.json").string(), nlohmann::ordered_json(g.keyframes));
  return g;
}

GenerationResult generate(const RunConfig& config) {
  config.validate();
  const Paths p{config.data_root};
  const std::string mapper = config.use_finetune ? p.personal_mapper() : p.general_mapper();
  const std::string refiner = config.use_finetune ? p.personal_refiner() : p.general_refiner();
  log("generating with " + mapper);
  return generate_to(config, mapper, refiner, p.output());
}

metrics::MetricRow evaluate_dir(const RunConfig& config, const std::string& out_dir, const std::string& name) {
  const Paths p{config.data_root};
  require_file((fs::path(out_dir) / "coefficients.csv").string(), "run generate first");
  const Corpus corpus = read_corpus(p.corpus(), true);
  const auto& target = target_of(corpus);
  const auto f = audio::load_features(features_path(p, target.index));
  const int start = config.holdout_start, count = target.frames() - start;

  Eigen::MatrixXd beta;
  std::vector<Pose> predicted;
  read_coefficients_csv((fs::path(out_dir) / "coefficients.csv").string(), beta, predicted);
  if (static_cast<int>(predicted.size()) != count) throw IoError("generated sequence length differs from the held-out audio");
  const auto render_poses = render::read_pose_csv((fs::path(out_dir) / "render_poses.csv").string());

  EvaluationInput in;
  in.frames = read_frames((fs::path(out_dir) / "frames").string(), count);
  in.truth_frames.assign(target.real.begin() + start, target.real.end());
  in.truth_poses.assign(target.poses.begin() + start, target.poses.end());
  in.poses = predicted;
  in.landmarks = mouth_landmarks(corpus, target, beta, render_poses);
  in.truth_landmarks = mouth_landmarks(corpus, target, target.beta.middleRows(start, count), in.truth_poses);
  in.features = f.features.middleRows(start, count);
  return evaluate_sequences(name, in);
}

std::vector<metrics::MetricRow> evaluate(const RunConfig& config) {
  config.validate();
  const Paths p{config.data_root};
  std::vector<metrics::MetricRow> rows{evaluate_dir(config, p.output(), config.use_finetune ? "personalized" : "general")};
  fs::create_directories(p.reports());
  metrics::write_report_json((fs::path(p.reports()) / "metrics.json").string(), rows);
  metrics::write_report_csv((fs::path(p.reports()) / "metrics.csv").string(), rows);
  return rows;
}

std::vector<metrics::MetricRow> sweep_finetune_length(const RunConfig& config) {
  config.validate();
  const Paths p{config.data_root};
  std::vector<metrics::MetricRow> rows;
  for (int n : config.sweep_lengths) {
    RunConfig c = config;
    c.finetune_frames = n;
    c.use_finetune = true;
    const std::string tag = "finetune_" + std::to_string(n);
    const std::string dir = (fs::path(p.root) / "sweep" / tag).string();
    fs::create_directories(dir);
    const std::string mapper = (fs::path(dir) / "mapper.bin").string();
    const std::string refiner = (fs::path(dir) / "refiner.bin").string();
    finetune_models(c, n, mapper, refiner);
    generate_to(c, mapper, refiner, dir);
    rows.push_back(evaluate_dir(c, dir, tag));
  }
  fs::create_directories(p.reports());
  metrics::write_report_json((fs::path(p.reports()) / "sweep.json").string(), rows);
  metrics::write_report_csv((fs::path(p.reports()) / "sweep.csv").string(), rows);
  return rows;
}

}  // namespace th::pipeline
