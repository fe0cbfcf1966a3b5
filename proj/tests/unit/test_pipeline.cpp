#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "talkinghead/error.hpp"
#include "talkinghead/io/csv.hpp"
#include "talkinghead/io/image.hpp"
#include "talkinghead/metrics/metrics.hpp"
#include "talkinghead/pipeline/config.hpp"
#include "talkinghead/pipeline/corpus.hpp"
#include "talkinghead/pipeline/stages.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using namespace th;
using namespace th::pipeline;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) ++n;
  return n;
}

TEST(Corpus, CountsOnDisk) {
  th::test::TempDir dir("corpus_counts");
  CorpusSpec spec;
  spec.identities = 2;
  spec.frames = 300;
  const Corpus c = synthesize_corpus(spec);
  write_corpus(c, dir.path().string());
  for (int i = 0; i < 2; ++i) {
    const fs::path id = identity_dir(dir.path().string(), i);
    EXPECT_TRUE(fs::exists(id / "audio.wav"));
    EXPECT_EQ(count_files(id / "rendered", ".png"), 300u);
    EXPECT_EQ(count_files(id / "real", ".png"), 300u);
    Eigen::MatrixXd beta;
    std::vector<face3d::Pose> poses;
    read_coefficients_csv((id / "coefficients.csv").string(), beta, poses);
    EXPECT_EQ(beta.rows(), 300);
    EXPECT_EQ(poses.size(), 300u);
    EXPECT_EQ(audio::compute_mfcc(c.identities[i].audio).frames(), 300);
  }
}

TEST(Corpus, SameSeedIsByteIdentical) {
  th::test::TempDir a("corpus_a"), b("corpus_b");
  CorpusSpec spec;
  spec.identities = 2;
  spec.frames = 60;
  write_corpus(synthesize_corpus(spec), a.path().string());
  write_corpus(synthesize_corpus(spec), b.path().string());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b.path() / fs::relative(e.path(), a.path());
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    ++files;
  }
  EXPECT_GT(files, 240u);

  spec.seed += 1;
  const Corpus other = synthesize_corpus(spec, false);
  EXPECT_NE(other.identities[0].audio.samples, synthesize_corpus(CorpusSpec{.identities = 2, .frames = 60}, false).identities[0].audio.samples);
}

TEST(Corpus, ReadBackEqualsSynthesized) {
  th::test::TempDir dir("corpus_read");
  CorpusSpec spec;
  spec.identities = 2;
  spec.frames = 40;
  const Corpus c = synthesize_corpus(spec);
  write_corpus(c, dir.path().string());
  const Corpus r = read_corpus(dir.path().string());
  ASSERT_EQ(r.identities.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    const auto& x = c.identities[i];
    const auto& y = r.identities[i];
    EXPECT_EQ(x.audio.samples, y.audio.samples);
    EXPECT_EQ(x.beta, y.beta);
    EXPECT_EQ(x.pose_matrix(), y.pose_matrix());
    EXPECT_EQ(x.real[7].data, y.real[7].data);
    EXPECT_EQ(x.rendered[39].data, y.rendered[39].data);
    EXPECT_EQ(x.base.alpha, y.base.alpha);
  }
}

TEST(Corpus, RealFramesDifferFromRenderedOnlyOnTheFace) {
  CorpusSpec spec;
  spec.identities = 1;
  spec.frames = 5;
  const Corpus c = synthesize_corpus(spec);
  const auto& d = c.identities[0];
  const double diff = mean_abs_diff(d.rendered[0], d.real[0]);
  EXPECT_GT(diff, 1e-3);
  EXPECT_LT(diff, 0.1);
}

TEST(Corpus, AudioPoseCorrelationAboveFourTenths) {
  CorpusSpec spec;
  spec.identities = 4;
  spec.frames = 400;
  const Corpus c = synthesize_corpus(spec, false);
  for (const auto& d : c.identities) {
    const auto f = audio::compute_mfcc(d.audio);
    const auto r = metrics::audio_pose_correlation(f.features, d.pose_matrix().leftCols(3));
    ASSERT_TRUE(r.coefficient.has_value());
    EXPECT_GT(*r.coefficient, 0.4) << "identity " << d.index;
  }
}

TEST(Config, ParsesKeyValueFile) {
  th::test::TempDir dir("cfg");
  std::ofstream(dir.file("a.cfg")) << "# comment\n"
                                      "identities = 3\n"
                                      "frames_per_identity=200   # trailing\n"
                                      "\n"
                                      "finetune_frames = 100\n"
                                      "holdout_start = 150\n"
                                      "use_refiner = no\n"
                                      "sweep_lengths = 50, 100\n"
                                      "lambda_pose = 0.3\n";
  const RunConfig c = RunConfig::from_file(dir.file("a.cfg"));
  EXPECT_EQ(c.corpus.identities, 3);
  EXPECT_EQ(c.corpus.frames, 200);
  EXPECT_EQ(c.finetune_frames, 100);
  EXPECT_FALSE(c.use_refiner);
  EXPECT_EQ(c.sweep_lengths, (std::vector<int>{50, 100}));
  EXPECT_DOUBLE_EQ(c.loss.pose, 0.3);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.entries().at("identities"), "3");
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const RunConfig c;
  EXPECT_EQ(c.loss.pose, 0.2);
  EXPECT_EQ(c.loss.pose_continuity, 0.01);
  EXPECT_EQ(c.loss.expression_continuity, 1e-4);
  EXPECT_EQ(c.gan_loss.l1, 100.0);
  EXPECT_EQ(c.gan_loss.attention, 2.0);
  EXPECT_EQ(c.gan_loss.tv, 1e-5);
  EXPECT_EQ(c.finetune_frames, 300);
  EXPECT_EQ(c.window_frames(), 25);
  EXPECT_EQ(c.pose_blend, 0.5);
  EXPECT_EQ(c.tau, 0.5);
  EXPECT_EQ(c.margin, 0.2);
}

TEST(Config, RejectsBadInput) {
  th::test::TempDir dir("cfg_bad");
  std::ofstream(dir.file("u.cfg")) << "no_such_key = 1\n";
  EXPECT_THROW(RunConfig::from_file(dir.file("u.cfg")), th::ConfigError);
  std::ofstream(dir.file("m.cfg")) << "identities = three\n";
  EXPECT_THROW(RunConfig::from_file(dir.file("m.cfg")), th::ConfigError);
  std::ofstream(dir.file("s.cfg")) << "just some words\n";
  EXPECT_THROW(RunConfig::from_file(dir.file("s.cfg")), th::ConfigError);
  EXPECT_THROW(RunConfig::from_file(dir.file("missing.cfg")), std::exception);
  RunConfig c;
  c.set("lambda_tv", "-1");
  EXPECT_THROW(c.validate(), th::ConfigError);
  c = RunConfig{};
  c.holdout_start = 500;
  EXPECT_THROW(c.validate(), th::ConfigError);
  c = RunConfig{};
  c.sweep_lengths = {400};
  EXPECT_THROW(c.validate(), th::ConfigError);
}

TEST(Config, EnvironmentOverridesDataRoot) {
  th::test::TempDir dir("cfg_env");
  std::ofstream(dir.file("a.cfg")) << "data_root = from_file\n";
  ::setenv("TALKINGHEAD_DATA", "/tmp/from_env", 1);
  const RunConfig c = RunConfig::load(dir.file("a.cfg"));
  ::unsetenv("TALKINGHEAD_DATA");
  EXPECT_EQ(c.data_root, "/tmp/from_env");
  EXPECT_EQ(RunConfig::load(dir.file("a.cfg")).data_root, "from_file");
}

TEST(Evaluate, GroundTruthAgainstItselfIsPerfect) {
  CorpusSpec spec;
  spec.identities = 1;
  spec.frames = 60;
  const Corpus c = synthesize_corpus(spec);
  const auto& d = c.identities[0];
  EvaluationInput in;
  in.truth_frames = in.frames = d.real;
  in.truth_landmarks = in.landmarks = mouth_landmarks(c, d, d.beta, d.poses);
  in.truth_poses = in.poses = d.poses;
  in.features = audio::compute_mfcc(d.audio).features;
  const auto row = evaluate_sequences("self", in);
  EXPECT_EQ(row.psnr, metrics::kPsnrCap);
  EXPECT_NEAR(row.ssim, 1.0, 1e-12);
  EXPECT_EQ(row.lmd, 0.0);
  EXPECT_EQ(row.hs, 1.0);
  EXPECT_TRUE(row.correlation.has_value());
}

RunConfig tiny_run(const std::string& root) {
  RunConfig c;
  c.data_root = root;
  c.corpus.identities = 2;
  c.corpus.frames = 120;
  c.finetune_frames = 40;
  c.holdout_start = 80;
  c.chunk_frames = 40;
  c.general_epochs = 2;
  c.finetune_epochs = 2;
  c.refiner_epochs = 1;
  c.refiner_finetune_epochs = 1;
  c.identity_warmup_epochs = 1;
  c.sweep_lengths = {20, 40};
  return c;
}

TEST(Stages, TinyEndToEndRun) {
  th::test::TempDir dir("stages");
  const RunConfig c = tiny_run(dir.path().string());
  EXPECT_THROW(train_general(c), std::exception);  // corpus missing
  prepare(c);
  train_general(c);
  const Paths p{c.data_root};
  EXPECT_TRUE(fs::exists(p.general_mapper()));
  EXPECT_TRUE(fs::exists(p.general_refiner()));
  finetune(c);
  EXPECT_TRUE(fs::exists(p.personal_mapper()));
  const auto g = generate(c);
  const int held_out = c.corpus.frames - c.holdout_start;
  EXPECT_EQ(g.beta.rows(), held_out);
  EXPECT_EQ(static_cast<int>(g.frames.size()), held_out);
  EXPECT_EQ(static_cast<int>(g.render_poses.size()), held_out);
  EXPECT_EQ(count_files(fs::path(p.output()) / "frames", ".png"), static_cast<std::size_t>(held_out));
  const auto table = io::read_csv((fs::path(p.output()) / "coefficients.csv").string());
  EXPECT_EQ(static_cast<int>(table.rows.size()), held_out);
  EXPECT_EQ(g.keyframes.front(), 0);
  EXPECT_EQ(g.keyframes.back(), held_out - 1);

  const auto rows = evaluate(c);
  ASSERT_FALSE(rows.empty());
  EXPECT_TRUE(fs::exists(fs::path(p.reports()) / "metrics.json"));
  EXPECT_TRUE(fs::exists(fs::path(p.reports()) / "metrics.csv"));
  for (const auto& r : rows) {
    EXPECT_GT(r.psnr, 0.0);
    EXPECT_GT(r.ssim, -1.0);
    EXPECT_GE(r.lmd, 0.0);
    EXPECT_GE(r.hs, 0.0);
    EXPECT_LE(r.hs, 1.0);
  }

  const auto sweep = sweep_finetune_length(c);
  EXPECT_EQ(sweep.size(), c.sweep_lengths.size());
  EXPECT_TRUE(fs::exists(fs::path(p.reports()) / "sweep.json"));

  // Without the refiner the output frames are the raw composites.
  RunConfig raw = c;
  raw.use_refiner = false;
  const auto r = generate(raw);
  ASSERT_EQ(r.frames.size(), r.rendered.size());
  for (std::size_t i = 0; i < r.frames.size(); ++i) EXPECT_EQ(r.frames[i].data, r.rendered[i].data);

  // Without fine-tuning the general mapper drives generation.
  RunConfig general = c;
  general.use_finetune = false;
  const auto gg = generate(general);
  EXPECT_EQ(gg.beta.rows(), held_out);
  EXPECT_NE(gg.beta, g.beta);
}

}  // namespace
