#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "talkinghead/error.hpp"
#include "talkinghead/pipeline/stages.hpp"

namespace {

void print_rows(const std::vector<th::metrics::MetricRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.name << ": psnr=" << r.psnr << " ssim=" << r.ssim << " lmd=" << r.lmd << " hs=" << r.hs
              << " corr=";
    if (r.correlation)
      std::cout << *r.correlation;
    else
      std::cout << "null";
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-driven talking-face pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  bool no_finetune = false, no_refiner = false, quiet = false;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "random seed for corpus and training");
  app.add_option("--frames", frames, "number of target frames used for fine-tuning");
  app.add_flag("--no-finetune", no_finetune, "skip personalization (general mapping only)");
  app.add_flag("--no-refiner", no_refiner, "output raw composites without the refinement network");
  app.add_flag("-q,--quiet", quiet, "suppress progress and warnings");

  auto* prepare = app.add_subcommand("prepare", "synthesize the corpus and audio features");
  auto* train = app.add_subcommand("train-general", "train the general mapper and the refiner");
  auto* finetune = app.add_subcommand("finetune", "personalize mapper and refiner on the target video");
  auto* generate = app.add_subcommand("generate", "drive the target from held-out audio");
  auto* evaluate = app.add_subcommand("evaluate", "score the generated video");
  auto* sweep = app.add_subcommand("sweep-finetune-length", "fine-tune, generate and evaluate per length");
  // Global flags are accepted after the subcommand as well.
  for (auto* sub : {prepare, train, finetune, generate, evaluate, sweep}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    th::set_quiet(quiet);
    auto config = th::pipeline::RunConfig::load(config_path);
    if (seed) config.set("seed", std::to_string(*seed));
    if (frames) config.finetune_frames = *frames;
    if (no_finetune) config.use_finetune = false;
    if (no_refiner) config.use_refiner = false;

    if (*prepare) th::pipeline::prepare(config);
    if (*train) th::pipeline::train_general(config);
    if (*finetune) th::pipeline::finetune(config);
    if (*generate) {
      const auto g = th::pipeline::generate(config);
      std::cout << "generated " << g.frames.size() << " frames, " << g.keyframes.size() << " keyframes\n";
    }
    if (*evaluate) print_rows(th::pipeline::evaluate(config));
    if (*sweep) print_rows(th::pipeline::sweep_finetune_length(config));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
