// chateval: dialog-evaluator / response-generator pipeline driver.
//
//   chateval run --config cfg.json [--stage NAME] [overrides]
//   chateval make-toy-corpus --work-dir runs/toy
//   chateval score-turn --checkpoint runs/toy/evaluator \
//       --context '{"turns":[...],"user":"..."}' --response "..."

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "chateval/pipeline.h"

using chateval::PipelineConfig;

int main(int argc, char** argv) {
  CLI::App app{"conversation evaluation and generation pipeline"};
  app.require_subcommand(1);

  std::string config_path, work_dir, stage, corpus_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lambda = -1;
  std::vector<std::string> variants;
  int free_running = -1;
  bool toy = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config JSON");
    cmd->add_option("--work-dir", work_dir, "artifact directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; },
        "master seed");
    cmd->add_option("--corpus", corpus_path, "input corpus JSONL");
    cmd->add_option("--lambda", lambda, "evaluator-loss weight");
    cmd->add_option("--variant", variants, "system variant(s) to run");
    cmd->add_flag("--toy", toy, "generate the synthetic corpus");
    cmd->add_flag("--teacher-forced{0},--free-running{1}", free_running,
                  "soft-decode mode for fine-tuning");
  };

  CLI::App* run = app.add_subcommand("run", "run pipeline stages");
  run->add_option("--stage", stage, "single stage; default: all in order");
  add_common(run);

  CLI::App* mk =
      app.add_subcommand("make-toy-corpus", "write the synthetic corpus");
  add_common(mk);

  CLI::App* score =
      app.add_subcommand("score-turn", "score one response with a trained "
                                       "evaluator");
  std::string checkpoint, context_json = "{}", response;
  score->add_option("--checkpoint", checkpoint, "evaluator checkpoint dir")
      ->required();
  score->add_option("--context", context_json, "context JSON");
  score->add_option("--response", response, "response text")->required();

  CLI::App* stages = app.add_subcommand("stages", "list stage names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stages->parsed()) {
      for (const std::string& s : chateval::pipeline_stages())
        std::printf("%s\n", s.c_str());
      return 0;
    }
    if (score->parsed()) {
      auto ev = chateval::Evaluator::load(checkpoint);
      std::string out = chateval::score_turn_json(*ev, context_json, response);
      std::printf("%s\n", out.c_str());
      return 0;
    }
    PipelineConfig cfg;
    if (!config_path.empty())
      cfg = PipelineConfig::from_json_file(config_path);
    if (!work_dir.empty()) cfg.work_dir = work_dir;
    // relative work dirs resolve under CHATEVAL_RUNS_ROOT when it is set
    if (const char* root = std::getenv("CHATEVAL_RUNS_ROOT");
        root && *root && std::filesystem::path(cfg.work_dir).is_relative())
      cfg.work_dir = (std::filesystem::path(root) / cfg.work_dir).string();
    if (seed_set) cfg.seed = seed;
    if (!corpus_path.empty()) cfg.corpus_path = corpus_path;
    if (lambda >= 0) cfg.finetune.lambda = lambda;
    if (!variants.empty()) cfg.variants = variants;
    if (free_running >= 0) cfg.finetune.teacher_forced = free_running == 0;
    if (toy) cfg.toy = true;
    if (mk->parsed()) {
      cfg.toy = true;
      chateval::run_stage(cfg, "prepare-data");
      return 0;
    }
    if (!stage.empty())
      chateval::run_stage(cfg, stage);
    else
      chateval::run_all(cfg);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
