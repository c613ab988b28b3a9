// Command-line surface: prepare | train | evaluate | explain | sweep,
// config-driven. Exit codes: 0 ok, 2 config/validation, 3 training, 4 data.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gundet/commands.hpp"
#include "gundet/errors.hpp"

using namespace gundet;

int main(int argc, char** argv) {
  CLI::App app{"two-stage gun detection experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int64_t seed_override = -1;
  app.add_option("--config", config_path, "experiment config JSON")
      ->required();
  app.add_option("--seed", seed_override, "override config seed");
  app.add_option("--out", out_dir, "override config out_dir");

  auto* prepare = app.add_subcommand("prepare", "discover corpora, write split manifests");

  std::string train_target;
  auto* train = app.add_subcommand("train", "train one model");
  train->add_option("--target", train_target, "backbone|classifier|detector")
      ->required();

  std::string eval_mode = "both";
  auto* evaluate = app.add_subcommand("evaluate", "run the pipeline and write reports");
  evaluate->add_option("--mode", eval_mode, "two-stage|detection-only|both");

  std::string video_id;
  std::vector<int> frames;
  double alpha = 0.4;
  auto* explain = app.add_subcommand("explain", "class activation overlays");
  explain->add_option("--video", video_id, "video id (path or directory name)")
      ->required();
  explain->add_option("--frames", frames, "sampled frame indices")->required();
  explain->add_option("--alpha", alpha, "overlay blend weight");

  auto* sweep = app.add_subcommand("sweep", "expand the backbone x head grid");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<uint64_t>(seed_override);
      cfg.train_backbone.seed = cfg.seed;
      cfg.train_classifier.seed = cfg.seed;
      cfg.train_detector.seed = cfg.seed;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (prepare->parsed()) cmd_prepare(cfg);
    if (train->parsed()) cmd_train(cfg, train_target);
    if (evaluate->parsed()) cmd_evaluate(cfg, eval_mode);
    if (explain->parsed()) cmd_explain(cfg, video_id, frames, alpha);
    if (sweep->parsed()) cmd_sweep(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kExitTraining;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
