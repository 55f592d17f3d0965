// Command-line experiment runner: train / evaluate / export-embeddings /
// sweep over the flat key=value config format.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rrm/config.hpp"
#include "rrm/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out) {
  cmd->add_option("--config", args.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "Override: key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "Override run.seed");
  if (with_out) cmd->add_option("--out", args.out, "Output directory / file");
}

rrm::ExperimentConfig load_config(const CommonArgs& args) {
  rrm::ExperimentConfig cfg = args.config_path.empty()
                                  ? rrm::ExperimentConfig{}
                                  : rrm::parse_config_file(args.config_path);
  for (const std::string& kv : args.overrides) rrm::apply_override(cfg, kv);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out.empty()) cfg.out_dir = args.out;
  cfg.validate();
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReRankMatch semi-supervised training at desk scale"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, export_args, sweep_args;
  std::string checkpoint, seeds_csv = "0,1,2,3,4";

  CLI::App* train = app.add_subcommand("train", "Run one training experiment");
  add_common(train, train_args, true);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Test-set error rate of a checkpoint");
  add_common(evaluate, eval_args, false);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  CLI::App* exp = app.add_subcommand(
      "export-embeddings", "Write normalized logits per sample as TSV");
  add_common(exp, export_args, true);
  exp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  CLI::App* sw = app.add_subcommand("sweep", "Repeat an experiment over seeds");
  add_common(sw, sweep_args, true);
  sw->add_option("--seeds", seeds_csv, "Comma-separated seed list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const rrm::ExperimentConfig cfg = load_config(train_args);
      const rrm::RunSummary s = rrm::run_experiment(cfg, cfg.out_dir);
      std::printf("mode=%s seed=%llu steps=%zu test_error=%.4f\n",
                  s.mode.c_str(), static_cast<unsigned long long>(s.seed),
                  s.total_steps, s.final_test_error);
    } else if (evaluate->parsed()) {
      const rrm::ExperimentConfig cfg = load_config(eval_args);
      const rrm::Dataset ds = rrm::build_dataset(cfg);
      const rrm::SslSplit split = rrm::build_split(cfg, ds);
      const rrm::ModelParams params = rrm::load_checkpoint(checkpoint);
      const double err = rrm::evaluate(params, ds, split.test);
      std::printf("test_error=%.4f (%zu samples)\n", err, split.test.size());
    } else if (exp->parsed()) {
      const rrm::ExperimentConfig cfg = load_config(export_args);
      const rrm::Dataset ds = rrm::build_dataset(cfg);
      const std::string out =
          export_args.out.empty() ? "embeddings.tsv" : export_args.out;
      rrm::export_embeddings(checkpoint, ds, out);
      std::printf("wrote %zu rows to %s\n", ds.size(), out.c_str());
    } else if (sw->parsed()) {
      const rrm::ExperimentConfig cfg = load_config(sweep_args);
      const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);
      const rrm::SweepSummary s = rrm::sweep(cfg, seeds, cfg.out_dir);
      std::printf("error rate over %zu seeds: %.2f%% +- %.2f%%\n", seeds.size(),
                  100.0 * s.mean_error, 100.0 * s.std_error);
    }
  } catch (const rrm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
