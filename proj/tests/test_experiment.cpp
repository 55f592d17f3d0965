#include "rrm/experiment.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rrm {
namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream oss;
  oss << is.rdbuf();
  return oss.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.dataset_n = 120;
  cfg.n_labeled = 8;
  cfg.hp.batch_size = 4;
  cfg.hp.mu = 2;
  cfg.hidden1 = 8;
  cfg.hidden2 = 8;
  cfg.rep_dim = 4;
  cfg.epochs = 1;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

TEST(RunExperiment, WritesArtifacts) {
  TempDir dir("rrm_exp_artifacts");
  const RunSummary s = run_experiment(tiny_config(), dir.str());
  EXPECT_TRUE(fs::exists(dir.path / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "summary.json"));
  EXPECT_TRUE(fs::exists(dir.path / "checkpoint_final.bin"));
  EXPECT_EQ(s.mode, "rerankmatch-ct");
  EXPECT_GE(s.final_test_error, 0.0);
  EXPECT_LE(s.final_test_error, 1.0);
  EXPECT_EQ(s.test_error_per_epoch.size(), 1u);

  const std::string csv = slurp((dir.path / "metrics.csv").string());
  EXPECT_EQ(csv.rfind("step,lr,ce_x,ce_u,rank,featcont,total,mask_rate,pair_pos_rate\n", 0), 0u);
  // every row parses as 9 comma-separated fields
  std::istringstream lines(csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 1u + s.total_steps);
  const std::string summary = slurp((dir.path / "summary.json").string());
  EXPECT_NE(summary.find("\"mode\""), std::string::npos);
  EXPECT_NE(summary.find("final_test_error"), std::string::npos);
}

TEST(RunExperiment, RerunIsByteIdentical) {
  TempDir a("rrm_exp_rerun_a"), b("rrm_exp_rerun_b");
  const ExperimentConfig cfg = tiny_config();
  run_experiment(cfg, a.str());
  run_experiment(cfg, b.str());
  EXPECT_EQ(slurp((a.path / "metrics.csv").string()),
            slurp((b.path / "metrics.csv").string()));
  EXPECT_EQ(slurp((a.path / "summary.json").string()),
            slurp((b.path / "summary.json").string()));
  EXPECT_EQ(slurp((a.path / "checkpoint_final.bin").string()),
            slurp((b.path / "checkpoint_final.bin").string()));
}

TEST(RunExperiment, SupervisedBaselineIsLabeled) {
  TempDir dir("rrm_exp_supervised");
  ExperimentConfig cfg = tiny_config();
  cfg.hp.lambda_u = 0.0;
  cfg.hp.lambda_r = 0.0;
  cfg.hp.lambda_s = 0.0;
  const RunSummary s = run_experiment(cfg, dir.str());
  EXPECT_EQ(s.mode, "supervised-baseline");
  const std::string summary = slurp((dir.path / "summary.json").string());
  EXPECT_NE(summary.find("supervised-baseline"), std::string::npos);
}

TEST(RunExperiment, RankingMatchModeWhenSemanticOff) {
  TempDir dir("rrm_exp_rankingmatch");
  ExperimentConfig cfg = tiny_config();
  cfg.hp.lambda_s = 0.0;
  cfg.rank_kind = RankKind::kBatchMeanTriplet;
  EXPECT_EQ(run_experiment(cfg, dir.str()).mode, "rankingmatch-bm");
}

TEST(ExportEmbeddings, ShapeNormAndDeterminism) {
  TempDir dir("rrm_exp_export");
  ExperimentConfig cfg = tiny_config();
  cfg.dataset_classes = 4;
  const RunSummary s = run_experiment(cfg, dir.str());
  (void)s;
  const Dataset ds = build_dataset(cfg);
  const std::string ckpt = (dir.path / "checkpoint_final.bin").string();
  const std::string tsv1 = (dir.path / "emb1.tsv").string();
  const std::string tsv2 = (dir.path / "emb2.tsv").string();
  export_embeddings(ckpt, ds, tsv1);
  export_embeddings(ckpt, ds, tsv2);
  EXPECT_EQ(slurp(tsv1), slurp(tsv2));

  std::ifstream is(tsv1);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "logit_0\tlogit_1\tlabel");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++rows;
    std::istringstream ls(line);
    double a, b;
    int label;
    ls >> a >> b >> label;
    EXPECT_NEAR(std::sqrt(a * a + b * b), 1.0, 1e-6);
    EXPECT_TRUE(label == 0 || label == 1);
  }
  EXPECT_EQ(rows, ds.size());
}

TEST(ExportEmbeddings, FourClassesGiveFiveColumns) {
  const std::string dir =
      (fs::temp_directory_path() / "rrm_exp_export4").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Dataset ds = make_shapes(10, 8, 4, 3);
  const ModelParams p = init_params(0, {64, 8, 8, 4, 4});
  const std::string ckpt = dir + "/ckpt.bin";
  save_checkpoint(p, ckpt);
  const std::string tsv = dir + "/emb.tsv";
  export_embeddings(ckpt, ds, tsv);
  std::ifstream is(tsv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);  // 5 columns
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
    ++rows;
  }
  EXPECT_EQ(rows, 10u);
  fs::remove_all(dir);
}

TEST(ExportEmbeddings, ShapeMismatchThrows) {
  TempDir dir("rrm_exp_export_mismatch");
  ExperimentConfig cfg = tiny_config();
  run_experiment(cfg, dir.str());
  const Dataset wrong = make_shapes(10, 8, 4, 0);  // 64 features, not 2
  EXPECT_THROW(export_embeddings((dir.path / "checkpoint_final.bin").string(),
                                 wrong, (dir.path / "bad.tsv").string()),
               ShapeError);
}

TEST(Sweep, AggregatesSeedRuns) {
  TempDir dir("rrm_exp_sweep");
  const SweepSummary s = sweep(tiny_config(), {1, 2}, dir.str());
  EXPECT_EQ(s.test_errors.size(), 2u);
  EXPECT_TRUE(fs::exists(dir.path / "seed_1" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "seed_2" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "sweep_summary.json"));
  const double mean = 0.5 * (s.test_errors[0] + s.test_errors[1]);
  EXPECT_NEAR(s.mean_error, mean, 1e-15);
}

TEST(BuildDataset, KindsAndSeedDerivation) {
  ExperimentConfig cfg = tiny_config();
  const Dataset moons = build_dataset(cfg);
  EXPECT_EQ(moons.kind, Dataset::Kind::kVector);
  EXPECT_EQ(moons.size(), 120u);

  cfg.dataset_kind = "shapes";
  cfg.dataset_size = 8;
  const Dataset shapes = build_dataset(cfg);
  EXPECT_EQ(shapes.kind, Dataset::Kind::kImage);

  // seed change resamples the data
  ExperimentConfig cfg2 = tiny_config();
  cfg2.seed = 1;
  const Dataset moons2 = build_dataset(cfg2);
  bool any_diff = false;
  for (std::size_t i = 0; i < moons.samples.numel(); ++i) {
    if (moons.samples[i] != moons2.samples[i]) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

}  // namespace
}  // namespace rrm
