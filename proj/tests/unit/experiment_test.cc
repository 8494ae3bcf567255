#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "toxctx/error.h"
#include "toxctx/experiment.h"
#include "toxctx/synthetic.h"
#include "unit/test_util.h"

namespace toxctx {
namespace {

namespace fs = std::filesystem;
using testing::FixturePath;
using testing::ScratchDir;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void ExpectConfigError(const std::string& json) {
  try {
    ParseExperimentConfig(json);
    FAIL() << json;
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig) << json;
  }
}

TEST(ExperimentConfig, DefaultsAreValidAndRoundTrip) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.Validate());
  const ExperimentConfig back = ParseExperimentConfig(ExperimentConfigToJson(c));
  EXPECT_EQ(ExperimentConfigToJson(back), ExperimentConfigToJson(c));
  EXPECT_EQ(back.Hash(), c.Hash());
}

TEST(ExperimentConfig, UnknownKeysAreRejected) {
  ExpectConfigError(R"({"experiment_idd": "x"})");
  ExpectConfigError(R"({"split": {"n_train": 5, "ntest": 3}})");
  ExpectConfigError(R"({"encoder": {"d_model": 8, "layers": 2}})");
  ExpectConfigError(R"({"epochs": "ten"})");
  ExpectConfigError(R"([1, 2])");
  ExpectConfigError(R"({"epochs": 3)");
}

TEST(ExperimentConfig, SemanticChecks) {
  ExpectConfigError(
      R"({"pretrained_variant": "dap_sender", "separator_scheme": "period"})");
  ExpectConfigError(R"({"lr_grid": []})");
  ExpectConfigError(R"({"lr_grid": [1e-5, -1e-5]})");
  ExpectConfigError(R"({"token_budget": 129})");
  ExpectConfigError(R"({"class_weight_mode": "balanced"})");
  ExpectConfigError(R"({"experiment_id": "../up"})");
  ExpectConfigError(R"({"propensity": {"test_fraction": 1.0}})");
  ExpectConfigError(R"({"masking": {"mask_frac": 0.9}})");
  ExpectConfigError(R"({"context_level": "everyone"})");
}

TEST(ExperimentConfig, VariantImpliesScheme) {
  EXPECT_EQ(ParseExperimentConfig(R"({"pretrained_variant": "dap_sep"})")
                .separator_scheme,
            SeparatorScheme::kNeutralSep);
  EXPECT_EQ(ParseExperimentConfig(R"({"pretrained_variant": "dap_sender"})")
                .separator_scheme,
            SeparatorScheme::kSenderTokens);
  EXPECT_EQ(ParseExperimentConfig(
                R"({"pretrained_variant": "base",
                    "separator_scheme": "sender_tokens"})")
                .separator_scheme,
            SeparatorScheme::kSenderTokens);
}

TEST(ExperimentConfig, HashCoversModelShapingFieldsOnly) {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.lr_grid = {1e-3};
  b.n_runs = 2;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.Hash(), b.Hash());
  b.context_level = ContextLevel::kAllPlayers;
  EXPECT_NE(a.Hash(), b.Hash());
  ExperimentConfig c = a;
  c.split.seed = 9;
  EXPECT_NE(a.Hash(), c.Hash());
  // Finetuning-only fields leave the pretrained encoder alone.
  ExperimentConfig d = a;
  d.pretrained_variant = PretrainedVariant::kDap;
  ExperimentConfig e = d;
  e.context_level = ContextLevel::kCurrentPlayer;
  e.epochs = 3;
  EXPECT_EQ(d.PretrainHash(), e.PretrainHash());
  e.pretrain_epochs = 1;
  EXPECT_NE(d.PretrainHash(), e.PretrainHash());
  EXPECT_NE(d.Hash(), e.Hash());
}

TEST(ExperimentConfig, MissingFileIsConfigError) {
  try {
    LoadExperimentConfig("/nonexistent/toxctx.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

// Small corpus and model so a full pipeline runs in seconds.
ExperimentConfig SmallPipeline(const std::string& name) {
  const fs::path dir = ScratchDir(name);
  SyntheticConfig s;
  s.n_matches = 40;
  s.labeled_fraction = 1.0;
  std::ofstream(dir / "corpus.jsonl") << [&] {
    std::ostringstream out;
    WriteMatches(out, GenerateSyntheticCorpus(s, 5));
    return out.str();
  }();
  ExperimentConfig c;
  c.experiment_id = "tiny";
  c.dataset_paths.corpus = (dir / "corpus.jsonl").string();
  c.output_dir = (dir / "runs").string();
  c.split = {24, 12, 3};
  c.lr_grid = {1e-3, 3e-3};
  c.n_runs = 2;
  c.epochs = 2;
  c.batch_size = 8;
  c.token_budget = 32;
  c.pretrain_epochs = 1;
  c.pretrain_lr = 1e-3;
  c.encoder.model = {8, 1, 2, 16, 32, 0.02};
  return c;
}

TEST(Pipeline, DapSweepNeedsPretraining) {
  ExperimentConfig c = SmallPipeline("pipeline_missing");
  c.pretrained_variant = PretrainedVariant::kDap;
  try {
    RunSweep(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingArtifact);
    EXPECT_NE(std::string(e.what()).find("pretrain"), std::string::npos);
  }
}

TEST(Pipeline, PretrainSweepEvaluateReport) {
  ExperimentConfig c = SmallPipeline("pipeline_full");
  c.pretrained_variant = PretrainedVariant::kDapSender;
  c.separator_scheme = SeparatorScheme::kSenderTokens;
  c.context_level = ContextLevel::kCurrentPlayer;
  const PretrainSummary pre = RunPretrain(c);
  EXPECT_FALSE(pre.skipped);
  EXPECT_EQ(pre.epoch_losses.size(), 1u);
  EXPECT_TRUE(fs::exists(fs::path(PretrainDir(c)) / "manifest.json"));

  const SweepSummary sweep = RunSweep(c, 1);
  EXPECT_EQ(sweep.cells_run, 4u);
  EXPECT_EQ(sweep.directory, SweepDir(c));
  const fs::path dir = SweepDir(c);
  EXPECT_EQ(ReadRunMetricsFile((dir / "metrics.jsonl").string()).size(), 8u);
  const auto manifest = nlohmann::json::parse(Slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), c.Hash());
  EXPECT_EQ(manifest.at("variant"), "dap_sender");

  const AggregateRow best = RunEvaluate(c);
  EXPECT_EQ(best.n_runs, 2u);
  EXPECT_TRUE(fs::exists(dir / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(dir / "selection.json"));

  // A second sweep finds everything on disk.
  const std::string metrics = Slurp(dir / "metrics.jsonl");
  const SweepSummary again = RunSweep(c, 1);
  EXPECT_EQ(again.cells_run, 0u);
  EXPECT_EQ(again.cells_skipped, 4u);
  EXPECT_EQ(Slurp(dir / "metrics.jsonl"), metrics);

  const auto rows = RunReport(ExperimentDir(c));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].cell.variant, "dap_sender");
  const fs::path exp = ExperimentDir(c);
  const std::string csv = Slurp(exp / "report.csv");
  const std::string md = Slurp(exp / "report.md");
  RunReport(ExperimentDir(c));
  EXPECT_EQ(Slurp(exp / "report.csv"), csv);
  EXPECT_EQ(Slurp(exp / "report.md"), md);
  EXPECT_TRUE(fs::exists(exp / "curves" / (c.Hash() + ".svg")));
}

TEST(Pipeline, InterruptedSweepResumesToSameResult) {
  ExperimentConfig c = SmallPipeline("pipeline_resume");
  RunSweep(c, 1);
  const fs::path dir = SweepDir(c);
  RunEvaluate(c);
  const std::string aggregate = Slurp(dir / "aggregate.csv");
  const std::string metrics = Slurp(dir / "metrics.jsonl");

  // Keep one finished cell plus a torn record of the next.
  std::istringstream lines(metrics);
  std::string l1, l2, l3;
  std::getline(lines, l1);
  std::getline(lines, l2);
  std::getline(lines, l3);
  std::ofstream(dir / "metrics.jsonl", std::ios::trunc)
      << l1 << '\n' << l2 << '\n' << l3 << '\n';
  const SweepSummary resumed = RunSweep(c, 1);
  EXPECT_EQ(resumed.cells_skipped, 1u);
  EXPECT_EQ(resumed.cells_run, 3u);
  RunEvaluate(c);
  EXPECT_EQ(Slurp(dir / "aggregate.csv"), aggregate);
}

TEST(Pipeline, BaseVariantSkipsPretraining) {
  const ExperimentConfig c = SmallPipeline("pipeline_base");
  EXPECT_TRUE(RunPretrain(c).skipped);
}

TEST(Pipeline, MissingCorpusIsMissingArtifact) {
  ExperimentConfig c = SmallPipeline("pipeline_nocorpus");
  c.dataset_paths.corpus = "/nonexistent/corpus.jsonl";
  try {
    RunSweep(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingArtifact);
  }
}

TEST(RunIngest, SingleCsvFile) {
  const fs::path out = ScratchDir("ingest_single") / "out.jsonl";
  const IngestReport r =
      RunIngest(FixturePath("gosuai_three_matches.csv"), IngestFormat::kAuto,
                out.string());
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.matches, 3u);
  std::ifstream in(out);
  EXPECT_EQ(ParseMatches(in).size(), 3u);
}

TEST(RunIngest, ErrorsAreCollectedAndNothingWritten) {
  const fs::path dir = ScratchDir("ingest_errors");
  fs::copy_file(FixturePath("two_matches.jsonl"), dir / "a.jsonl");
  fs::copy_file(FixturePath("corrupt.jsonl"), dir / "b.jsonl");
  const fs::path out = ScratchDir("ingest_errors_out") / "out.jsonl";
  const IngestReport r = RunIngest(dir.string(), IngestFormat::kAuto,
                                   out.string());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_NE(r.errors[0].find("b.jsonl"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

}  // namespace
}  // namespace toxctx
