#ifndef TOXCTX_EXPERIMENT_H_
#define TOXCTX_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "toxctx/context.h"
#include "toxctx/data_model.h"
#include "toxctx/importers.h"
#include "toxctx/masking.h"
#include "toxctx/propensity.h"
#include "toxctx/report.h"
#include "toxctx/tiny_encoder.h"

namespace toxctx {

// Which encoder the classifier starts from.
//   kBase:      no domain-adaptive pretraining
//   kDap:       MLM on match text joined with "."
//   kDapSep:    MLM with the neutral [MSG] separator
//   kDapSender: MLM with sender tokens
enum class PretrainedVariant { kBase, kDap, kDapSep, kDapSender };

std::string_view VariantName(PretrainedVariant variant);
PretrainedVariant ParseVariant(std::string_view name);
// Scheme a pretrained variant was trained with; kBase has none and may be
// finetuned with any scheme.
SeparatorScheme VariantScheme(PretrainedVariant variant);

struct DatasetPaths {
  std::string corpus;           // labeled matches for finetuning and testing
  std::string pretrain_corpus;  // MLM text; empty means `corpus`
  std::string unlabeled;        // matches scored for propensity
};

struct SplitSettings {
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  std::uint64_t seed = 0;
};

struct EncoderSettings {
  TinyEncoderConfig model;
  std::size_t vocab_min_count = 1;
  std::size_t vocab_max_size = 0;
};

struct PropensitySettings {
  // Share of labeled matches held out (by whole player groups) for testing.
  double test_fraction = 0.5;
  double decision_threshold = 0.5;
  bool use_probabilities = false;
  // Finetuning of the scoring classifier; lr 0 means lr_grid.front().
  double lr = 0.0;
  int epochs = 0;  // 0 means `epochs`
};

// One experiment cell: a variant finetuned at one context level. Every key
// of the JSON document matches a field name here.
struct ExperimentConfig {
  std::string experiment_id = "default";
  DatasetPaths dataset_paths;
  SplitSettings split;
  ContextLevel context_level = ContextLevel::kNone;
  SeparatorScheme separator_scheme = SeparatorScheme::kPeriod;
  PretrainedVariant pretrained_variant = PretrainedVariant::kBase;
  std::vector<double> lr_grid = {5e-6, 1e-5, 2e-5};
  int epochs = 10;
  std::size_t n_runs = 10;
  std::size_t batch_size = 16;
  std::size_t token_budget = 128;  // at most encoder.model.max_len
  MaskingConfig masking;
  // "distribution" (N / (K n_c)) or "uniform" (all ones).
  std::string class_weight_mode = "distribution";
  std::string output_dir = "runs";
  int pretrain_epochs = 10;
  double pretrain_lr = 1e-4;
  std::size_t pretrain_batch_size = 16;
  std::uint64_t seed = 0;
  int max_teams = 2;
  int max_players = 5;
  EncoderSettings encoder;
  PropensitySettings propensity;

  // Throws Error(kConfig). Checks among others that a pretrained variant is
  // finetuned with the scheme it was pretrained with.
  void Validate() const;

  // Hash of everything that shapes a sweep's trained models, excluding the
  // lr grid, run count and output location.
  std::string Hash() const;
  // Hash of everything that shapes the pretrained encoder.
  std::string PretrainHash() const;
};

// Strict: unknown keys are configuration errors.
ExperimentConfig ParseExperimentConfig(std::string_view json_text);
ExperimentConfig LoadExperimentConfig(const std::string& path);
std::string ExperimentConfigToJson(const ExperimentConfig& config);

std::string ExperimentDir(const ExperimentConfig& config);
std::string PretrainDir(const ExperimentConfig& config);
std::string SweepDir(const ExperimentConfig& config);

// Vocabulary of the tiny encoder, built from every text the experiment
// reads so that all variants share token ids.
Vocabulary BuildExperimentVocabulary(const ExperimentConfig& config);

struct IngestReport {
  std::size_t files = 0;
  std::size_t matches = 0;
  std::size_t skipped_empty = 0;
  std::vector<std::string> errors;  // "<file>: <message>"
};

enum class IngestFormat { kAuto, kGosuai, kOpenDota, kCanonical };
IngestFormat ParseIngestFormat(std::string_view name);

// Imports one file or every regular file of a directory (sorted by name)
// and writes the canonical corpus; matches are merged in match_id order.
// Per-file failures are collected; nothing is written if any occurred.
IngestReport RunIngest(const std::string& source, IngestFormat format,
                       const std::string& output);

struct PretrainSummary {
  std::string directory;
  std::size_t n_documents = 0;
  std::vector<double> epoch_losses;
  bool skipped = false;  // base variant: nothing to pretrain
};

// Writes encoder checkpoint, loss curve and manifest under PretrainDir().
PretrainSummary RunPretrain(const ExperimentConfig& config);

struct SweepSummary {
  std::string directory;
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;  // already complete on disk
};

// Finetunes every (lr, run) cell, appending to metrics.jsonl and writing
// per-epoch test probabilities to <seed>/epoch_<n>/. Finished cells found on
// disk are not recomputed. Throws Error(kMissingArtifact) when a pretrained
// variant has not been pretrained.
SweepSummary RunSweep(const ExperimentConfig& config, std::size_t workers);

// Aggregates metrics.jsonl of the sweep into aggregate.csv and
// selection.json. Returns the selected row.
AggregateRow RunEvaluate(const ExperimentConfig& config);

struct PropensitySummary {
  std::string directory;
  ThresholdModel model;
  PropensityEvaluation evaluation;
  std::size_t n_records = 0;
  std::size_t n_train_players = 0;
  std::size_t n_test_players = 0;
};

PropensitySummary RunPropensity(const ExperimentConfig& config,
                                std::size_t workers);

// Collects every sweep under `experiment_dir` and writes report.csv,
// report.md and curves/<config_hash>.{csv,svg}. Output depends only on the
// files read.
std::vector<ReportRow> RunReport(const std::string& experiment_dir);

}  // namespace toxctx

#endif  // TOXCTX_EXPERIMENT_H_
