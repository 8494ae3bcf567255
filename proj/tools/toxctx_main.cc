// toxctx: command line front end for corpus preparation, pretraining,
// finetuning sweeps, propensity scoring and reporting.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "toxctx/data_model.h"
#include "toxctx/error.h"
#include "toxctx/experiment.h"
#include "toxctx/synthetic.h"
#include "toxctx/version.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

int ExitCodeFor(toxctx::ErrorKind kind) {
  switch (kind) {
    case toxctx::ErrorKind::kConfig:
      return kExitUsage;
    case toxctx::ErrorKind::kInternal:
      return kExitInternal;
    default:
      return kExitData;
  }
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw toxctx::Error(toxctx::ErrorKind::kConfig,
                        "cannot read config file " + path);
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Flags that override keys of the experiment config document.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> experiment_id;
  std::optional<std::string> output_dir;
  std::optional<std::string> corpus;
  std::optional<std::string> pretrain_corpus;
  std::optional<std::string> unlabeled;
  std::optional<std::string> context_level;
  std::optional<std::string> separator_scheme;
  std::optional<std::string> variant;
  std::vector<double> lr_grid;
  std::optional<int> epochs;
  std::optional<std::size_t> n_runs;
  std::optional<std::size_t> token_budget;
  std::optional<std::uint64_t> seed;
  std::optional<int> pretrain_epochs;

  void Register(CLI::App* app) {
    app->add_option("-c,--config", config_path, "experiment config (JSON)");
    app->add_option("--experiment-id", experiment_id);
    app->add_option("--output-dir", output_dir);
    app->add_option("--corpus", corpus, "labeled corpus");
    app->add_option("--pretrain-corpus", pretrain_corpus);
    app->add_option("--unlabeled", unlabeled, "corpus scored for propensity");
    app->add_option("--context-level", context_level,
                    "none, current_player or all_players");
    app->add_option("--separator-scheme", separator_scheme,
                    "period, neutral_sep or sender_tokens");
    app->add_option("--variant", variant, "base, dap, dap_sep or dap_sender");
    app->add_option("--lr-grid", lr_grid, "learning rates")->delimiter(',');
    app->add_option("--epochs", epochs);
    app->add_option("--n-runs", n_runs);
    app->add_option("--token-budget", token_budget);
    app->add_option("--seed", seed);
    app->add_option("--pretrain-epochs", pretrain_epochs);
  }

  toxctx::ExperimentConfig Load() const {
    json doc = json::object();
    if (!config_path.empty()) {
      try {
        doc = json::parse(Slurp(config_path));
      } catch (const json::parse_error& e) {
        throw toxctx::Error(toxctx::ErrorKind::kConfig,
                            config_path + ": " + e.what());
      }
      if (!doc.is_object()) {
        throw toxctx::Error(toxctx::ErrorKind::kConfig,
                            config_path + " is not a JSON object");
      }
    }
    auto set = [&](const char* key, const auto& value) {
      if (value) doc[key] = *value;
    };
    auto set_path = [&](const char* key, const auto& value) {
      if (value) doc["dataset_paths"][key] = *value;
    };
    set("experiment_id", experiment_id);
    set("output_dir", output_dir);
    set_path("corpus", corpus);
    set_path("pretrain_corpus", pretrain_corpus);
    set_path("unlabeled", unlabeled);
    set("context_level", context_level);
    set("separator_scheme", separator_scheme);
    set("pretrained_variant", variant);
    if (!lr_grid.empty()) doc["lr_grid"] = lr_grid;
    set("epochs", epochs);
    set("n_runs", n_runs);
    set("token_budget", token_budget);
    set("seed", seed);
    set("pretrain_epochs", pretrain_epochs);
    return toxctx::ParseExperimentConfig(doc.dump());
  }
};

std::size_t WorkerCount(std::optional<std::size_t> flag) {
  const char* deterministic = std::getenv("TOXCTX_DETERMINISTIC");
  if (deterministic && std::string(deterministic) != "0" &&
      std::string(deterministic) != "") {
    return 1;
  }
  if (flag) return std::max<std::size_t>(1, *flag);
  if (const char* env = std::getenv("TOXCTX_WORKERS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw toxctx::Error(toxctx::ErrorKind::kConfig,
                        std::string("TOXCTX_WORKERS must be a positive "
                                    "integer, got '") +
                            env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string Rate(const std::optional<double>& value) {
  if (!value) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *value);
  return buf;
}

int CmdIngest(const std::string& source, const std::string& format,
              const std::string& output) {
  if (fs::is_directory(source) && fs::is_empty(source)) {
    spdlog::warn("{} contains no files; writing an empty corpus", source);
  }
  const toxctx::IngestReport report =
      toxctx::RunIngest(source, toxctx::ParseIngestFormat(format), output);
  if (!report.errors.empty()) {
    for (const std::string& e : report.errors) std::cerr << e << '\n';
    std::cerr << report.errors.size() << " of " << report.files
              << " input files failed; nothing written\n";
    return kExitData;
  }
  std::cout << "files " << report.files << "\nmatches " << report.matches
            << "\nskipped_empty_messages " << report.skipped_empty
            << "\nwritten " << output << '\n';
  return kExitOk;
}

int CmdStats(const std::vector<std::string>& corpora,
             const std::string& json_out) {
  json all = json::array();
  std::cout << "corpus,matches,messages,words,labeled,toxic,toxicity_rate,"
               "context_dependent_fraction\n";
  for (const std::string& path : corpora) {
    const toxctx::CorpusStats s =
        toxctx::ComputeCorpusStats(toxctx::ReadMatchesFile(path));
    const bool labeled = s.n_labeled > 0;
    std::cout << path << ',' << s.n_matches << ',' << s.n_messages << ','
              << s.n_words << ','
              << (labeled ? std::to_string(s.n_labeled) : "n/a") << ','
              << (labeled ? std::to_string(s.n_toxic) : "n/a") << ','
              << Rate(s.toxicity_rate) << ','
              << Rate(s.context_dependent_fraction) << '\n';
    json row = {{"corpus", path},
                {"matches", s.n_matches},
                {"messages", s.n_messages},
                {"words", s.n_words}};
    row["labeled"] = labeled ? json(s.n_labeled) : json("n/a");
    row["toxic"] = labeled ? json(s.n_toxic) : json("n/a");
    row["toxicity_rate"] =
        s.toxicity_rate ? json(*s.toxicity_rate) : json("n/a");
    row["context_dependent_fraction"] =
        s.context_dependent_fraction ? json(*s.context_dependent_fraction)
                                     : json("n/a");
    all.push_back(row);
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) {
      throw toxctx::Error(toxctx::ErrorKind::kIo, "cannot write " + json_out);
    }
    out << all.dump(2) << '\n';
  }
  return kExitOk;
}

int CmdSynth(const std::string& config_path, std::uint64_t seed,
             std::optional<std::size_t> n_matches, const std::string& output,
             const std::string& unlabeled_output) {
  toxctx::SyntheticConfig config;
  if (!config_path.empty()) {
    config = toxctx::ParseSyntheticConfig(Slurp(config_path));
  }
  if (n_matches) config.n_matches = *n_matches;
  config.Validate();
  const std::vector<toxctx::Match> matches =
      toxctx::GenerateSyntheticCorpus(config, seed);
  std::vector<toxctx::Match> labeled;
  std::vector<toxctx::Match> unlabeled;
  for (const toxctx::Match& m : matches) {
    (m.labeled() || unlabeled_output.empty() ? labeled : unlabeled)
        .push_back(m);
  }
  for (const std::string& p : {output, unlabeled_output}) {
    if (!p.empty() && !fs::path(p).parent_path().empty()) {
      fs::create_directories(fs::path(p).parent_path());
    }
  }
  toxctx::WriteMatchesFile(output, labeled);
  std::cout << "wrote " << labeled.size() << " matches to " << output << '\n';
  if (!unlabeled_output.empty()) {
    toxctx::WriteMatchesFile(unlabeled_output, unlabeled);
    std::cout << "wrote " << unlabeled.size() << " unlabeled matches to "
              << unlabeled_output << '\n';
  }
  return kExitOk;
}

int CmdPretrain(const toxctx::ExperimentConfig& config) {
  const toxctx::PretrainSummary s = toxctx::RunPretrain(config);
  if (s.skipped) {
    std::cout << "variant base: nothing to pretrain\n";
    return kExitOk;
  }
  std::cout << "documents " << s.n_documents << '\n';
  for (std::size_t e = 0; e < s.epoch_losses.size(); ++e) {
    std::cout << "epoch " << e << " mlm_loss " << s.epoch_losses[e] << '\n';
  }
  std::cout << "checkpoint " << s.directory << '\n';
  return kExitOk;
}

int CmdSweep(const toxctx::ExperimentConfig& config, std::size_t workers) {
  if (config.pretrained_variant == toxctx::PretrainedVariant::kBase) {
    spdlog::info("variant base: starting from the untrained encoder");
  }
  const toxctx::SweepSummary s = toxctx::RunSweep(config, workers);
  std::cout << "cells_run " << s.cells_run << "\ncells_skipped "
            << s.cells_skipped << "\nsweep " << s.directory << '\n';
  return kExitOk;
}

int CmdEvaluate(const toxctx::ExperimentConfig& config) {
  const toxctx::AggregateRow best = toxctx::RunEvaluate(config);
  std::cout << "config_hash " << best.config_hash << "\nlr "
            << toxctx::FormatExact(best.lr) << "\nepoch " << best.epoch
            << "\nbalanced_accuracy_mean " << best.mean.balanced_accuracy
            << "\nbalanced_accuracy_std " << best.std.balanced_accuracy
            << '\n';
  return kExitOk;
}

int CmdPropensity(const toxctx::ExperimentConfig& config,
                  std::size_t workers) {
  const toxctx::PropensitySummary s = toxctx::RunPropensity(config, workers);
  std::cout << "records " << s.n_records << "\ntrain_players "
            << s.n_train_players << "\ntest_players " << s.n_test_players
            << "\nthreshold " << s.model.threshold
            << (s.model.degenerate ? " (degenerate)" : "")
            << "\ntest_balanced_accuracy " << s.evaluation.balanced_accuracy
            << "\noutput " << s.directory << '\n';
  return kExitOk;
}

int CmdReport(const std::string& dir) {
  const std::vector<toxctx::ReportRow> rows = toxctx::RunReport(dir);
  for (const toxctx::ReportRow& r : rows) {
    std::cout << r.cell.variant << ' ' << r.cell.context << " lr "
              << toxctx::FormatExact(r.best.lr) << " epoch " << r.best.epoch
              << " balanced_accuracy " << r.best.mean.balanced_accuracy
              << '\n';
  }
  std::cout << "report " << (fs::path(dir) / "report.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware toxicity experiments on game chat"};
  app.set_version_flag("--version", std::string(toxctx::kVersion));
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* ingest = app.add_subcommand("ingest", "import chat logs");
  std::string ingest_source, ingest_output, ingest_format = "auto";
  ingest->add_option("source", ingest_source, "file or directory")->required();
  ingest->add_option("-o,--output", ingest_output, "canonical corpus")
      ->required();
  ingest->add_option("-f,--format", ingest_format,
                     "auto, gosuai, opendota or canonical");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  std::vector<std::string> stats_corpora;
  std::string stats_json;
  stats->add_option("corpus", stats_corpora)->required();
  stats->add_option("--json", stats_json, "also write the rows as JSON");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_config, synth_output, synth_unlabeled;
  std::uint64_t synth_seed = 0;
  std::optional<std::size_t> synth_matches;
  synth->add_option("-c,--config", synth_config, "generator settings (JSON)");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--n-matches", synth_matches);
  synth->add_option("-o,--output", synth_output)->required();
  synth->add_option("--unlabeled-output", synth_unlabeled,
                    "write matches without labels here instead");

  ConfigFlags pretrain_flags, sweep_flags, evaluate_flags, propensity_flags,
      report_flags;
  std::optional<std::size_t> sweep_workers, propensity_workers;
  auto* pretrain = app.add_subcommand("pretrain", "domain-adaptive MLM");
  pretrain_flags.Register(pretrain);
  auto* sweep = app.add_subcommand("sweep", "finetune the lr x seed grid");
  sweep_flags.Register(sweep);
  sweep->add_option("-j,--workers", sweep_workers);
  auto* evaluate = app.add_subcommand("evaluate", "aggregate a sweep");
  evaluate_flags.Register(evaluate);
  auto* propensity =
      app.add_subcommand("propensity", "player propensity scoring");
  propensity_flags.Register(propensity);
  propensity->add_option("-j,--workers", propensity_workers);
  auto* report = app.add_subcommand("report", "tables and plots");
  std::string report_dir;
  report->add_option("run_dir", report_dir, "experiment directory");
  report_flags.Register(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*ingest) return CmdIngest(ingest_source, ingest_format, ingest_output);
    if (*stats) return CmdStats(stats_corpora, stats_json);
    if (*synth) {
      return CmdSynth(synth_config, synth_seed, synth_matches, synth_output,
                      synth_unlabeled);
    }
    if (*pretrain) return CmdPretrain(pretrain_flags.Load());
    if (*sweep) return CmdSweep(sweep_flags.Load(), WorkerCount(sweep_workers));
    if (*evaluate) return CmdEvaluate(evaluate_flags.Load());
    if (*propensity) {
      return CmdPropensity(propensity_flags.Load(),
                           WorkerCount(propensity_workers));
    }
    if (*report) {
      if (report_dir.empty()) {
        if (report_flags.config_path.empty()) {
          std::cerr << "report: give a run directory or --config\n";
          return kExitUsage;
        }
        report_dir = toxctx::ExperimentDir(report_flags.Load());
      }
      return CmdReport(report_dir);
    }
  } catch (const toxctx::Error& e) {
    std::cerr << "error (" << toxctx::ErrorKindName(e.kind())
              << "): " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
