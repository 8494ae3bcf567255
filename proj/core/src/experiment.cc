#include "toxctx/experiment.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "toxctx/aggregate.h"
#include "toxctx/error.h"
#include "toxctx/hashing.h"
#include "toxctx/rng.h"
#include "toxctx/training.h"
#include "toxctx/version.h"

namespace toxctx {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Reads fields out of a JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw Error(ErrorKind::kConfig, where_ + " must be a JSON object");
    }
  }

  template <typename T>
  void Get(const char* key, T* out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      *out = it->get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::kConfig,
                  where_ + "." + key + " has the wrong type");
    }
  }

  const json* Child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(ErrorKind::kConfig,
                    "unknown key '" + it.key() + "' in " + where_);
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void WriteFileAtomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorKind::kIo, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kMissingArtifact, "missing " + path.string());
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<Match> Labeled(const std::vector<Match>& matches) {
  std::vector<Match> out;
  for (const Match& m : matches) {
    if (m.labeled()) out.push_back(m);
  }
  return out;
}

std::vector<Match> ReadCorpus(const std::string& path, const char* role) {
  if (path.empty()) {
    throw Error(ErrorKind::kConfig,
                std::string("dataset_paths.") + role + " is not set");
  }
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kMissingArtifact,
                std::string(role) + " corpus not found: " + path);
  }
  return ReadMatchesFile(path);
}

AssemblyOptions AssemblyFor(const ExperimentConfig& c) {
  AssemblyOptions o;
  o.level = c.context_level;
  o.scheme = c.separator_scheme;
  o.token_budget = c.token_budget;
  o.max_teams = c.max_teams;
  o.max_players = c.max_players;
  return o;
}

ordered_json EncoderJson(const EncoderSettings& e) {
  return {{"d_model", e.model.d_model},
          {"n_layers", e.model.n_layers},
          {"n_heads", e.model.n_heads},
          {"d_ff", e.model.d_ff},
          {"max_len", e.model.max_len},
          {"init_std", e.model.init_std},
          {"vocab_min_count", e.vocab_min_count},
          {"vocab_max_size", e.vocab_max_size}};
}

ordered_json MaskingJson(const MaskingConfig& m) {
  return {{"select_prob", m.select_prob}, {"mask_frac", m.mask_frac},
          {"random_frac", m.random_frac}, {"keep_frac", m.keep_frac},
          {"seed", m.seed}};
}

// Base encoder shared by all variants of an experiment.
std::unique_ptr<TinyEncoder> BuildBaseEncoder(const ExperimentConfig& c) {
  return std::make_unique<TinyEncoder>(c.encoder.model,
                                       BuildExperimentVocabulary(c),
                                       DeriveSeed(c.seed, {0xba5e}));
}

Checkpoint StartCheckpoint(const ExperimentConfig& c) {
  if (c.pretrained_variant == PretrainedVariant::kBase) {
    std::unique_ptr<TinyEncoder> model = BuildBaseEncoder(c);
    EnsureSpecialTokens(*model, c.separator_scheme, c.max_teams,
                        c.max_players, DeriveSeed(c.seed, {0x70c}));
    return MakeBaseCheckpoint(std::move(model), {c.Hash(), c.seed, {}});
  }
  const std::string dir = PretrainDir(c);
  if (!fs::exists(fs::path(dir) / "encoder.json")) {
    throw Error(ErrorKind::kMissingArtifact,
                "pretrained encoder for variant '" +
                    std::string(VariantName(c.pretrained_variant)) +
                    "' not found at " + dir + "; run `toxctx pretrain` first");
  }
  std::unique_ptr<EncoderBackend> model = LoadBackend(dir);
  EnsureSpecialTokens(*model, c.separator_scheme, c.max_teams, c.max_players,
                      DeriveSeed(c.seed, {0x70c}));
  return MakeBaseCheckpoint(std::move(model), {c.Hash(), c.seed, {}});
}

struct MessageRef {
  std::string match_id;
  int index = 0;
};

void BuildExamples(const std::vector<Match>& matches,
                   const EncoderBackend& model, const AssemblyOptions& opts,
                   std::vector<LabeledExample>* examples,
                   std::vector<MessageRef>* refs) {
  for (const Match& match : matches) {
    for (const ChatMessage& msg : match.messages) {
      if (!msg.label) continue;
      const ContextualInput input =
          Assemble(match, msg.index, opts, model.token_counter());
      examples->push_back(
          {model.Encode(input.segments), *msg.label, msg.player_key});
      if (refs) refs->push_back({match.match_id, msg.index});
    }
  }
}

TrainConfig FinetuneSettings(const ExperimentConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  if (c.class_weight_mode == "uniform") t.class_weights = ClassWeights{1, 1};
  return t;
}

int ContextOrder(const std::string& name) {
  if (name == "none") return 0;
  if (name == "all_players") return 1;
  if (name == "current_player") return 2;
  return 3;
}

int VariantOrder(const std::string& name) {
  if (name == "base") return 0;
  if (name == "dap") return 1;
  if (name == "dap_sep") return 2;
  if (name == "dap_sender") return 3;
  return 4;
}

}  // namespace

std::string_view VariantName(PretrainedVariant variant) {
  switch (variant) {
    case PretrainedVariant::kBase: return "base";
    case PretrainedVariant::kDap: return "dap";
    case PretrainedVariant::kDapSep: return "dap_sep";
    case PretrainedVariant::kDapSender: return "dap_sender";
  }
  return "base";
}

PretrainedVariant ParseVariant(std::string_view name) {
  for (PretrainedVariant v :
       {PretrainedVariant::kBase, PretrainedVariant::kDap,
        PretrainedVariant::kDapSep, PretrainedVariant::kDapSender}) {
    if (VariantName(v) == name) return v;
  }
  throw Error(ErrorKind::kConfig,
              "unknown pretrained_variant '" + std::string(name) +
                  "' (base, dap, dap_sep, dap_sender)");
}

SeparatorScheme VariantScheme(PretrainedVariant variant) {
  switch (variant) {
    case PretrainedVariant::kDapSep: return SeparatorScheme::kNeutralSep;
    case PretrainedVariant::kDapSender: return SeparatorScheme::kSenderTokens;
    default: return SeparatorScheme::kPeriod;
  }
}

void ExperimentConfig::Validate() const {
  if (experiment_id.empty() ||
      experiment_id.find_first_of("/\\") != std::string::npos) {
    throw Error(ErrorKind::kConfig,
                "experiment_id must be a non-empty plain name");
  }
  if (pretrained_variant != PretrainedVariant::kBase &&
      VariantScheme(pretrained_variant) != separator_scheme) {
    throw Error(ErrorKind::kConfig,
                "pretrained_variant " +
                    std::string(VariantName(pretrained_variant)) +
                    " was pretrained with separator_scheme " +
                    std::string(SeparatorSchemeName(
                        VariantScheme(pretrained_variant))) +
                    ", not " +
                    std::string(SeparatorSchemeName(separator_scheme)));
  }
  if (lr_grid.empty()) throw Error(ErrorKind::kConfig, "lr_grid is empty");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw Error(ErrorKind::kConfig, "lr_grid must be > 0");
  }
  if (epochs < 0 || pretrain_epochs < 0) {
    throw Error(ErrorKind::kConfig, "epoch counts must be >= 0");
  }
  if (n_runs == 0 || batch_size == 0 || pretrain_batch_size == 0) {
    throw Error(ErrorKind::kConfig,
                "n_runs and batch sizes must be positive");
  }
  if (!(pretrain_lr > 0.0)) {
    throw Error(ErrorKind::kConfig, "pretrain_lr must be positive");
  }
  if (token_budget > static_cast<std::size_t>(encoder.model.max_len)) {
    throw Error(ErrorKind::kConfig,
                "token_budget exceeds encoder.max_len");
  }
  if (class_weight_mode != "distribution" && class_weight_mode != "uniform") {
    throw Error(ErrorKind::kConfig,
                "class_weight_mode must be 'distribution' or 'uniform'");
  }
  if (max_teams < 1 || max_players < 1) {
    throw Error(ErrorKind::kConfig, "max_teams and max_players must be >= 1");
  }
  if (!(propensity.test_fraction > 0.0 && propensity.test_fraction < 1.0)) {
    throw Error(ErrorKind::kConfig,
                "propensity.test_fraction must lie in (0, 1)");
  }
  masking.Validate();
}

std::string ExperimentConfig::PretrainHash() const {
  ordered_json j;
  j["variant"] = VariantName(pretrained_variant);
  j["dataset_paths"] = {{"corpus", dataset_paths.corpus},
                        {"pretrain_corpus", dataset_paths.pretrain_corpus},
                        {"unlabeled", dataset_paths.unlabeled}};
  j["token_budget"] = token_budget;
  j["masking"] = MaskingJson(masking);
  j["pretrain_epochs"] = pretrain_epochs;
  j["pretrain_lr"] = pretrain_lr;
  j["pretrain_batch_size"] = pretrain_batch_size;
  j["seed"] = seed;
  j["max_teams"] = max_teams;
  j["max_players"] = max_players;
  j["encoder"] = EncoderJson(encoder);
  return HexDigest(Fnv1a64(j.dump()));
}

std::string ExperimentConfig::Hash() const {
  ordered_json j;
  j["pretrain"] = pretrained_variant == PretrainedVariant::kBase
                      ? std::string("none")
                      : PretrainHash();
  j["variant"] = VariantName(pretrained_variant);
  j["dataset_paths"] = {{"corpus", dataset_paths.corpus},
                        {"pretrain_corpus", dataset_paths.pretrain_corpus},
                        {"unlabeled", dataset_paths.unlabeled}};
  j["split"] = {{"n_train", split.n_train},
                {"n_test", split.n_test},
                {"seed", split.seed}};
  j["context_level"] = ContextLevelName(context_level);
  j["separator_scheme"] = SeparatorSchemeName(separator_scheme);
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["token_budget"] = token_budget;
  j["class_weight_mode"] = class_weight_mode;
  j["seed"] = seed;
  j["max_teams"] = max_teams;
  j["max_players"] = max_players;
  j["encoder"] = EncoderJson(encoder);
  return HexDigest(Fnv1a64(j.dump()));
}

ExperimentConfig ParseExperimentConfig(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  StrictObject top(root, "config");
  top.Get("experiment_id", &c.experiment_id);
  if (const json* d = top.Child("dataset_paths")) {
    StrictObject o(*d, "dataset_paths");
    o.Get("corpus", &c.dataset_paths.corpus);
    o.Get("pretrain_corpus", &c.dataset_paths.pretrain_corpus);
    o.Get("unlabeled", &c.dataset_paths.unlabeled);
    o.Finish();
  }
  if (const json* s = top.Child("split")) {
    StrictObject o(*s, "split");
    o.Get("n_train", &c.split.n_train);
    o.Get("n_test", &c.split.n_test);
    o.Get("seed", &c.split.seed);
    o.Finish();
  }
  std::string level(ContextLevelName(c.context_level));
  std::string scheme;
  std::string variant(VariantName(c.pretrained_variant));
  top.Get("context_level", &level);
  top.Get("separator_scheme", &scheme);
  top.Get("pretrained_variant", &variant);
  c.context_level = ParseContextLevel(level);
  c.pretrained_variant = ParseVariant(variant);
  // A pretrained variant implies its scheme unless one is given.
  c.separator_scheme = scheme.empty() ? VariantScheme(c.pretrained_variant)
                                      : ParseSeparatorScheme(scheme);
  top.Get("lr_grid", &c.lr_grid);
  top.Get("epochs", &c.epochs);
  top.Get("n_runs", &c.n_runs);
  top.Get("batch_size", &c.batch_size);
  top.Get("token_budget", &c.token_budget);
  if (const json* m = top.Child("masking")) {
    StrictObject o(*m, "masking");
    o.Get("select_prob", &c.masking.select_prob);
    o.Get("mask_frac", &c.masking.mask_frac);
    o.Get("random_frac", &c.masking.random_frac);
    o.Get("keep_frac", &c.masking.keep_frac);
    o.Get("seed", &c.masking.seed);
    o.Finish();
  }
  top.Get("class_weight_mode", &c.class_weight_mode);
  top.Get("output_dir", &c.output_dir);
  top.Get("pretrain_epochs", &c.pretrain_epochs);
  top.Get("pretrain_lr", &c.pretrain_lr);
  top.Get("pretrain_batch_size", &c.pretrain_batch_size);
  top.Get("seed", &c.seed);
  top.Get("max_teams", &c.max_teams);
  top.Get("max_players", &c.max_players);
  if (const json* e = top.Child("encoder")) {
    StrictObject o(*e, "encoder");
    o.Get("d_model", &c.encoder.model.d_model);
    o.Get("n_layers", &c.encoder.model.n_layers);
    o.Get("n_heads", &c.encoder.model.n_heads);
    o.Get("d_ff", &c.encoder.model.d_ff);
    o.Get("max_len", &c.encoder.model.max_len);
    o.Get("init_std", &c.encoder.model.init_std);
    o.Get("vocab_min_count", &c.encoder.vocab_min_count);
    o.Get("vocab_max_size", &c.encoder.vocab_max_size);
    o.Finish();
  }
  if (const json* p = top.Child("propensity")) {
    StrictObject o(*p, "propensity");
    o.Get("test_fraction", &c.propensity.test_fraction);
    o.Get("decision_threshold", &c.propensity.decision_threshold);
    o.Get("use_probabilities", &c.propensity.use_probabilities);
    o.Get("lr", &c.propensity.lr);
    o.Get("epochs", &c.propensity.epochs);
    o.Finish();
  }
  top.Finish();
  c.Validate();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kConfig, "config file not found: " + path);
  }
  return ParseExperimentConfig(ReadFile(path));
}

std::string ExperimentConfigToJson(const ExperimentConfig& c) {
  ordered_json j;
  j["experiment_id"] = c.experiment_id;
  j["dataset_paths"] = {{"corpus", c.dataset_paths.corpus},
                        {"pretrain_corpus", c.dataset_paths.pretrain_corpus},
                        {"unlabeled", c.dataset_paths.unlabeled}};
  j["split"] = {{"n_train", c.split.n_train},
                {"n_test", c.split.n_test},
                {"seed", c.split.seed}};
  j["context_level"] = ContextLevelName(c.context_level);
  j["separator_scheme"] = SeparatorSchemeName(c.separator_scheme);
  j["pretrained_variant"] = VariantName(c.pretrained_variant);
  j["lr_grid"] = c.lr_grid;
  j["epochs"] = c.epochs;
  j["n_runs"] = c.n_runs;
  j["batch_size"] = c.batch_size;
  j["token_budget"] = c.token_budget;
  j["masking"] = MaskingJson(c.masking);
  j["class_weight_mode"] = c.class_weight_mode;
  j["output_dir"] = c.output_dir;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["pretrain_lr"] = c.pretrain_lr;
  j["pretrain_batch_size"] = c.pretrain_batch_size;
  j["seed"] = c.seed;
  j["max_teams"] = c.max_teams;
  j["max_players"] = c.max_players;
  j["encoder"] = EncoderJson(c.encoder);
  j["propensity"] = {{"test_fraction", c.propensity.test_fraction},
                     {"decision_threshold", c.propensity.decision_threshold},
                     {"use_probabilities", c.propensity.use_probabilities},
                     {"lr", c.propensity.lr},
                     {"epochs", c.propensity.epochs}};
  return j.dump(2);
}

std::string ExperimentDir(const ExperimentConfig& c) {
  return (fs::path(c.output_dir) / c.experiment_id).string();
}

std::string PretrainDir(const ExperimentConfig& c) {
  return (fs::path(ExperimentDir(c)) / "pretrain" /
          (std::string(VariantName(c.pretrained_variant)) + "-" +
           c.PretrainHash()))
      .string();
}

std::string SweepDir(const ExperimentConfig& c) {
  return (fs::path(ExperimentDir(c)) / c.Hash()).string();
}

Vocabulary BuildExperimentVocabulary(const ExperimentConfig& c) {
  std::vector<std::string> texts;
  std::set<std::string> paths = {c.dataset_paths.corpus,
                                 c.dataset_paths.pretrain_corpus,
                                 c.dataset_paths.unlabeled};
  paths.erase("");
  for (const std::string& path : paths) {
    if (!fs::exists(path)) continue;
    for (const Match& m : ReadMatchesFile(path)) {
      for (const ChatMessage& msg : m.messages) texts.push_back(msg.text);
    }
  }
  return Vocabulary::Build(texts, WordTokenizer(), c.encoder.vocab_min_count,
                           c.encoder.vocab_max_size);
}

IngestFormat ParseIngestFormat(std::string_view name) {
  if (name == "auto") return IngestFormat::kAuto;
  if (name == "gosuai") return IngestFormat::kGosuai;
  if (name == "opendota") return IngestFormat::kOpenDota;
  if (name == "canonical") return IngestFormat::kCanonical;
  throw Error(ErrorKind::kConfig,
              "unknown ingest format '" + std::string(name) +
                  "' (auto, gosuai, opendota, canonical)");
}

IngestReport RunIngest(const std::string& source, IngestFormat format,
                       const std::string& output) {
  if (!fs::exists(source)) {
    throw Error(ErrorKind::kIo, "source not found: " + source);
  }
  std::vector<fs::path> files;
  if (fs::is_directory(source)) {
    for (const auto& entry : fs::directory_iterator(source)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(source);
  }

  IngestReport report;
  std::map<std::string, Match> merged;
  for (const fs::path& file : files) {
    ++report.files;
    try {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw Error(ErrorKind::kIo, "cannot open");
      IngestFormat f = format;
      if (f == IngestFormat::kAuto) {
        const std::string ext = file.extension().string();
        if (ext == ".jsonl" || ext == ".json") {
          f = IngestFormat::kCanonical;
        } else {
          std::string header;
          std::getline(in, header);
          f = DetectDotaCsvFormat(header) == DotaCsvFormat::kGosuai
                  ? IngestFormat::kGosuai
                  : IngestFormat::kOpenDota;
          in.clear();
          in.seekg(0);
        }
      }
      std::vector<Match> matches;
      if (f == IngestFormat::kCanonical) {
        matches = ParseMatches(in);
      } else {
        ImportSummary s;
        matches = ImportDotaCsv(in,
                                f == IngestFormat::kGosuai
                                    ? DotaCsvFormat::kGosuai
                                    : DotaCsvFormat::kOpenDota,
                                &s);
        report.skipped_empty += s.skipped_empty;
      }
      for (Match& m : matches) {
        std::string id = m.match_id;
        if (!merged.emplace(id, std::move(m)).second) {
          throw Error(ErrorKind::kValidation,
                      "duplicate match_id " + id + " across inputs");
        }
      }
    } catch (const Error& e) {
      report.errors.push_back(file.string() + ": " + e.what());
    }
  }
  if (!report.errors.empty()) return report;
  std::vector<Match> all;
  all.reserve(merged.size());
  for (auto& [id, m] : merged) all.push_back(std::move(m));
  report.matches = all.size();
  if (!fs::path(output).parent_path().empty()) {
    fs::create_directories(fs::path(output).parent_path());
  }
  WriteMatchesFile(output, all);
  return report;
}

PretrainSummary RunPretrain(const ExperimentConfig& c) {
  c.Validate();
  PretrainSummary summary;
  summary.directory = PretrainDir(c);
  if (c.pretrained_variant == PretrainedVariant::kBase) {
    summary.skipped = true;
    return summary;
  }
  const std::string& corpus_path = c.dataset_paths.pretrain_corpus.empty()
                                       ? c.dataset_paths.corpus
                                       : c.dataset_paths.pretrain_corpus;
  const std::vector<Match> matches = ReadCorpus(corpus_path, "pretrain_corpus");

  std::unique_ptr<TinyEncoder> model = BuildBaseEncoder(c);
  const SeparatorScheme scheme = VariantScheme(c.pretrained_variant);
  EnsureSpecialTokens(*model, scheme, c.max_teams, c.max_players,
                      DeriveSeed(c.seed, {0x70c}));
  MlmCorpusOptions opts;
  opts.scheme = scheme;
  opts.token_budget = c.token_budget;
  opts.max_teams = c.max_teams;
  opts.max_players = c.max_players;
  std::vector<std::vector<int>> docs;
  std::vector<EncodedDocument> encoded;
  for (const MlmDocument& d :
       BuildMlmCorpus(matches, opts, model->token_counter())) {
    docs.push_back(model->Encode(d.segments));
    encoded.push_back({d.match_id, docs.back()});
  }
  summary.n_documents = docs.size();

  TrainConfig t;
  t.learning_rate = c.pretrain_lr;
  t.epochs = c.pretrain_epochs;
  t.batch_size = c.pretrain_batch_size;
  t.seed = DeriveSeed(c.seed, {0xda9});
  MaskingConfig masking = c.masking;
  const PretrainResult result =
      PretrainDap(MakeBaseCheckpoint(std::move(model)), docs, t, masking);
  summary.epoch_losses = result.epoch_losses;

  const fs::path dir = summary.directory;
  fs::create_directories(dir);
  result.checkpoint.model->Save(dir.string());
  {
    std::ostringstream os;
    WriteEncodedCorpus(os, encoded);
    WriteFileAtomic(dir / "corpus.txt", os.str());
  }
  std::ostringstream loss;
  loss << "epoch,mlm_loss\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    loss << e << ',' << FormatExact(result.epoch_losses[e]) << '\n';
  }
  WriteFileAtomic(dir / "loss.csv", loss.str());
  ordered_json manifest;
  manifest["kind"] = "pretrain";
  manifest["variant"] = VariantName(c.pretrained_variant);
  manifest["pretrain_hash"] = c.PretrainHash();
  manifest["separator_scheme"] = SeparatorSchemeName(scheme);
  manifest["n_documents"] = docs.size();
  manifest["seed"] = t.seed;
  manifest["code_version"] = kVersion;
  manifest["config"] = json::parse(ExperimentConfigToJson(c));
  WriteFileAtomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

SweepSummary RunSweep(const ExperimentConfig& c, std::size_t workers) {
  c.Validate();
  SweepSummary summary;
  summary.directory = SweepDir(c);
  const fs::path dir = summary.directory;

  const Checkpoint start = StartCheckpoint(c);
  const std::vector<Match> labeled =
      Labeled(ReadCorpus(c.dataset_paths.corpus, "corpus"));
  const DatasetSplit split =
      SplitDataset(labeled, c.split.n_train, c.split.n_test, c.split.seed);
  const AssemblyOptions opts = AssemblyFor(c);

  std::vector<LabeledExample> train;
  BuildExamples(SelectMatches(labeled, split.train_matches), *start.model,
                opts, &train, nullptr);
  std::vector<LabeledExample> test_examples;
  std::vector<MessageRef> test_refs;
  BuildExamples(SelectMatches(labeled, split.test_matches), *start.model, opts,
                &test_examples, &test_refs);
  EvalSet test;
  for (LabeledExample& ex : test_examples) {
    test.inputs.push_back(std::move(ex.ids));
    test.labels.push_back(ex.label);
  }

  RepeatedConfig rc;
  rc.config_hash = c.Hash();
  rc.lr_grid = c.lr_grid;
  rc.n_runs = c.n_runs;
  rc.base_seed = c.seed;
  rc.train = FinetuneSettings(c);
  rc.workers = workers;
  const std::vector<RunCell> cells = PlanCells(rc);

  // Keep only complete cells from an earlier, possibly interrupted, sweep.
  const fs::path metrics_path = dir / "metrics.jsonl";
  std::set<std::string> done;
  std::vector<RunMetrics> kept;
  if (fs::exists(metrics_path)) {
    const std::vector<RunMetrics> previous =
        ReadRunMetricsFile(metrics_path.string());
    std::map<std::string, std::size_t> counts;
    for (const RunMetrics& r : previous) ++counts[r.run_id];
    for (const auto& [id, n] : counts) {
      if (n == static_cast<std::size_t>(c.epochs)) done.insert(id);
    }
    for (const RunMetrics& r : previous) {
      if (done.count(r.run_id)) kept.push_back(r);
    }
  }
  std::ostringstream rewritten;
  for (const RunMetrics& r : kept) AppendRunMetrics(rewritten, r);
  WriteFileAtomic(metrics_path, rewritten.str());

  ordered_json manifest;
  manifest["kind"] = "sweep";
  manifest["experiment_id"] = c.experiment_id;
  manifest["config_hash"] = c.Hash();
  manifest["variant"] = VariantName(c.pretrained_variant);
  manifest["context_level"] = ContextLevelName(c.context_level);
  manifest["separator_scheme"] = SeparatorSchemeName(c.separator_scheme);
  manifest["split_hash"] = split.Hash();
  manifest["n_train_messages"] = train.size();
  manifest["n_test_messages"] = test.labels.size();
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < c.n_runs; ++r) seeds.push_back(RunSeed(c.seed, r));
  manifest["seeds"] = seeds;
  manifest["code_version"] = kVersion;
  manifest["config"] = json::parse(ExperimentConfigToJson(c));
  auto write_manifest = [&] {
    manifest["completed_cells"] = done;
    WriteFileAtomic(dir / "manifest.json", manifest.dump(2) + "\n");
  };
  write_manifest();

  for (const RunCell& cell : cells) {
    if (done.count(cell.run_id)) ++summary.cells_skipped;
  }
  summary.cells_run = cells.size() - summary.cells_skipped;
  spdlog::info("sweep {}: {} cells to run, {} already complete",
               c.Hash(), summary.cells_run, summary.cells_skipped);

  std::ofstream metrics_out(metrics_path, std::ios::app);
  if (!metrics_out) {
    throw Error(ErrorKind::kIo, "cannot append to " + metrics_path.string());
  }
  RunRepeated(
      start, train, test, rc,
      [&](const std::vector<RunMetrics>& records) {
        for (const RunMetrics& r : records) AppendRunMetrics(metrics_out, r);
        metrics_out.flush();
        if (!records.empty()) done.insert(records.front().run_id);
        write_manifest();
      },
      done,
      [&](const RunCell& cell, int epoch, const std::vector<double>& probs) {
        std::ostringstream os;
        os << "match_id,index,label,probability\n";
        for (std::size_t i = 0; i < probs.size(); ++i) {
          os << test_refs[i].match_id << ',' << test_refs[i].index << ','
             << test.labels[i] << ',' << FormatExact(probs[i]) << '\n';
        }
        WriteFileAtomic(dir / std::to_string(cell.seed) /
                            ("epoch_" + std::to_string(epoch)) /
                            ("predictions_lr" + FormatExact(cell.lr) + ".csv"),
                        os.str());
      });
  return summary;
}

AggregateRow RunEvaluate(const ExperimentConfig& c) {
  const fs::path dir = SweepDir(c);
  const fs::path metrics_path = dir / "metrics.jsonl";
  if (!fs::exists(metrics_path)) {
    throw Error(ErrorKind::kMissingArtifact,
                "no metrics log at " + metrics_path.string() +
                    "; run `toxctx sweep` first");
  }
  const std::vector<AggregateRow> agg =
      AggregateRunMetrics(ReadRunMetricsFile(metrics_path.string()));
  if (agg.empty()) {
    throw Error(ErrorKind::kMissingArtifact,
                "metrics log " + metrics_path.string() + " is empty");
  }
  std::ostringstream os;
  WriteAggregateCsv(os, agg);
  WriteFileAtomic(dir / "aggregate.csv", os.str());
  const AggregateRow best = SelectBest(agg);
  ordered_json sel;
  sel["config_hash"] = best.config_hash;
  sel["lr"] = best.lr;
  sel["epoch"] = best.epoch;
  sel["n_runs"] = best.n_runs;
  sel["balanced_accuracy_mean"] = best.mean.balanced_accuracy;
  sel["balanced_accuracy_std"] = best.std.balanced_accuracy;
  WriteFileAtomic(dir / "selection.json", sel.dump(2) + "\n");
  std::ostringstream curve_csv;
  WriteCurvesCsv(curve_csv, agg);
  WriteFileAtomic(dir / "curves.csv", curve_csv.str());
  std::ostringstream svg;
  WriteCurvesSvg(svg,
                 std::string(VariantName(c.pretrained_variant)) +
                     ", context " +
                     std::string(ContextLevelName(c.context_level)) +
                     ": epoch selection",
                 agg, best);
  WriteFileAtomic(dir / "curves.svg", svg.str());
  return best;
}

PropensitySummary RunPropensity(const ExperimentConfig& c,
                                std::size_t workers) {
  c.Validate();
  PropensitySummary summary;
  const fs::path dir = fs::path(ExperimentDir(c)) / "propensity" / c.Hash();
  summary.directory = dir.string();

  const std::vector<Match> labeled =
      Labeled(ReadCorpus(c.dataset_paths.corpus, "corpus"));
  const std::vector<Match> unlabeled =
      ReadCorpus(c.dataset_paths.unlabeled, "unlabeled");
  const PlayerSplit split =
      SplitByPlayers(labeled, c.propensity.test_fraction, c.split.seed);
  const std::vector<Match> train_matches =
      SelectMatches(labeled, split.train_matches);
  const std::vector<Match> test_matches =
      SelectMatches(labeled, split.test_matches);

  const Checkpoint start = StartCheckpoint(c);
  const AssemblyOptions opts = AssemblyFor(c);
  std::vector<LabeledExample> train;
  BuildExamples(train_matches, *start.model, opts, &train, nullptr);
  TrainConfig t = FinetuneSettings(c);
  t.learning_rate = c.propensity.lr > 0.0 ? c.propensity.lr : c.lr_grid.front();
  if (c.propensity.epochs > 0) t.epochs = c.propensity.epochs;
  if (t.epochs == 0) {
    throw Error(ErrorKind::kConfig, "propensity needs at least one epoch");
  }
  t.seed = RunSeed(c.seed, 0);
  const Checkpoint classifier = FinetuneClassifier(start, train, t).back();

  PropensityOptions popts;
  popts.assembly = opts;
  popts.decision_threshold = c.propensity.decision_threshold;
  popts.use_probabilities = c.propensity.use_probabilities;
  popts.workers = workers;
  const std::vector<PropensityRecord> records =
      ScoreAllPropensities(classifier, unlabeled, popts);
  summary.n_records = records.size();
  summary.model = FitThreshold(CollectEvidence(train_matches, records));
  summary.evaluation =
      EvaluatePropensity(summary.model, test_matches, records,
                         classifier.provenance.training_players);
  summary.n_train_players = classifier.provenance.training_players.size();
  const std::set<std::string> test_players = LabeledPlayers(test_matches);
  summary.n_test_players = test_players.size();
  std::size_t overlap = 0;
  for (const std::string& p : test_players) {
    overlap += classifier.provenance.training_players.count(p);
  }

  std::ostringstream table;
  WritePropensityTable(table, records);
  WriteFileAtomic(dir / "propensity.jsonl", table.str());
  ordered_json m;
  m["threshold"] = summary.model.threshold;
  m["degenerate"] = summary.model.degenerate;
  m["training_balanced_accuracy"] = summary.model.training_balanced_accuracy;
  m["test_balanced_accuracy"] = summary.evaluation.balanced_accuracy;
  m["test_counts"] = {{"tp", summary.evaluation.counts.tp},
                      {"fn", summary.evaluation.counts.fn},
                      {"tn", summary.evaluation.counts.tn},
                      {"fp", summary.evaluation.counts.fp}};
  m["n_train_players"] = summary.n_train_players;
  m["n_test_players"] = summary.n_test_players;
  m["player_overlap"] = overlap;
  m["train_matches"] = split.train_matches.size();
  m["test_matches"] = split.test_matches.size();
  WriteFileAtomic(dir / "propensity_metrics.json", m.dump(2) + "\n");
  return summary;
}

std::vector<ReportRow> RunReport(const std::string& experiment_dir) {
  if (!fs::is_directory(experiment_dir)) {
    throw Error(ErrorKind::kMissingArtifact,
                "no experiment directory at " + experiment_dir);
  }
  std::vector<fs::path> sweep_dirs;
  for (const auto& entry : fs::directory_iterator(experiment_dir)) {
    if (entry.is_directory() &&
        fs::exists(entry.path() / "manifest.json") &&
        fs::exists(entry.path() / "metrics.jsonl")) {
      sweep_dirs.push_back(entry.path());
    }
  }
  std::sort(sweep_dirs.begin(), sweep_dirs.end());
  std::vector<ReportCell> cells;
  std::vector<RunMetrics> records;
  for (const fs::path& d : sweep_dirs) {
    const json manifest = json::parse(ReadFile(d / "manifest.json"));
    if (manifest.value("kind", "") != "sweep") continue;
    cells.push_back({manifest.at("config_hash").get<std::string>(),
                     manifest.at("variant").get<std::string>(),
                     manifest.at("context_level").get<std::string>()});
    for (RunMetrics& r : ReadRunMetricsFile((d / "metrics.jsonl").string())) {
      records.push_back(std::move(r));
    }
  }
  if (cells.empty()) {
    throw Error(ErrorKind::kMissingArtifact,
                "no finished sweeps under " + experiment_dir);
  }
  std::sort(cells.begin(), cells.end(),
            [](const ReportCell& a, const ReportCell& b) {
              return std::make_tuple(ContextOrder(a.context),
                                     VariantOrder(a.variant), a.config_hash) <
                     std::make_tuple(ContextOrder(b.context),
                                     VariantOrder(b.variant), b.config_hash);
            });
  const std::vector<AggregateRow> agg = AggregateRunMetrics(records);
  const std::vector<ReportRow> rows = BuildReport(agg, cells);

  const fs::path dir = experiment_dir;
  std::ostringstream csv;
  WriteReportCsv(csv, rows);
  WriteFileAtomic(dir / "report.csv", csv.str());
  std::ostringstream md;
  WriteReportMarkdown(md,
                      "Experiment " + dir.filename().string(), rows);
  WriteFileAtomic(dir / "report.md", md.str());
  std::ostringstream agg_csv;
  WriteAggregateCsv(agg_csv, agg);
  WriteFileAtomic(dir / "aggregate.csv", agg_csv.str());
  for (const ReportRow& row : rows) {
    const std::vector<AggregateRow> mine =
        RowsForConfig(agg, row.cell.config_hash);
    std::ostringstream curve_csv;
    WriteCurvesCsv(curve_csv, mine);
    WriteFileAtomic(dir / "curves" / (row.cell.config_hash + ".csv"),
                    curve_csv.str());
    std::ostringstream svg;
    WriteCurvesSvg(svg,
                   row.cell.variant + ", context " + row.cell.context +
                       ": epoch selection",
                   mine, row.best);
    WriteFileAtomic(dir / "curves" / (row.cell.config_hash + ".svg"),
                    svg.str());
  }
  return rows;
}

}  // namespace toxctx
