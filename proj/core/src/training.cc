#include "toxctx/training.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "toxctx/error.h"
#include "toxctx/metrics.h"
#include "toxctx/rng.h"
#include "toxctx/schedule.h"

namespace toxctx {

namespace {

std::size_t StepsPerEpoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed,
                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(DeriveSeed(seed, {0xda7a, static_cast<std::uint64_t>(epoch)}));
  rng.Shuffle(order);
  return order;
}

}  // namespace

std::vector<double> ClassWeightsFromDistribution(
    const std::vector<std::size_t>& counts) {
  if (counts.empty()) {
    throw Error(ErrorKind::kDegenerateClass, "no classes given");
  }
  std::size_t total = 0;
  for (std::size_t c : counts) {
    if (c == 0) {
      throw Error(ErrorKind::kDegenerateClass,
                  "every class needs at least one example");
    }
    total += c;
  }
  std::vector<double> weights;
  weights.reserve(counts.size());
  const double k = static_cast<double>(counts.size());
  for (std::size_t c : counts) {
    weights.push_back(static_cast<double>(total) /
                      (k * static_cast<double>(c)));
  }
  return weights;
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorKind::kConfig, "learning_rate must be positive");
  }
  if (epochs < 0) throw Error(ErrorKind::kConfig, "epochs must be >= 0");
  if (batch_size == 0) {
    throw Error(ErrorKind::kConfig, "batch_size must be positive");
  }
  if (!(period_factor > 0.0)) {
    throw Error(ErrorKind::kConfig, "period_factor must be positive");
  }
  if (class_weights && !((*class_weights)[0] > 0.0 &&
                         (*class_weights)[1] > 0.0)) {
    throw Error(ErrorKind::kConfig, "class weights must be positive");
  }
}

std::string_view PhaseName(Phase phase) {
  return phase == Phase::kPretrained ? "pretrained" : "finetuned";
}

Checkpoint MakeBaseCheckpoint(std::unique_ptr<EncoderBackend> model,
                              Provenance provenance) {
  Checkpoint c;
  c.model = std::shared_ptr<const EncoderBackend>(std::move(model));
  c.phase = Phase::kPretrained;
  c.provenance = std::move(provenance);
  return c;
}

void EnsureSpecialTokens(EncoderBackend& model, SeparatorScheme scheme,
                         int max_teams, int max_players, std::uint64_t seed) {
  if (scheme == SeparatorScheme::kPeriod) return;
  std::vector<std::string> missing;
  for (const std::string& t : SpecialTokenVocabulary(max_teams, max_players)) {
    if (model.registry().FindAdded(t) < 0) missing.push_back(t);
  }
  model.ExtendVocabulary(missing, seed);
}

PretrainResult PretrainDap(const Checkpoint& start,
                           const std::vector<std::vector<int>>& corpus,
                           const TrainConfig& config,
                           const MaskingConfig& masking) {
  config.Validate();
  masking.Validate();
  if (corpus.empty()) {
    throw Error(ErrorKind::kConfig, "pretraining corpus is empty");
  }
  std::unique_ptr<EncoderBackend> model = start.model->Clone();
  model->ResetOptimizer(config.optimizer);

  PretrainResult result;
  const std::size_t steps_per_epoch =
      StepsPerEpoch(corpus.size(), config.batch_size);
  const std::size_t total = steps_per_epoch * config.epochs;
  const std::size_t period = static_cast<std::size_t>(
      std::llround(config.period_factor * static_cast<double>(total)));
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        EpochOrder(corpus.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<MaskedSequence> batch;
      const std::size_t end =
          std::min(order.size(), (b + 1) * config.batch_size);
      for (std::size_t k = b * config.batch_size; k < end; ++k) {
        MaskingConfig m = masking;
        m.seed = DeriveSeed(masking.seed,
                            {static_cast<std::uint64_t>(epoch), order[k]});
        batch.push_back(MaskSequence(corpus[order[k]], model->registry(), m));
      }
      const double lr = CosineLr(config.learning_rate, step, total, period);
      result.lr_trace.push_back(lr);
      loss_sum += model->MlmStep(batch, lr);
      ++step;
    }
    result.epoch_losses.push_back(loss_sum /
                                  static_cast<double>(steps_per_epoch));
  }
  result.checkpoint.model = std::shared_ptr<const EncoderBackend>(
      std::move(model));
  result.checkpoint.epoch = config.epochs - 1;
  result.checkpoint.phase = Phase::kPretrained;
  result.checkpoint.provenance = start.provenance;
  result.checkpoint.provenance.seed = config.seed;
  return result;
}

FinetuneResult FinetuneClassifier(const Checkpoint& start,
                                  const std::vector<LabeledExample>& train,
                                  const TrainConfig& config,
                                  const EpochCallback& on_epoch) {
  config.Validate();
  std::vector<std::size_t> counts(2, 0);
  for (const LabeledExample& ex : train) {
    if (ex.label != kToxic && ex.label != kNonToxic) {
      throw Error(ErrorKind::kInput, "training labels must be 0 or 1");
    }
    ++counts[static_cast<std::size_t>(ex.label)];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    throw Error(ErrorKind::kDegenerateClass,
                "finetuning needs both classes in the training set");
  }
  FinetuneResult result;
  if (config.class_weights) {
    result.class_weights = *config.class_weights;
  } else {
    const std::vector<double> w = ClassWeightsFromDistribution(counts);
    result.class_weights = {w[0], w[1]};
  }

  std::unique_ptr<EncoderBackend> model = start.model->Clone();
  model->ResetClassifierHead(DeriveSeed(config.seed, {0x4ead}));
  model->ResetOptimizer(config.optimizer);

  const std::size_t steps_per_epoch =
      StepsPerEpoch(train.size(), config.batch_size);
  const std::size_t total = steps_per_epoch * config.epochs;
  const std::size_t period = static_cast<std::size_t>(
      std::llround(config.period_factor * static_cast<double>(total)));
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        EpochOrder(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<std::vector<int>> batch;
      std::vector<int> labels;
      const std::size_t end =
          std::min(order.size(), (b + 1) * config.batch_size);
      for (std::size_t k = b * config.batch_size; k < end; ++k) {
        batch.push_back(train[order[k]].ids);
        labels.push_back(train[order[k]].label);
      }
      const double lr = CosineLr(config.learning_rate, step, total, period);
      result.lr_trace.push_back(lr);
      loss_sum += model->ClassifyStep(batch, labels, result.class_weights, lr);
      ++step;
    }
    result.epoch_losses.push_back(loss_sum /
                                  static_cast<double>(steps_per_epoch));
    if (on_epoch) on_epoch(epoch, *model);
  }
  return result;
}

std::vector<Checkpoint> FinetuneClassifier(
    const Checkpoint& start, const std::vector<LabeledExample>& train,
    const TrainConfig& config) {
  Provenance provenance = start.provenance;
  provenance.seed = config.seed;
  for (const LabeledExample& ex : train) {
    if (ex.player_key) provenance.training_players.insert(*ex.player_key);
  }
  std::vector<Checkpoint> out;
  FinetuneClassifier(start, train, config,
                     [&](int epoch, const EncoderBackend& model) {
                       Checkpoint c;
                       c.model = std::shared_ptr<const EncoderBackend>(
                           model.Clone());
                       c.epoch = epoch;
                       c.phase = Phase::kFinetuned;
                       c.provenance = provenance;
                       out.push_back(std::move(c));
                     });
  return out;
}

double Predict(const Checkpoint& checkpoint, const std::vector<int>& ids) {
  if (checkpoint.phase != Phase::kFinetuned) {
    throw Error(ErrorKind::kPhase,
                "prediction needs a finetuned checkpoint, got a " +
                    std::string(PhaseName(checkpoint.phase)) + " one");
  }
  return ToxicProbability(checkpoint.model->ClassifyLogits(ids));
}

std::uint64_t RunSeed(std::uint64_t base_seed, std::size_t run) {
  return DeriveSeed(base_seed, {0x5eed, run});
}

std::vector<RunCell> PlanCells(const RepeatedConfig& config) {
  std::vector<RunCell> cells;
  for (double lr : config.lr_grid) {
    for (std::size_t r = 0; r < config.n_runs; ++r) {
      RunCell cell;
      cell.lr = lr;
      cell.run = r;
      cell.seed = RunSeed(config.base_seed, r);
      char id[96];
      std::snprintf(id, sizeof(id), "%s-lr%s-r%zu",
                    config.config_hash.c_str(), FormatExact(lr).c_str(), r);
      cell.run_id = id;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void RunRepeated(const Checkpoint& start,
                 const std::vector<LabeledExample>& train, const EvalSet& test,
                 const RepeatedConfig& config,
                 const std::function<void(const std::vector<RunMetrics>&)>& sink,
                 const std::set<std::string>& skip,
                 const PredictionSink& on_predictions) {
  std::vector<RunCell> cells;
  for (RunCell& c : PlanCells(config)) {
    if (!skip.count(c.run_id)) cells.push_back(std::move(c));
  }
  std::mutex sink_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      const RunCell& cell = cells[i];
      TrainConfig tc = config.train;
      tc.learning_rate = cell.lr;
      tc.seed = cell.seed;
      std::vector<RunMetrics> records;
      try {
        FinetuneClassifier(
            start, train, tc, [&](int epoch, const EncoderBackend& model) {
              std::vector<double> probs;
              probs.reserve(test.inputs.size());
              for (const auto& ids : test.inputs) {
                probs.push_back(ToxicProbability(model.ClassifyLogits(ids)));
              }
              if (on_predictions) on_predictions(cell, epoch, probs);
              RunMetrics r;
              r.run_id = cell.run_id;
              r.config_hash = config.config_hash;
              r.seed = cell.seed;
              r.epoch = epoch;
              r.lr = cell.lr;
              r.values = EvaluateProbabilities(probs, test.labels);
              records.push_back(std::move(r));
            });
        // A cell's records are emitted together so a killed sweep never
        // leaves a half-written cell behind.
        std::lock_guard<std::mutex> lock(sink_mutex);
        sink(records);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min(config.workers, cells.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace toxctx
