#ifndef TOXCTX_TRAINING_H_
#define TOXCTX_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "toxctx/aggregate.h"
#include "toxctx/context.h"
#include "toxctx/encoder.h"
#include "toxctx/masking.h"
#include "toxctx/optimizer.h"

namespace toxctx {

// N / (K * n_c) for each class c. Throws Error(kDegenerateClass) on a zero
// count.
std::vector<double> ClassWeightsFromDistribution(
    const std::vector<std::size_t>& counts);

struct TrainConfig {
  double learning_rate = 2e-5;
  int epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  // Empty: derived from the training label distribution.
  std::optional<ClassWeights> class_weights;
  // Cosine period as a multiple of the total step count.
  double period_factor = 2.0;
  OptimizerConfig optimizer;

  // Throws Error(kConfig) for non-positive weights, batch size or rate.
  void Validate() const;
};

enum class Phase { kPretrained, kFinetuned };

std::string_view PhaseName(Phase phase);

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  // Player keys whose labeled messages were used for finetuning.
  std::set<std::string> training_players;
};

struct Checkpoint {
  std::shared_ptr<const EncoderBackend> model;
  // 0-based index of the last completed epoch of `phase`; -1 if none.
  int epoch = -1;
  Phase phase = Phase::kPretrained;
  Provenance provenance;
};

// Wraps a freshly built or loaded encoder as a pretrained-phase checkpoint.
Checkpoint MakeBaseCheckpoint(std::unique_ptr<EncoderBackend> model,
                              Provenance provenance = {});

// Adds the special tokens `scheme` needs that are not registered yet:
// nothing for kPeriod, [MSG] plus team and player tokens otherwise.
void EnsureSpecialTokens(EncoderBackend& model, SeparatorScheme scheme,
                         int max_teams, int max_players, std::uint64_t seed);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;  // mean MLM loss per epoch
  std::vector<double> lr_trace;      // learning rate used at every step
};

// Domain-adaptive masked language model training. Documents are shuffled
// every epoch; every document gets a fresh mask drawn from a seed derived
// from (masking.seed, epoch, document). Throws Error(kConfig) for an empty
// corpus.
PretrainResult PretrainDap(const Checkpoint& start,
                           const std::vector<std::vector<int>>& corpus,
                           const TrainConfig& config,
                           const MaskingConfig& masking);

struct LabeledExample {
  std::vector<int> ids;
  int label = 0;
  std::optional<std::string> player_key;
};

// Called after each finetuning epoch with the 0-based epoch index.
using EpochCallback = std::function<void(int, const EncoderBackend&)>;

struct FinetuneResult {
  std::vector<double> epoch_losses;
  std::vector<double> lr_trace;
  ClassWeights class_weights{};
};

// Cost-sensitive classifier training from a pretrained checkpoint. The head
// is reinitialized from the run seed, which also drives the data order.
// Throws Error(kDegenerateClass) unless both classes are present.
FinetuneResult FinetuneClassifier(const Checkpoint& start,
                                  const std::vector<LabeledExample>& train,
                                  const TrainConfig& config,
                                  const EpochCallback& on_epoch);

// Same, returning a snapshot per epoch.
std::vector<Checkpoint> FinetuneClassifier(
    const Checkpoint& start, const std::vector<LabeledExample>& train,
    const TrainConfig& config);

// Toxic-class probability. Throws Error(kPhase) for a checkpoint that was
// never finetuned.
double Predict(const Checkpoint& checkpoint, const std::vector<int>& ids);

struct EvalSet {
  std::vector<std::vector<int>> inputs;
  std::vector<int> labels;
};

struct RepeatedConfig {
  std::string config_hash;
  std::vector<double> lr_grid = {5e-6, 1e-5, 2e-5};
  std::size_t n_runs = 10;
  std::uint64_t base_seed = 0;
  TrainConfig train;  // learning_rate and seed are set per run
  std::size_t workers = 1;
};

struct RunCell {
  double lr = 0.0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string run_id;
};

// Seed of run r; identical across learning rates so runs are paired.
std::uint64_t RunSeed(std::uint64_t base_seed, std::size_t run);

std::vector<RunCell> PlanCells(const RepeatedConfig& config);

// Test-set probabilities of one cell after one epoch.
using PredictionSink =
    std::function<void(const RunCell&, int, const std::vector<double>&)>;

// Trains every (lr, run) cell on `train`, evaluates on `test` after every
// epoch and hands each finished cell's records to `sink` (serialized, never
// concurrently). Cells whose run_id is in `skip` are not run. Cells execute
// on up to `workers` threads; each owns its copy of the model.
// `on_predictions`, if set, runs on the worker thread of the cell.
void RunRepeated(const Checkpoint& start,
                 const std::vector<LabeledExample>& train, const EvalSet& test,
                 const RepeatedConfig& config,
                 const std::function<void(const std::vector<RunMetrics>&)>& sink,
                 const std::set<std::string>& skip = {},
                 const PredictionSink& on_predictions = nullptr);

}  // namespace toxctx

#endif  // TOXCTX_TRAINING_H_
