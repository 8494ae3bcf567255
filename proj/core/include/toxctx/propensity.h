#ifndef TOXCTX_PROPENSITY_H_
#define TOXCTX_PROPENSITY_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "toxctx/context.h"
#include "toxctx/data_model.h"
#include "toxctx/metrics.h"
#include "toxctx/training.h"

namespace toxctx {

struct PropensityRecord {
  std::string player_key;
  std::string period_id;
  std::size_t n_scored_messages = 0;
  double propensity = 0.0;  // in [0, 1]

  friend bool operator==(const PropensityRecord&,
                         const PropensityRecord&) = default;
};

struct PropensityOptions {
  AssemblyOptions assembly;
  // A scored message counts as toxic iff its probability exceeds this.
  double decision_threshold = 0.5;
  // Average raw probabilities instead of hard labels.
  bool use_probabilities = false;
  std::size_t workers = 1;
};

// (match position, message index) of every message that would be scored
// for the player in the period: unlabeled messages only.
std::vector<std::pair<std::size_t, int>> ScoredMessages(
    const std::vector<Match>& matches, const std::string& player_key,
    const std::string& period_id);

// Mean predicted label of the player's unlabeled messages in the period.
// Throws Error(kCoverage) when there are none and Error(kPhase) for a
// checkpoint that is not finetuned.
PropensityRecord ScorePlayerPropensity(const Checkpoint& checkpoint,
                                       const std::vector<Match>& matches,
                                       const std::string& player_key,
                                       const std::string& period_id,
                                       const PropensityOptions& options);

// One record per (player_key, period_id) with at least one unlabeled
// message, sorted by that key.
std::vector<PropensityRecord> ScoreAllPropensities(
    const Checkpoint& checkpoint, const std::vector<Match>& matches,
    const PropensityOptions& options);

// A player's propensity with the gold labels of their messages.
struct PlayerEvidence {
  PropensityRecord record;
  std::vector<int> labels;
};

// Every message of a player is called toxic iff propensity > threshold.
// On one scalar feature any linear classifier is such a threshold, so the
// fit scans the midpoints between distinct propensities (plus one point
// below all of them) for the best message-level balanced accuracy. Ties go
// to the lowest threshold.
struct ThresholdModel {
  double threshold = 0.5;
  double training_balanced_accuracy = 0.5;
  // All propensities equal: no threshold separates anything.
  bool degenerate = false;
};

// Throws Error(kDegenerateClass) unless both message classes occur.
ThresholdModel FitThreshold(const std::vector<PlayerEvidence>& evidence);

struct PropensityEvaluation {
  ConfusionCounts counts;
  double balanced_accuracy = 0.0;
};

// Labels each labeled test message by its sender's thresholded propensity
// for the match's period. Throws Error(kValidation) when a test player is
// among `training_players`, and Error(kCoverage) listing test players that
// have no record.
PropensityEvaluation EvaluatePropensity(
    const ThresholdModel& model, const std::vector<Match>& test_matches,
    const std::vector<PropensityRecord>& records,
    const std::set<std::string>& training_players);

// Gold evidence for the players of `matches`, using `records` for their
// propensities. Players without a record are skipped.
std::vector<PlayerEvidence> CollectEvidence(
    const std::vector<Match>& matches,
    const std::vector<PropensityRecord>& records);

// Player keys of labeled messages.
std::set<std::string> LabeledPlayers(const std::vector<Match>& matches);

struct PlayerSplit {
  std::vector<std::string> train_matches;
  std::vector<std::string> test_matches;
};

// Splits labeled matches so that no player appears on both sides. Players
// linked by a shared match form one group; whole groups are assigned, in a
// seeded random order, to the test side until it holds at least
// `test_fraction` of the matches. Throws Error(kSizing) when the matches
// form a single group.
PlayerSplit SplitByPlayers(const std::vector<Match>& matches,
                           double test_fraction, std::uint64_t seed);

// One JSON object per line: player_key, period_id, n_scored_messages,
// propensity.
void WritePropensityTable(std::ostream& out,
                          const std::vector<PropensityRecord>& records);
std::vector<PropensityRecord> ReadPropensityTable(std::istream& in);

}  // namespace toxctx

#endif  // TOXCTX_PROPENSITY_H_
