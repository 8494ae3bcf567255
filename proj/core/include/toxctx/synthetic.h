#ifndef TOXCTX_SYNTHETIC_H_
#define TOXCTX_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "toxctx/data_model.h"

namespace toxctx {

// Parameters of the synthetic chat generator.
//
// Two toxicity mechanisms are planted. A marker word makes a message toxic on
// its own. A target word makes a message toxic only when the same sender used
// a trigger word in an earlier message of the match; such messages are
// flagged context dependent. Target words also appear in benign messages from
// senders who have not used a trigger, so the word alone is ambiguous.
struct SyntheticConfig {
  std::size_t n_matches = 100;
  int n_teams = 2;
  int players_per_team = 5;
  std::size_t min_messages = 10;
  std::size_t max_messages = 20;
  std::size_t min_words = 2;
  std::size_t max_words = 6;
  std::size_t filler_vocab_size = 120;

  double toxicity_rate = 0.1;
  double context_dependent_fraction = 0.5;
  // Probability that a benign message carries a trigger word.
  double trigger_rate = 0.15;
  // Probability that a benign message from a sender without an earlier
  // trigger carries a target word.
  double benign_target_rate = 0.1;

  std::vector<std::string> markers = {"trash", "uninstall", "idiot"};
  std::vector<std::string> triggers = {"report", "feeding", "afk"};
  std::vector<std::string> targets = {"again", "typical", "sure"};

  // Player identities that persist across matches. Every match draws its
  // players from one community, so whole communities can be held out.
  std::size_t player_pool_size = 200;
  std::size_t n_communities = 10;
  // Share of players who are toxicity prone, and the share of toxic
  // messages they author when present in a match.
  double prone_player_fraction = 0.0;
  double prone_toxicity_share = 0.8;

  std::size_t n_periods = 1;
  // Fraction of matches that keep their labels.
  double labeled_fraction = 1.0;
  Game game = Game::kSynthetic;

  // Throws Error(kConfig) on out-of-range fractions or inconsistent sizes.
  void Validate() const;
};

// Reads a JSON object whose keys are the field names above; missing keys
// keep their defaults, unknown keys throw Error(kConfig).
SyntheticConfig ParseSyntheticConfig(std::string_view json_text);
std::string SyntheticConfigToJson(const SyntheticConfig& config);

std::vector<Match> GenerateSyntheticCorpus(const SyntheticConfig& config,
                                           std::uint64_t seed);

// The generator's two labeling rules, for re-checking its output.
bool ContextFreeToxic(std::string_view text, const SyntheticConfig& config);
bool ContextualToxic(const Match& match, int index,
                     const SyntheticConfig& config);

// Player keys the generator marks as toxicity prone.
std::vector<std::string> PronePlayerKeys(const SyntheticConfig& config,
                                         std::uint64_t seed);

}  // namespace toxctx

#endif  // TOXCTX_SYNTHETIC_H_
