#ifndef TOXCTX_DATA_MODEL_H_
#define TOXCTX_DATA_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace toxctx {

enum class Game { kDota2, kMwiii, kSynthetic };

std::string_view GameName(Game game);
Game ParseGame(std::string_view name);

inline constexpr int kNonToxic = 0;
inline constexpr int kToxic = 1;

struct ChatMessage {
  int index = 0;                 // ordinal within the match, 0-based
  std::optional<double> time_s;  // seconds since match start
  int player = 0;                // raw player slot
  int team = 0;                  // raw team id
  std::string text;
  std::optional<int> label;      // kToxic / kNonToxic
  std::optional<bool> context_dependent;
  // Pseudonymous identity that is stable across matches. Optional in the
  // interchange format; required by weekly filtering and propensity scoring.
  std::optional<std::string> player_key;

  bool is_toxic() const { return label.has_value() && *label == kToxic; }

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct Match {
  std::string match_id;
  Game game = Game::kSynthetic;
  std::optional<std::string> period_id;
  std::vector<ChatMessage> messages;

  // True iff every message carries a label.
  bool labeled() const;

  friend bool operator==(const Match&, const Match&) = default;
};

// Checks every Match invariant; throws Error(kValidation) naming the problem.
void ValidateMatch(const Match& match);

// Reads one JSON match record per line. Blank lines are skipped. Messages are
// sorted by index before validation. Throws ParseError with the 1-based line
// number for malformed or invalid records, and Error(kValidation) for
// duplicate match ids.
std::vector<Match> ParseMatches(std::istream& in);
std::vector<Match> ReadMatchesFile(const std::string& path);

// One line, no trailing newline. Keys follow the interchange format.
std::string SerializeMatch(const Match& match);
void WriteMatches(std::ostream& out, const std::vector<Match>& matches);
void WriteMatchesFile(const std::string& path,
                      const std::vector<Match>& matches);

// Thresholds used to select the MWIII annotation pool. Zero disables a rule.
struct MatchFilter {
  std::size_t min_match_msgs = 0;
  std::size_t min_player_msgs = 0;
  std::size_t min_weekly_msgs = 0;
};

// Keeps matches where the match has enough messages, every sender sent
// enough messages in it, and every sender sent enough messages across the
// retained matches of the same period. The weekly rule is applied to a fixed
// point, so filtering twice is a no-op.
std::vector<Match> FilterMatchesMwiiiStyle(const std::vector<Match>& matches,
                                           const MatchFilter& filter);

struct DatasetSplit {
  std::vector<std::string> train_matches;
  std::vector<std::string> test_matches;
  std::vector<std::string> unused_matches;

  // Stable identifier of the split, used in run manifests.
  std::string Hash() const;
};

// Whole-match split. Matches are ordered by id and shuffled with `seed`, so
// the result does not depend on input order.
DatasetSplit SplitDataset(const std::vector<Match>& matches,
                          std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed);

// Returns the matches whose id is listed, in list order.
std::vector<Match> SelectMatches(const std::vector<Match>& matches,
                                 const std::vector<std::string>& ids);

struct CorpusStats {
  std::size_t n_matches = 0;
  std::size_t n_messages = 0;
  std::size_t n_words = 0;
  std::size_t n_labeled = 0;
  std::size_t n_toxic = 0;
  std::size_t n_context_dependent = 0;
  // Over labeled messages; empty when nothing is labeled.
  std::optional<double> toxicity_rate;
  // Over toxic messages; empty when there are none.
  std::optional<double> context_dependent_fraction;
};

CorpusStats ComputeCorpusStats(const std::vector<Match>& matches);

std::size_t CountWords(std::string_view text);
std::string_view Trim(std::string_view text);

}  // namespace toxctx

#endif  // TOXCTX_DATA_MODEL_H_
