#ifndef TOXCTX_CONTEXT_H_
#define TOXCTX_CONTEXT_H_

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "toxctx/data_model.h"
#include "toxctx/tokenizer.h"

namespace toxctx {

// Which prior messages of the match accompany the evaluated message.
enum class ContextLevel { kNone, kCurrentPlayer, kAllPlayers };

// How consecutive messages are delimited in the model input.
//   kPeriod:       the literal "." between messages.
//   kNeutralSep:   the [MSG] special token between messages.
//   kSenderTokens: every message is prefixed with [TEAMt][PLAYERp] of its
//                  normalized sender; the prefixes double as separators.
enum class SeparatorScheme { kPeriod, kNeutralSep, kSenderTokens };

std::string_view ContextLevelName(ContextLevel level);
ContextLevel ParseContextLevel(std::string_view name);
std::string_view SeparatorSchemeName(SeparatorScheme scheme);
SeparatorScheme ParseSeparatorScheme(std::string_view name);

inline constexpr std::string_view kNeutralSeparator = "[MSG]";
inline constexpr std::string_view kPeriodSeparator = ".";

std::string TeamToken(int team);
std::string PlayerToken(int player);

// [MSG], [TEAM0]..[TEAM{max_teams-1}], [PLAYER0]..[PLAYER{max_players-1}].
std::vector<std::string> SpecialTokenVocabulary(int max_teams,
                                                int max_players);

struct Sender {
  int team = 0;
  int player = 0;
  auto operator<=>(const Sender&) const = default;
};

// Raw (team, player) slots to normalized ones.
class SenderMap {
 public:
  Sender Normalize(Sender raw) const;
  bool Contains(Sender raw) const { return map_.count(raw) > 0; }
  std::size_t size() const { return map_.size(); }
  const std::map<Sender, Sender>& entries() const { return map_; }

  // Assigns the next free normalized slot to `raw` if it is new. Teams are
  // numbered by first appearance; players within a team likewise.
  void Add(Sender raw);

 private:
  std::map<Sender, Sender> map_;
  std::map<int, int> team_map_;
  std::map<int, int> next_player_;
};

// The evaluated sender becomes (0, 0); everyone who spoke earlier in the
// match is numbered by first appearance.
SenderMap BuildSenderMap(const Match& match, int evaluated_index);

// First-appearance numbering over the whole match with no privileged sender.
SenderMap BuildFirstAppearanceSenderMap(const Match& match);

struct Segment {
  std::vector<std::string> prefix;  // separator or sender tokens
  std::string text;
  int message_index = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ContextualInput {
  int evaluated_index = 0;
  std::vector<Segment> segments;  // evaluated message is always last
  std::size_t token_budget = 0;
  std::size_t truncated_count = 0;     // history messages dropped
  std::size_t evaluated_tokens_dropped = 0;

  friend bool operator==(const ContextualInput&,
                         const ContextualInput&) = default;
};

struct AssemblyOptions {
  ContextLevel level = ContextLevel::kNone;
  SeparatorScheme scheme = SeparatorScheme::kSenderTokens;
  std::size_t token_budget = 512;
  // Normalized ids at or beyond these limits are clamped to the last token.
  int max_teams = 2;
  int max_players = 5;
};

// Builds the input for messages[evaluated_index]. History is taken in index
// order; whole messages are dropped oldest first until the input fits the
// budget, and an oversized evaluated message loses its oldest tokens.
ContextualInput Assemble(const Match& match, int evaluated_index,
                         const AssemblyOptions& options,
                         const TokenCounter& tokenizer);

// Reserved tokens plus every prefix and text token.
std::size_t CountInputTokens(const ContextualInput& input,
                             const TokenCounter& tokenizer);

// Indices of the history messages selected by `level`, ascending.
std::vector<int> SelectHistory(const Match& match, int evaluated_index,
                               ContextLevel level);

// Sender prefix for a normalized sender, clamped to the configured limits.
std::vector<std::string> SenderPrefix(Sender normalized, int max_teams,
                                      int max_players);

}  // namespace toxctx

#endif  // TOXCTX_CONTEXT_H_
