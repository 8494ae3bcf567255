#include "toxctx/context.h"

#include <algorithm>
#include <atomic>

#include <spdlog/spdlog.h>

#include "toxctx/error.h"

namespace toxctx {

std::string_view ContextLevelName(ContextLevel level) {
  switch (level) {
    case ContextLevel::kNone: return "none";
    case ContextLevel::kCurrentPlayer: return "current_player";
    case ContextLevel::kAllPlayers: return "all_players";
  }
  return "none";
}

ContextLevel ParseContextLevel(std::string_view name) {
  if (name == "none") return ContextLevel::kNone;
  if (name == "current_player") return ContextLevel::kCurrentPlayer;
  if (name == "all_players") return ContextLevel::kAllPlayers;
  throw Error(ErrorKind::kConfig,
              "unknown context level '" + std::string(name) + "'");
}

std::string_view SeparatorSchemeName(SeparatorScheme scheme) {
  switch (scheme) {
    case SeparatorScheme::kPeriod: return "period";
    case SeparatorScheme::kNeutralSep: return "neutral_sep";
    case SeparatorScheme::kSenderTokens: return "sender_tokens";
  }
  return "period";
}

SeparatorScheme ParseSeparatorScheme(std::string_view name) {
  if (name == "period") return SeparatorScheme::kPeriod;
  if (name == "neutral_sep") return SeparatorScheme::kNeutralSep;
  if (name == "sender_tokens") return SeparatorScheme::kSenderTokens;
  throw Error(ErrorKind::kConfig,
              "unknown separator scheme '" + std::string(name) + "'");
}

std::string TeamToken(int team) { return "[TEAM" + std::to_string(team) + "]"; }

std::string PlayerToken(int player) {
  return "[PLAYER" + std::to_string(player) + "]";
}

std::vector<std::string> SpecialTokenVocabulary(int max_teams,
                                                int max_players) {
  if (max_teams < 1 || max_players < 1) {
    throw Error(ErrorKind::kConfig, "need at least one team and one player");
  }
  std::vector<std::string> tokens{std::string(kNeutralSeparator)};
  for (int t = 0; t < max_teams; ++t) tokens.push_back(TeamToken(t));
  for (int p = 0; p < max_players; ++p) tokens.push_back(PlayerToken(p));
  return tokens;
}

Sender SenderMap::Normalize(Sender raw) const {
  auto it = map_.find(raw);
  if (it == map_.end()) {
    throw Error(ErrorKind::kInternal, "sender (" + std::to_string(raw.team) +
                                          ", " + std::to_string(raw.player) +
                                          ") is not in the sender map");
  }
  return it->second;
}

void SenderMap::Add(Sender raw) {
  if (map_.count(raw)) return;
  const int team =
      team_map_.emplace(raw.team, static_cast<int>(team_map_.size()))
          .first->second;
  const int player = next_player_[team]++;
  map_.emplace(raw, Sender{team, player});
}

SenderMap BuildSenderMap(const Match& match, int evaluated_index) {
  const ChatMessage& evaluated = match.messages.at(evaluated_index);
  SenderMap map;
  map.Add({evaluated.team, evaluated.player});
  for (int i = 0; i < evaluated_index; ++i) {
    const ChatMessage& m = match.messages[i];
    map.Add({m.team, m.player});
  }
  return map;
}

SenderMap BuildFirstAppearanceSenderMap(const Match& match) {
  SenderMap map;
  for (const ChatMessage& m : match.messages) map.Add({m.team, m.player});
  return map;
}

std::vector<int> SelectHistory(const Match& match, int evaluated_index,
                               ContextLevel level) {
  std::vector<int> history;
  if (level == ContextLevel::kNone) return history;
  const ChatMessage& evaluated = match.messages.at(evaluated_index);
  for (int i = 0; i < evaluated_index; ++i) {
    const ChatMessage& m = match.messages[i];
    if (level == ContextLevel::kCurrentPlayer &&
        (m.team != evaluated.team || m.player != evaluated.player)) {
      continue;
    }
    history.push_back(i);
  }
  return history;
}

std::vector<std::string> SenderPrefix(Sender normalized, int max_teams,
                                      int max_players) {
  if (normalized.team >= max_teams || normalized.player >= max_players) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      spdlog::warn(
          "sender ({}, {}) exceeds the special-token range ({} teams, {} "
          "players); clamping to the last token",
          normalized.team, normalized.player, max_teams, max_players);
    }
  }
  return {TeamToken(std::min(normalized.team, max_teams - 1)),
          PlayerToken(std::min(normalized.player, max_players - 1))};
}

namespace {

std::size_t PrefixWidth(SeparatorScheme scheme) {
  return scheme == SeparatorScheme::kSenderTokens ? 2 : 1;
}

std::string SeparatorToken(SeparatorScheme scheme) {
  return std::string(scheme == SeparatorScheme::kPeriod ? kPeriodSeparator
                                                        : kNeutralSeparator);
}

}  // namespace

ContextualInput Assemble(const Match& match, int evaluated_index,
                         const AssemblyOptions& options,
                         const TokenCounter& tokenizer) {
  if (evaluated_index < 0 ||
      evaluated_index >= static_cast<int>(match.messages.size())) {
    throw Error(ErrorKind::kInput,
                "evaluated index " + std::to_string(evaluated_index) +
                    " is outside match '" + match.match_id + "'");
  }
  const bool sender_tokens = options.scheme == SeparatorScheme::kSenderTokens;
  const std::size_t eval_prefix = sender_tokens ? 2 : 0;
  const std::size_t reserved = tokenizer.ReservedTokens();
  if (options.token_budget < reserved + eval_prefix + 1) {
    throw Error(ErrorKind::kBudget,
                "token budget " + std::to_string(options.token_budget) +
                    " is below the minimum of " +
                    std::to_string(reserved + eval_prefix + 1));
  }
  const std::size_t available = options.token_budget - reserved;

  ContextualInput input;
  input.evaluated_index = evaluated_index;
  input.token_budget = options.token_budget;

  const ChatMessage& evaluated = match.messages[evaluated_index];
  std::string eval_text = evaluated.text;
  std::size_t eval_tokens = tokenizer.CountTokens(eval_text);
  if (eval_prefix + eval_tokens > available) {
    const std::size_t keep = available - eval_prefix;
    eval_text = tokenizer.KeepLastTokens(eval_text, keep);
    input.evaluated_tokens_dropped = eval_tokens - keep;
    eval_tokens = keep;
  }
  std::size_t used = eval_prefix + eval_tokens;

  const std::vector<int> history =
      SelectHistory(match, evaluated_index, options.level);
  std::size_t kept = 0;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    const std::size_t cost = PrefixWidth(options.scheme) +
                             tokenizer.CountTokens(match.messages[*it].text);
    if (used + cost > available) break;
    used += cost;
    ++kept;
  }
  input.truncated_count = history.size() - kept;

  const SenderMap senders = sender_tokens
                                ? BuildSenderMap(match, evaluated_index)
                                : SenderMap{};
  auto make_prefix = [&](const ChatMessage& m, bool first) {
    if (sender_tokens) {
      return SenderPrefix(senders.Normalize({m.team, m.player}),
                          options.max_teams, options.max_players);
    }
    return first ? std::vector<std::string>{}
                 : std::vector<std::string>{SeparatorToken(options.scheme)};
  };

  for (std::size_t i = history.size() - kept; i < history.size(); ++i) {
    const ChatMessage& m = match.messages[history[i]];
    input.segments.push_back(
        {make_prefix(m, input.segments.empty()), m.text, m.index});
  }
  input.segments.push_back({make_prefix(evaluated, input.segments.empty()),
                            std::move(eval_text), evaluated.index});
  return input;
}

std::size_t CountInputTokens(const ContextualInput& input,
                             const TokenCounter& tokenizer) {
  std::size_t n = tokenizer.ReservedTokens();
  for (const Segment& s : input.segments) {
    n += s.prefix.size() + tokenizer.CountTokens(s.text);
  }
  return n;
}

}  // namespace toxctx
