#include "toxctx/data_model.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "toxctx/error.h"
#include "toxctx/hashing.h"
#include "toxctx/rng.h"

namespace toxctx {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view GameName(Game game) {
  switch (game) {
    case Game::kDota2: return "dota2";
    case Game::kMwiii: return "mwiii";
    case Game::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

Game ParseGame(std::string_view name) {
  if (name == "dota2") return Game::kDota2;
  if (name == "mwiii") return Game::kMwiii;
  if (name == "synthetic") return Game::kSynthetic;
  throw Error(ErrorKind::kValidation,
              "unknown game '" + std::string(name) + "'");
}

bool Match::labeled() const {
  return !messages.empty() &&
         std::all_of(messages.begin(), messages.end(),
                     [](const ChatMessage& m) { return m.label.has_value(); });
}

std::string_view Trim(std::string_view text) {
  auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::size_t CountWords(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

void ValidateMatch(const Match& match) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kValidation,
                "match '" + match.match_id + "': " + what);
  };
  if (match.match_id.empty()) fail("empty match_id");
  if (match.messages.empty()) fail("no messages");
  std::map<int, int> team_of_player;
  std::map<int, std::optional<std::string>> key_of_player;
  for (std::size_t i = 0; i < match.messages.size(); ++i) {
    const ChatMessage& m = match.messages[i];
    if (m.index != static_cast<int>(i)) {
      if (i > 0 && m.index == match.messages[i - 1].index) {
        fail("duplicate index " + std::to_string(m.index));
      }
      fail("non-contiguous indices: expected " + std::to_string(i) +
           ", found " + std::to_string(m.index));
    }
    if (m.player < 0 || m.team < 0) fail("negative player or team id");
    if (Trim(m.text).empty()) {
      fail("empty text at index " + std::to_string(m.index));
    }
    if (m.label && *m.label != kToxic && *m.label != kNonToxic) {
      fail("label must be 0 or 1 at index " + std::to_string(m.index));
    }
    if (m.context_dependent.value_or(false) && !m.is_toxic()) {
      fail("context_dependent set on a non-toxic message at index " +
           std::to_string(m.index));
    }
    auto [it, inserted] = team_of_player.emplace(m.player, m.team);
    if (!inserted && it->second != m.team) {
      fail("player " + std::to_string(m.player) + " changes team");
    }
    auto [kit, kinserted] = key_of_player.emplace(m.player, m.player_key);
    if (!kinserted && kit->second != m.player_key) {
      fail("player " + std::to_string(m.player) + " changes player_key");
    }
  }
}

namespace {

template <typename T>
std::optional<T> OptionalField(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

ChatMessage MessageFromJson(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("message is not an object");
  ChatMessage m;
  m.index = j.at("index").get<int>();
  m.time_s = OptionalField<double>(j, "time_s");
  m.player = j.at("player").get<int>();
  m.team = j.at("team").get<int>();
  m.text = j.at("text").get<std::string>();
  auto label_it = j.find("label");
  if (label_it != j.end() && !label_it->is_null()) {
    if (label_it->is_boolean()) {
      m.label = label_it->get<bool>() ? kToxic : kNonToxic;
    } else {
      m.label = label_it->get<int>();
    }
  }
  m.context_dependent = OptionalField<bool>(j, "context_dependent");
  m.player_key = OptionalField<std::string>(j, "player_key");
  return m;
}

Match MatchFromJson(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  Match match;
  match.match_id = j.at("match_id").get<std::string>();
  match.game = ParseGame(j.at("game").get<std::string>());
  match.period_id = OptionalField<std::string>(j, "period_id");
  const json& messages = j.at("messages");
  if (!messages.is_array()) {
    throw std::invalid_argument("messages is not an array");
  }
  for (const json& mj : messages) match.messages.push_back(MessageFromJson(mj));
  std::stable_sort(match.messages.begin(), match.messages.end(),
                   [](const ChatMessage& a, const ChatMessage& b) {
                     return a.index < b.index;
                   });
  return match;
}

template <typename T>
ordered_json OrNull(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::vector<Match> ParseMatches(std::istream& in) {
  std::vector<Match> matches;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    Match match;
    try {
      match = MatchFromJson(json::parse(line));
      ValidateMatch(match);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!seen.insert(match.match_id).second) {
      throw Error(ErrorKind::kValidation,
                  "line " + std::to_string(line_no) +
                      ": duplicate match_id '" + match.match_id + "'");
    }
    matches.push_back(std::move(match));
  }
  return matches;
}

std::vector<Match> ReadMatchesFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return ParseMatches(in);
}

std::string SerializeMatch(const Match& match) {
  ordered_json j;
  j["match_id"] = match.match_id;
  j["game"] = std::string(GameName(match.game));
  j["period_id"] = OrNull(match.period_id);
  ordered_json messages = ordered_json::array();
  for (const ChatMessage& m : match.messages) {
    ordered_json mj;
    mj["index"] = m.index;
    mj["time_s"] = OrNull(m.time_s);
    mj["player"] = m.player;
    mj["team"] = m.team;
    mj["text"] = m.text;
    mj["label"] = OrNull(m.label);
    mj["context_dependent"] = OrNull(m.context_dependent);
    if (m.player_key) mj["player_key"] = *m.player_key;
    messages.push_back(std::move(mj));
  }
  j["messages"] = std::move(messages);
  return j.dump();
}

void WriteMatches(std::ostream& out, const std::vector<Match>& matches) {
  for (const Match& m : matches) out << SerializeMatch(m) << '\n';
}

void WriteMatchesFile(const std::string& path,
                      const std::vector<Match>& matches) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  WriteMatches(out, matches);
}

std::vector<Match> FilterMatchesMwiiiStyle(const std::vector<Match>& matches,
                                           const MatchFilter& filter) {
  if (filter.min_weekly_msgs > 0) {
    for (const Match& m : matches) {
      if (!m.period_id) {
        throw Error(ErrorKind::kConfig,
                    "weekly message threshold needs period_id; match '" +
                        m.match_id + "' has none");
      }
      for (const ChatMessage& msg : m.messages) {
        if (!msg.player_key) {
          throw Error(ErrorKind::kConfig,
                      "weekly message threshold needs player_key; match '" +
                          m.match_id + "' has a message without one");
        }
      }
    }
  }

  std::vector<const Match*> kept;
  for (const Match& m : matches) {
    if (m.messages.size() < filter.min_match_msgs) continue;
    std::map<std::pair<int, int>, std::size_t> per_player;
    for (const ChatMessage& msg : m.messages) ++per_player[{msg.team, msg.player}];
    const bool players_ok = std::all_of(
        per_player.begin(), per_player.end(),
        [&](const auto& kv) { return kv.second >= filter.min_player_msgs; });
    if (players_ok) kept.push_back(&m);
  }

  if (filter.min_weekly_msgs > 0) {
    bool changed = true;
    while (changed) {
      std::map<std::pair<std::string, std::string>, std::size_t> weekly;
      for (const Match* m : kept) {
        for (const ChatMessage& msg : m->messages) {
          ++weekly[{*m->period_id, *msg.player_key}];
        }
      }
      std::vector<const Match*> next;
      for (const Match* m : kept) {
        const bool ok = std::all_of(
            m->messages.begin(), m->messages.end(),
            [&](const ChatMessage& msg) {
              return weekly[{*m->period_id, *msg.player_key}] >=
                     filter.min_weekly_msgs;
            });
        if (ok) next.push_back(m);
      }
      changed = next.size() != kept.size();
      kept = std::move(next);
    }
  }

  std::vector<Match> out;
  out.reserve(kept.size());
  for (const Match* m : kept) out.push_back(*m);
  return out;
}

std::string DatasetSplit::Hash() const {
  std::ostringstream os;
  os << "train:";
  for (const auto& id : train_matches) os << id << ',';
  os << ";test:";
  for (const auto& id : test_matches) os << id << ',';
  return HexDigest(Fnv1a64(os.str()));
}

DatasetSplit SplitDataset(const std::vector<Match>& matches,
                          std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(matches.size());
  for (const Match& m : matches) {
    if (!m.labeled()) {
      throw Error(ErrorKind::kValidation,
                  "cannot split unlabeled match '" + m.match_id + "'");
    }
    ids.push_back(m.match_id);
  }
  if (n_train + n_test > ids.size()) {
    throw Error(ErrorKind::kSizing,
                "split needs " + std::to_string(n_train + n_test) +
                    " matches but only " + std::to_string(ids.size()) +
                    " are available");
  }
  std::sort(ids.begin(), ids.end());
  Rng rng(DeriveSeed(seed, {0x5b117}));
  rng.Shuffle(ids);

  DatasetSplit split;
  auto first = ids.begin();
  split.train_matches.assign(first, first + n_train);
  split.test_matches.assign(first + n_train, first + n_train + n_test);
  split.unused_matches.assign(first + n_train + n_test, ids.end());
  std::sort(split.train_matches.begin(), split.train_matches.end());
  std::sort(split.test_matches.begin(), split.test_matches.end());
  std::sort(split.unused_matches.begin(), split.unused_matches.end());
  return split;
}

std::vector<Match> SelectMatches(const std::vector<Match>& matches,
                                 const std::vector<std::string>& ids) {
  std::map<std::string_view, const Match*> by_id;
  for (const Match& m : matches) by_id[m.match_id] = &m;
  std::vector<Match> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::kValidation, "unknown match id '" + id + "'");
    }
    out.push_back(*it->second);
  }
  return out;
}

CorpusStats ComputeCorpusStats(const std::vector<Match>& matches) {
  CorpusStats s;
  s.n_matches = matches.size();
  for (const Match& m : matches) {
    for (const ChatMessage& msg : m.messages) {
      ++s.n_messages;
      s.n_words += CountWords(msg.text);
      if (!msg.label) continue;
      ++s.n_labeled;
      if (msg.is_toxic()) {
        ++s.n_toxic;
        if (msg.context_dependent.value_or(false)) ++s.n_context_dependent;
      }
    }
  }
  if (s.n_labeled > 0) {
    s.toxicity_rate = static_cast<double>(s.n_toxic) / s.n_labeled;
  }
  if (s.n_toxic > 0) {
    s.context_dependent_fraction =
        static_cast<double>(s.n_context_dependent) / s.n_toxic;
  }
  return s;
}

}  // namespace toxctx
