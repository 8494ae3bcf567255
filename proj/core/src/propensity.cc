#include "toxctx/propensity.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "toxctx/error.h"
#include "toxctx/rng.h"

namespace toxctx {

namespace {

using MessageRef = std::pair<std::size_t, int>;
using PlayerPeriod = std::pair<std::string, std::string>;

std::map<PlayerPeriod, std::vector<MessageRef>> GroupUnlabeled(
    const std::vector<Match>& matches) {
  std::map<PlayerPeriod, std::vector<MessageRef>> groups;
  for (std::size_t m = 0; m < matches.size(); ++m) {
    const Match& match = matches[m];
    if (!match.period_id) continue;
    for (const ChatMessage& msg : match.messages) {
      if (msg.label || !msg.player_key) continue;
      groups[{*msg.player_key, *match.period_id}].push_back({m, msg.index});
    }
  }
  return groups;
}

PropensityRecord ScoreGroup(const Checkpoint& checkpoint,
                            const std::vector<Match>& matches,
                            const PlayerPeriod& key,
                            const std::vector<MessageRef>& refs,
                            const PropensityOptions& options) {
  if (refs.empty()) {
    throw Error(ErrorKind::kCoverage, "player " + key.first +
                                          " sent no unlabeled messages in " +
                                          key.second);
  }
  const EncoderBackend& model = *checkpoint.model;
  double sum = 0.0;
  for (const auto& [m, index] : refs) {
    const ContextualInput input = Assemble(matches[m], index, options.assembly,
                                           model.token_counter());
    const double p = Predict(checkpoint, model.Encode(input.segments));
    sum += options.use_probabilities
               ? p
               : static_cast<double>(HardLabel(p, options.decision_threshold));
  }
  PropensityRecord r;
  r.player_key = key.first;
  r.period_id = key.second;
  r.n_scored_messages = refs.size();
  r.propensity = sum / static_cast<double>(refs.size());
  return r;
}

struct Counts {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

}  // namespace

std::vector<std::pair<std::size_t, int>> ScoredMessages(
    const std::vector<Match>& matches, const std::string& player_key,
    const std::string& period_id) {
  std::vector<MessageRef> refs;
  for (std::size_t m = 0; m < matches.size(); ++m) {
    const Match& match = matches[m];
    if (match.period_id != period_id) continue;
    for (const ChatMessage& msg : match.messages) {
      if (!msg.label && msg.player_key == player_key) {
        refs.push_back({m, msg.index});
      }
    }
  }
  return refs;
}

PropensityRecord ScorePlayerPropensity(const Checkpoint& checkpoint,
                                       const std::vector<Match>& matches,
                                       const std::string& player_key,
                                       const std::string& period_id,
                                       const PropensityOptions& options) {
  if (checkpoint.phase != Phase::kFinetuned) {
    throw Error(ErrorKind::kPhase, "propensity needs a finetuned checkpoint");
  }
  return ScoreGroup(checkpoint, matches, {player_key, period_id},
                    ScoredMessages(matches, player_key, period_id), options);
}

std::vector<PropensityRecord> ScoreAllPropensities(
    const Checkpoint& checkpoint, const std::vector<Match>& matches,
    const PropensityOptions& options) {
  if (checkpoint.phase != Phase::kFinetuned) {
    throw Error(ErrorKind::kPhase, "propensity needs a finetuned checkpoint");
  }
  const auto groups = GroupUnlabeled(matches);
  std::vector<const std::pair<const PlayerPeriod, std::vector<MessageRef>>*>
      items;
  for (const auto& g : groups) items.push_back(&g);
  std::vector<PropensityRecord> records(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < items.size();
         i = next.fetch_add(1)) {
      try {
        records[i] = ScoreGroup(checkpoint, matches, items[i]->first,
                                items[i]->second, options);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min(options.workers, items.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return records;
}

ThresholdModel FitThreshold(const std::vector<PlayerEvidence>& evidence) {
  // Message counts per distinct propensity.
  std::map<double, Counts> by_value;
  Counts total;
  for (const PlayerEvidence& e : evidence) {
    Counts& c = by_value[e.record.propensity];
    for (int y : e.labels) {
      if (y == kToxic) {
        ++c.pos;
        ++total.pos;
      } else {
        ++c.neg;
        ++total.neg;
      }
    }
  }
  if (total.pos == 0 || total.neg == 0) {
    throw Error(ErrorKind::kDegenerateClass,
                "threshold fitting needs toxic and non-toxic messages");
  }
  std::vector<double> values;
  for (const auto& [v, c] : by_value) values.push_back(v);

  ThresholdModel best;
  best.degenerate = values.size() < 2;
  if (best.degenerate) {
    best.threshold = values.front();
    best.training_balanced_accuracy = 0.5;
    return best;
  }
  // Candidate k places the threshold just below values[k], so every player
  // at or above values[k] is called toxic. Calling nobody toxic scores the
  // same 0.5 as candidate 0 and is not listed.
  std::vector<double> thresholds;
  thresholds.push_back(std::nextafter(values.front(), -1.0));
  for (std::size_t k = 1; k < values.size(); ++k) {
    thresholds.push_back(0.5 * (values[k - 1] + values[k]));
  }
  Counts above = total;
  best.training_balanced_accuracy = -1.0;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    ConfusionCounts cc;
    cc.tp = above.pos;
    cc.fn = total.pos - above.pos;
    cc.fp = above.neg;
    cc.tn = total.neg - above.neg;
    const double ba = BalancedAccuracy(cc);
    if (ba > best.training_balanced_accuracy) {
      best.training_balanced_accuracy = ba;
      best.threshold = thresholds[k];
    }
    const Counts& c = by_value[values[k]];
    above.pos -= c.pos;
    above.neg -= c.neg;
  }
  return best;
}

std::set<std::string> LabeledPlayers(const std::vector<Match>& matches) {
  std::set<std::string> players;
  for (const Match& match : matches) {
    for (const ChatMessage& msg : match.messages) {
      if (msg.label && msg.player_key) players.insert(*msg.player_key);
    }
  }
  return players;
}

PropensityEvaluation EvaluatePropensity(
    const ThresholdModel& model, const std::vector<Match>& test_matches,
    const std::vector<PropensityRecord>& records,
    const std::set<std::string>& training_players) {
  const std::set<std::string> test_players = LabeledPlayers(test_matches);
  std::vector<std::string> overlap;
  std::set_intersection(test_players.begin(), test_players.end(),
                        training_players.begin(), training_players.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) {
    throw Error(ErrorKind::kValidation,
                std::to_string(overlap.size()) +
                    " test players also appear in the training messages, "
                    "first: " + overlap.front());
  }
  std::map<PlayerPeriod, double> lookup;
  for (const PropensityRecord& r : records) {
    lookup[{r.player_key, r.period_id}] = r.propensity;
  }
  std::vector<int> labels;
  std::vector<int> predictions;
  std::set<std::string> missing;
  for (const Match& match : test_matches) {
    for (const ChatMessage& msg : match.messages) {
      if (!msg.label) continue;
      if (!msg.player_key || !match.period_id) {
        throw Error(ErrorKind::kInput,
                    "test message without player_key or period_id in " +
                        match.match_id);
      }
      auto it = lookup.find({*msg.player_key, *match.period_id});
      if (it == lookup.end()) {
        missing.insert(*msg.player_key);
        continue;
      }
      labels.push_back(*msg.label);
      predictions.push_back(it->second > model.threshold ? kToxic : kNonToxic);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const std::string& p : missing) list += (list.empty() ? "" : ", ") + p;
    throw Error(ErrorKind::kCoverage,
                "no propensity record for test players: " + list);
  }
  PropensityEvaluation out;
  out.counts = Confusion(labels, predictions);
  out.balanced_accuracy = BalancedAccuracy(out.counts);
  return out;
}

std::vector<PlayerEvidence> CollectEvidence(
    const std::vector<Match>& matches,
    const std::vector<PropensityRecord>& records) {
  std::map<PlayerPeriod, PlayerEvidence> by_key;
  for (const PropensityRecord& r : records) {
    by_key[{r.player_key, r.period_id}].record = r;
  }
  std::map<PlayerPeriod, PlayerEvidence*> used;
  for (const Match& match : matches) {
    if (!match.period_id) continue;
    for (const ChatMessage& msg : match.messages) {
      if (!msg.label || !msg.player_key) continue;
      auto it = by_key.find({*msg.player_key, *match.period_id});
      if (it == by_key.end()) continue;
      it->second.labels.push_back(*msg.label);
      used[it->first] = &it->second;
    }
  }
  std::vector<PlayerEvidence> out;
  for (auto& [key, e] : used) out.push_back(*e);
  return out;
}

PlayerSplit SplitByPlayers(const std::vector<Match>& matches,
                           double test_fraction, std::uint64_t seed) {
  // Union-find over matches: two matches join when they share a player.
  std::vector<std::size_t> parent(matches.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<std::string, std::size_t> first_match;
  for (std::size_t m = 0; m < matches.size(); ++m) {
    for (const ChatMessage& msg : matches[m].messages) {
      if (!msg.player_key) {
        throw Error(ErrorKind::kInput,
                    "player split needs player_key on every message of " +
                        matches[m].match_id);
      }
      auto [it, inserted] = first_match.emplace(*msg.player_key, m);
      if (!inserted) parent[find(m)] = find(it->second);
    }
  }
  // Groups keyed by their smallest match id for an input-order-free result.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t m = 0; m < matches.size(); ++m) {
    groups[find(m)].push_back(m);
  }
  if (groups.size() < 2) {
    throw Error(ErrorKind::kSizing,
                "all matches share players; no player-disjoint split exists");
  }
  std::vector<std::vector<std::string>> ordered;
  for (auto& [root, members] : groups) {
    std::vector<std::string> ids;
    for (std::size_t m : members) ids.push_back(matches[m].match_id);
    std::sort(ids.begin(), ids.end());
    ordered.push_back(std::move(ids));
  }
  std::sort(ordered.begin(), ordered.end());
  Rng rng(DeriveSeed(seed, {0x91a7}));
  rng.Shuffle(ordered);

  PlayerSplit split;
  const double target = test_fraction * static_cast<double>(matches.size());
  for (std::size_t g = 0; g < ordered.size(); ++g) {
    const bool to_test =
        static_cast<double>(split.test_matches.size()) < target &&
        g + 1 < ordered.size();
    auto& side = to_test ? split.test_matches : split.train_matches;
    side.insert(side.end(), ordered[g].begin(), ordered[g].end());
  }
  std::sort(split.train_matches.begin(), split.train_matches.end());
  std::sort(split.test_matches.begin(), split.test_matches.end());
  return split;
}

void WritePropensityTable(std::ostream& out,
                          const std::vector<PropensityRecord>& records) {
  for (const PropensityRecord& r : records) {
    nlohmann::ordered_json j;
    j["player_key"] = r.player_key;
    j["period_id"] = r.period_id;
    j["n_scored_messages"] = r.n_scored_messages;
    j["propensity"] = r.propensity;
    out << j.dump() << '\n';
  }
}

std::vector<PropensityRecord> ReadPropensityTable(std::istream& in) {
  std::vector<PropensityRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      PropensityRecord r;
      r.player_key = j.at("player_key").get<std::string>();
      r.period_id = j.at("period_id").get<std::string>();
      r.n_scored_messages = j.at("n_scored_messages").get<std::size_t>();
      r.propensity = j.at("propensity").get<double>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace toxctx
