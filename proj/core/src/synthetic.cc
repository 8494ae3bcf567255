#include "toxctx/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "toxctx/error.h"
#include "toxctx/rng.h"
#include "toxctx/tokenizer.h"

namespace toxctx {

namespace {

constexpr const char* kCommonWords[] = {
    "gg",   "mid",  "push", "lol",  "ok",    "go",   "wp",   "help",
    "tower", "ward", "rosh", "def",  "come", "nice", "ty",   "wait",
    "back", "ult",  "gank", "top",  "bot",   "lane", "item", "farm",
    "buy",  "smoke", "fight", "team", "care", "miss", "ez",   "hi",
    "yes",  "no",   "why",  "where", "now",  "pls",  "man",  "bro"};

bool IsProtectedWord(std::string_view w, const SyntheticConfig& c) {
  auto in = [&](const std::vector<std::string>& list) {
    return std::find(list.begin(), list.end(), w) != list.end();
  };
  return in(c.markers) || in(c.triggers) || in(c.targets);
}

std::vector<std::string> FillerWords(const SyntheticConfig& config) {
  std::vector<std::string> words;
  for (const char* w : kCommonWords) {
    if (words.size() == config.filler_vocab_size) return words;
    if (!IsProtectedWord(w, config)) words.emplace_back(w);
  }
  for (std::size_t k = 0; words.size() < config.filler_vocab_size; ++k) {
    std::string w = "w" + std::to_string(k);
    if (!IsProtectedWord(w, config)) words.push_back(std::move(w));
  }
  return words;
}

bool ContainsAny(std::string_view text, const std::vector<std::string>& list) {
  static const WordTokenizer tokenizer;
  for (const std::string& token : tokenizer.Split(text)) {
    if (std::find(list.begin(), list.end(), token) != list.end()) return true;
  }
  return false;
}

std::string Join(const std::vector<std::string>& words) {
  std::string out;
  for (const std::string& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void CheckFraction(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorKind::kConfig,
                std::string(name) + " must lie in [0, 1]");
  }
}

enum class Kind { kBenign, kContextFree, kContextual };

class MatchGenerator {
 public:
  MatchGenerator(const SyntheticConfig& config,
                 const std::vector<std::string>& filler,
                 const std::set<std::size_t>& prone, std::uint64_t seed)
      : config_(config), filler_(filler), prone_(prone), rng_(seed) {}

  Match Generate(std::size_t ordinal) {
    Match match;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", ordinal);
    match.match_id = id;
    match.game = config_.game;
    char period[32];
    std::snprintf(period, sizeof(period), "week%02llu",
                  static_cast<unsigned long long>(
                      rng_.UniformInt(config_.n_periods)));
    match.period_id = period;

    DrawPlayers();
    const std::size_t n_messages = static_cast<std::size_t>(
        rng_.UniformRange(static_cast<int>(config_.min_messages),
                          static_cast<int>(config_.max_messages)));
    const double p_cf =
        config_.toxicity_rate * (1.0 - config_.context_dependent_fraction);
    const double p_cd =
        config_.toxicity_rate * config_.context_dependent_fraction;
    std::vector<bool> armed(players_.size(), false);
    std::size_t debt = 0;
    double time_s = 0.0;
    for (std::size_t i = 0; i < n_messages; ++i) {
      const double u = rng_.Uniform();
      Kind kind = u < p_cf          ? Kind::kContextFree
                  : u < p_cf + p_cd ? Kind::kContextual
                                    : Kind::kBenign;
      if (kind == Kind::kBenign && debt > 0 &&
          std::find(armed.begin(), armed.end(), true) != armed.end()) {
        kind = Kind::kContextual;
        --debt;
      }

      std::size_t sender = 0;
      bool trigger = false;
      std::vector<std::string> words = FillerText();
      if (kind == Kind::kContextFree) {
        const std::vector<std::size_t> pool = ToxicCandidates();
        sender = pool[rng_.UniformInt(pool.size())];
        Insert(words, config_.markers);
      } else if (kind == Kind::kContextual) {
        const std::vector<std::size_t> pool = ToxicCandidates();
        std::vector<std::size_t> ready;
        for (std::size_t p : pool) {
          if (armed[p]) ready.push_back(p);
        }
        if (ready.empty()) {
          // Nobody suitable has used a trigger yet: one of them does so now
          // and the toxic message is owed to a later slot.
          kind = Kind::kBenign;
          ++debt;
          sender = pool[rng_.UniformInt(pool.size())];
          trigger = true;
        } else {
          sender = ready[rng_.UniformInt(ready.size())];
          Insert(words, config_.targets);
        }
      } else {
        sender = rng_.UniformInt(players_.size());
        trigger = rng_.Bernoulli(config_.trigger_rate);
      }
      if (kind == Kind::kBenign) {
        if (trigger && !config_.triggers.empty()) {
          Insert(words, config_.triggers);
          armed[sender] = true;
        } else if (!armed[sender] && !config_.targets.empty() &&
                   rng_.Bernoulli(config_.benign_target_rate)) {
          Insert(words, config_.targets);
        }
      }

      ChatMessage msg;
      msg.index = static_cast<int>(i);
      time_s += 1.0 + 20.0 * rng_.Uniform();
      msg.time_s = std::round(time_s * 10.0) / 10.0;
      msg.player = slots_[sender];
      msg.team = slots_[sender] / config_.players_per_team;
      msg.text = Join(words);
      msg.player_key = PlayerKey(players_[sender]);
      if (kind == Kind::kBenign) {
        msg.label = kNonToxic;
      } else {
        msg.label = kToxic;
        msg.context_dependent = kind == Kind::kContextual;
      }
      match.messages.push_back(std::move(msg));
    }
    if (!rng_.Bernoulli(config_.labeled_fraction)) {
      for (ChatMessage& m : match.messages) {
        m.label.reset();
        m.context_dependent.reset();
      }
    }
    return match;
  }

  static std::string PlayerKey(std::size_t member) {
    char key[32];
    std::snprintf(key, sizeof(key), "u%05zu", member);
    return key;
  }

 private:
  void DrawPlayers() {
    const std::size_t community = rng_.UniformInt(config_.n_communities);
    std::vector<std::size_t> members;
    for (std::size_t k = community; k < config_.player_pool_size;
         k += config_.n_communities) {
      members.push_back(k);
    }
    rng_.Shuffle(members);
    const std::size_t n =
        static_cast<std::size_t>(config_.n_teams * config_.players_per_team);
    players_.assign(members.begin(), members.begin() + n);
    // Toxicity cannot follow the planted share in a match without a prone
    // player, so every roster gets at least one.
    if (!prone_.empty() && config_.prone_toxicity_share > 0.0 &&
        std::none_of(players_.begin(), players_.end(),
                     [&](std::size_t p) { return prone_.count(p) != 0; })) {
      for (std::size_t k = n; k < members.size(); ++k) {
        if (prone_.count(members[k])) {
          players_[rng_.UniformInt(n)] = members[k];
          break;
        }
      }
    }
    slots_.resize(n);
    for (std::size_t i = 0; i < n; ++i) slots_[i] = static_cast<int>(i);
    rng_.Shuffle(slots_);
  }

  // Players eligible to author the next toxic message: the prone ones with
  // probability prone_toxicity_share, the others otherwise, everybody when
  // the chosen side is absent from the match.
  std::vector<std::size_t> ToxicCandidates() {
    std::vector<std::size_t> all(players_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    if (config_.prone_player_fraction <= 0.0) return all;
    const bool want_prone = rng_.Bernoulli(config_.prone_toxicity_share);
    std::vector<std::size_t> side;
    for (std::size_t c : all) {
      if ((prone_.count(players_[c]) != 0) == want_prone) side.push_back(c);
    }
    return side.empty() ? all : side;
  }

  std::vector<std::string> FillerText() {
    const std::size_t n = static_cast<std::size_t>(
        rng_.UniformRange(static_cast<int>(config_.min_words),
                          static_cast<int>(config_.max_words)));
    std::vector<std::string> words;
    words.reserve(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      // Skewed toward the front of the list, roughly like chat vocabularies.
      const double u = rng_.Uniform();
      words.push_back(filler_[static_cast<std::size_t>(
          u * u * static_cast<double>(filler_.size()))]);
    }
    return words;
  }

  void Insert(std::vector<std::string>& words,
              const std::vector<std::string>& choices) {
    const std::string& w = choices[rng_.UniformInt(choices.size())];
    const std::size_t pos = rng_.UniformInt(words.size() + 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), w);
  }

  const SyntheticConfig& config_;
  const std::vector<std::string>& filler_;
  const std::set<std::size_t>& prone_;
  Rng rng_;
  std::vector<std::size_t> players_;
  std::vector<int> slots_;
};

std::set<std::size_t> ProneMembers(const SyntheticConfig& config,
                                   std::uint64_t seed) {
  std::vector<std::size_t> pool(config.player_pool_size);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  Rng rng(DeriveSeed(seed, {0x9201}));
  rng.Shuffle(pool);
  const auto n_prone = static_cast<std::size_t>(std::llround(
      config.prone_player_fraction * static_cast<double>(pool.size())));
  return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_prone)};
}

}  // namespace

void SyntheticConfig::Validate() const {
  CheckFraction(toxicity_rate, "toxicity_rate");
  CheckFraction(context_dependent_fraction, "context_dependent_fraction");
  CheckFraction(trigger_rate, "trigger_rate");
  CheckFraction(benign_target_rate, "benign_target_rate");
  CheckFraction(prone_player_fraction, "prone_player_fraction");
  CheckFraction(prone_toxicity_share, "prone_toxicity_share");
  CheckFraction(labeled_fraction, "labeled_fraction");
  if (n_teams < 1 || players_per_team < 1) {
    throw Error(ErrorKind::kConfig, "need at least one team and one player");
  }
  if (min_messages < 1 || min_messages > max_messages) {
    throw Error(ErrorKind::kConfig,
                "message count range must satisfy 1 <= min <= max");
  }
  if (min_words < 1 || min_words > max_words) {
    throw Error(ErrorKind::kConfig,
                "word count range must satisfy 1 <= min <= max");
  }
  if (filler_vocab_size < 1) {
    throw Error(ErrorKind::kConfig, "filler_vocab_size must be positive");
  }
  if (n_periods < 1 || n_communities < 1) {
    throw Error(ErrorKind::kConfig, "n_periods and n_communities must be >= 1");
  }
  const std::size_t per_match =
      static_cast<std::size_t>(n_teams * players_per_team);
  if (player_pool_size / n_communities < per_match) {
    throw Error(ErrorKind::kConfig,
                "each community needs at least n_teams * players_per_team "
                "players");
  }
  if (toxicity_rate > 0.0 && context_dependent_fraction < 1.0 &&
      markers.empty()) {
    throw Error(ErrorKind::kConfig, "context-free toxicity needs markers");
  }
  if (toxicity_rate > 0.0 && context_dependent_fraction > 0.0 &&
      (triggers.empty() || targets.empty())) {
    throw Error(ErrorKind::kConfig,
                "context-dependent toxicity needs triggers and targets");
  }
  std::set<std::string> seen;
  for (const auto* list : {&markers, &triggers, &targets}) {
    for (const std::string& w : *list) {
      WordTokenizer tokenizer;
      if (tokenizer.Split(w) != std::vector<std::string>{w}) {
        throw Error(ErrorKind::kConfig,
                    "planted word '" + w + "' must be one lowercase token");
      }
      if (!seen.insert(w).second) {
        throw Error(ErrorKind::kConfig,
                    "planted word '" + w + "' is listed twice");
      }
    }
  }
}

std::vector<Match> GenerateSyntheticCorpus(const SyntheticConfig& config,
                                           std::uint64_t seed) {
  config.Validate();
  const std::vector<std::string> filler = FillerWords(config);
  const std::set<std::size_t> prone = ProneMembers(config, seed);
  std::vector<Match> matches;
  matches.reserve(config.n_matches);
  for (std::size_t m = 0; m < config.n_matches; ++m) {
    MatchGenerator gen(config, filler, prone, DeriveSeed(seed, {0x3a7c, m}));
    matches.push_back(gen.Generate(m));
  }
  return matches;
}

bool ContextFreeToxic(std::string_view text, const SyntheticConfig& config) {
  return ContainsAny(text, config.markers);
}

bool ContextualToxic(const Match& match, int index,
                     const SyntheticConfig& config) {
  const ChatMessage& msg = match.messages.at(static_cast<std::size_t>(index));
  if (ContextFreeToxic(msg.text, config)) return true;
  if (!ContainsAny(msg.text, config.targets)) return false;
  for (int j = 0; j < index; ++j) {
    const ChatMessage& prior = match.messages[static_cast<std::size_t>(j)];
    if (prior.player == msg.player && prior.team == msg.team &&
        ContainsAny(prior.text, config.triggers)) {
      return true;
    }
  }
  return false;
}

std::vector<std::string> PronePlayerKeys(const SyntheticConfig& config,
                                         std::uint64_t seed) {
  std::vector<std::string> keys;
  for (std::size_t member : ProneMembers(config, seed)) {
    keys.push_back(MatchGenerator::PlayerKey(member));
  }
  return keys;
}

SyntheticConfig ParseSyntheticConfig(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kConfig, std::string("synthetic config: ") + e.what());
  }
  if (!j.is_object()) {
    throw Error(ErrorKind::kConfig, "synthetic config must be a JSON object");
  }
  SyntheticConfig c;
  std::set<std::string> seen;
  auto get = [&](const char* key, auto* out) {
    seen.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      *out = it->get<std::remove_pointer_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::kConfig,
                  std::string("synthetic config: ") + key +
                      " has the wrong type");
    }
  };
  get("n_matches", &c.n_matches);
  get("n_teams", &c.n_teams);
  get("players_per_team", &c.players_per_team);
  get("min_messages", &c.min_messages);
  get("max_messages", &c.max_messages);
  get("min_words", &c.min_words);
  get("max_words", &c.max_words);
  get("filler_vocab_size", &c.filler_vocab_size);
  get("toxicity_rate", &c.toxicity_rate);
  get("context_dependent_fraction", &c.context_dependent_fraction);
  get("trigger_rate", &c.trigger_rate);
  get("benign_target_rate", &c.benign_target_rate);
  get("markers", &c.markers);
  get("triggers", &c.triggers);
  get("targets", &c.targets);
  get("player_pool_size", &c.player_pool_size);
  get("n_communities", &c.n_communities);
  get("prone_player_fraction", &c.prone_player_fraction);
  get("prone_toxicity_share", &c.prone_toxicity_share);
  get("n_periods", &c.n_periods);
  get("labeled_fraction", &c.labeled_fraction);
  std::string game(GameName(c.game));
  get("game", &game);
  c.game = ParseGame(game);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) {
      throw Error(ErrorKind::kConfig,
                  "unknown key '" + it.key() + "' in synthetic config");
    }
  }
  c.Validate();
  return c;
}

std::string SyntheticConfigToJson(const SyntheticConfig& c) {
  nlohmann::ordered_json j;
  j["n_matches"] = c.n_matches;
  j["n_teams"] = c.n_teams;
  j["players_per_team"] = c.players_per_team;
  j["min_messages"] = c.min_messages;
  j["max_messages"] = c.max_messages;
  j["min_words"] = c.min_words;
  j["max_words"] = c.max_words;
  j["filler_vocab_size"] = c.filler_vocab_size;
  j["toxicity_rate"] = c.toxicity_rate;
  j["context_dependent_fraction"] = c.context_dependent_fraction;
  j["trigger_rate"] = c.trigger_rate;
  j["benign_target_rate"] = c.benign_target_rate;
  j["markers"] = c.markers;
  j["triggers"] = c.triggers;
  j["targets"] = c.targets;
  j["player_pool_size"] = c.player_pool_size;
  j["n_communities"] = c.n_communities;
  j["prone_player_fraction"] = c.prone_player_fraction;
  j["prone_toxicity_share"] = c.prone_toxicity_share;
  j["n_periods"] = c.n_periods;
  j["labeled_fraction"] = c.labeled_fraction;
  j["game"] = GameName(c.game);
  return j.dump(2);
}

}  // namespace toxctx
