#ifndef TOXCTX_TESTS_TEST_UTIL_H_
#define TOXCTX_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "toxctx/data_model.h"
#include "toxctx/rng.h"
#include "toxctx/tokenizer.h"

namespace toxctx::testing {

inline std::string FixturePath(const std::string& name) {
  return std::string(TOXCTX_FIXTURES_DIR) + "/" + name;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "toxctx_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ChatMessage Msg(int index, int team, int player, std::string text,
                       std::optional<int> label = std::nullopt) {
  ChatMessage m;
  m.index = index;
  m.team = team;
  m.player = player;
  m.text = std::move(text);
  m.label = label;
  return m;
}

// Random match with up to `max_teams` teams of raw ids in [0, 40) and words
// from a small alphabet, for property tests.
inline Match RandomMatch(Rng& rng, std::size_t max_messages = 12,
                         int max_teams = 3) {
  static const std::vector<std::string> kWords = {
      "gg", "mid", "push", "report", "noob", "wp", "ez", "afk", "go", "def"};
  Match m;
  m.match_id = "r" + std::to_string(rng.NextU64() % 1000000);
  const int n_teams = 1 + static_cast<int>(rng.UniformInt(max_teams));
  std::vector<std::pair<int, int>> roster;
  for (int t = 0; t < n_teams; ++t) {
    const int n_players = 1 + static_cast<int>(rng.UniformInt(5));
    for (int p = 0; p < n_players; ++p) {
      roster.push_back({t, t * 10 + p});
    }
  }
  const std::size_t n = 1 + rng.UniformInt(max_messages);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [team, player] = roster[rng.UniformInt(roster.size())];
    std::string text;
    const std::size_t words = 1 + rng.UniformInt(8);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) text += ' ';
      text += kWords[rng.UniformInt(kWords.size())];
    }
    m.messages.push_back(
        Msg(static_cast<int>(i), team, player, std::move(text),
            static_cast<int>(rng.UniformInt(2))));
  }
  return m;
}

// Counts every whitespace separated word as one token; no reserved tokens.
class FixedWidthCounter : public TokenCounter {
 public:
  std::size_t CountTokens(std::string_view text) const override {
    return WordTokenizer(0).Split(text).size();
  }
  std::string KeepLastTokens(std::string_view text,
                             std::size_t n) const override {
    return WordTokenizer(0).KeepLastTokens(text, n);
  }
};

}  // namespace toxctx::testing

#endif  // TOXCTX_TESTS_TEST_UTIL_H_
