#include <algorithm>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "toxctx/context.h"
#include "toxctx/error.h"
#include "unit/test_util.h"

namespace toxctx {
namespace {

using testing::FixedWidthCounter;
using testing::Msg;
using testing::RandomMatch;

Match MatchOf(std::vector<ChatMessage> messages) {
  Match m;
  m.match_id = "ctx";
  m.messages = std::move(messages);
  return m;
}

std::string Words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += i ? " w" : "w";
  return s;
}

TEST(SenderMap, EvaluatedSenderBecomesTeamZeroPlayerZero) {
  const Match m = MatchOf({Msg(0, 0, 2, "a"), Msg(1, 1, 4, "b")});
  const SenderMap map = BuildSenderMap(m, 1);
  EXPECT_EQ(map.Normalize({1, 4}), (Sender{0, 0}));
  EXPECT_EQ(map.Normalize({0, 2}), (Sender{1, 0}));
}

TEST(SenderMap, SinglePlayer) {
  const Match m = MatchOf({Msg(0, 3, 7, "a"), Msg(1, 3, 7, "b")});
  const SenderMap map = BuildSenderMap(m, 1);
  EXPECT_EQ(map.size(), 1u);
  EXPECT_EQ(map.Normalize({3, 7}), (Sender{0, 0}));
}

TEST(SenderMap, FirstAppearanceOrderTwoTeamsOfTwo) {
  const Match m = MatchOf({Msg(0, 1, 2, "a"), Msg(1, 0, 7, "b"),
                           Msg(2, 0, 9, "c"), Msg(3, 1, 3, "d")});
  const SenderMap map = BuildSenderMap(m, 3);
  EXPECT_EQ(map.Normalize({1, 3}), (Sender{0, 0}));
  EXPECT_EQ(map.Normalize({1, 2}), (Sender{0, 1}));
  EXPECT_EQ(map.Normalize({0, 7}), (Sender{1, 0}));
  EXPECT_EQ(map.Normalize({0, 9}), (Sender{1, 1}));
}

TEST(SenderMap, PretrainingHasNoPrivilegedSender) {
  const Match m = MatchOf({Msg(0, 1, 2, "a"), Msg(1, 0, 7, "b"),
                           Msg(2, 1, 3, "c")});
  const SenderMap map = BuildFirstAppearanceSenderMap(m);
  EXPECT_EQ(map.Normalize({1, 2}), (Sender{0, 0}));
  EXPECT_EQ(map.Normalize({0, 7}), (Sender{1, 0}));
  EXPECT_EQ(map.Normalize({1, 3}), (Sender{0, 1}));
}

TEST(SpecialTokens, MinimalAndDotaSizedVocabularies) {
  EXPECT_EQ(SpecialTokenVocabulary(1, 1),
            (std::vector<std::string>{"[MSG]", "[TEAM0]", "[PLAYER0]"}));
  EXPECT_EQ(SpecialTokenVocabulary(2, 5).size(), 8u);
  EXPECT_EQ(SpecialTokenVocabulary(2, 5), SpecialTokenVocabulary(2, 5));
}

TEST(SenderPrefix, OverflowClampsToLastToken) {
  EXPECT_EQ(SenderPrefix({3, 9}, 2, 5),
            (std::vector<std::string>{"[TEAM1]", "[PLAYER4]"}));
  EXPECT_EQ(SenderPrefix({1, 2}, 2, 5),
            (std::vector<std::string>{"[TEAM1]", "[PLAYER2]"}));
}

// Seven messages; the evaluated one is the last.
Match FigureOneMatch() {
  return MatchOf({Msg(0, 0, 0, "hi all"), Msg(1, 1, 5, "gl hf"),
                  Msg(2, 0, 1, "mid missing"), Msg(3, 1, 6, "ez"),
                  Msg(4, 0, 0, "report him"), Msg(5, 1, 5, "cry more"),
                  Msg(6, 0, 0, "again typical")});
}

TEST(Assemble, AllPlayersTakesWholePrefix) {
  AssemblyOptions o;
  o.level = ContextLevel::kAllPlayers;
  const ContextualInput in = Assemble(FigureOneMatch(), 6, o, WordTokenizer());
  ASSERT_EQ(in.segments.size(), 7u);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(in.segments[i].message_index, i);
  EXPECT_EQ(in.truncated_count, 0u);
  EXPECT_EQ(in.segments[6].prefix,
            (std::vector<std::string>{"[TEAM0]", "[PLAYER0]"}));
  EXPECT_EQ(in.segments[1].prefix,
            (std::vector<std::string>{"[TEAM1]", "[PLAYER0]"}));
  EXPECT_EQ(in.segments[2].prefix,
            (std::vector<std::string>{"[TEAM0]", "[PLAYER1]"}));
}

TEST(Assemble, CurrentPlayerKeepsOnlySendersHistory) {
  AssemblyOptions o;
  o.level = ContextLevel::kCurrentPlayer;
  const ContextualInput in = Assemble(FigureOneMatch(), 6, o, WordTokenizer());
  std::vector<int> idx;
  for (const Segment& s : in.segments) idx.push_back(s.message_index);
  EXPECT_EQ(idx, (std::vector<int>{0, 4, 6}));
}

TEST(Assemble, NoneIsSingleSegment) {
  AssemblyOptions o;
  o.level = ContextLevel::kNone;
  const ContextualInput in = Assemble(FigureOneMatch(), 6, o, WordTokenizer());
  ASSERT_EQ(in.segments.size(), 1u);
  EXPECT_EQ(in.segments[0].text, "again typical");
  EXPECT_EQ(in.segments[0].prefix.size(), 2u);
  EXPECT_EQ(in.truncated_count, 0u);

  o.scheme = SeparatorScheme::kPeriod;
  const ContextualInput plain =
      Assemble(FigureOneMatch(), 6, o, WordTokenizer());
  ASSERT_EQ(plain.segments.size(), 1u);
  EXPECT_TRUE(plain.segments[0].prefix.empty());
}

TEST(Assemble, SeparatorSchemesJoinSegments) {
  AssemblyOptions o;
  o.level = ContextLevel::kAllPlayers;
  o.scheme = SeparatorScheme::kPeriod;
  const ContextualInput period =
      Assemble(FigureOneMatch(), 2, o, WordTokenizer());
  ASSERT_EQ(period.segments.size(), 3u);
  EXPECT_TRUE(period.segments[0].prefix.empty());
  EXPECT_EQ(period.segments[1].prefix, (std::vector<std::string>{"."}));
  o.scheme = SeparatorScheme::kNeutralSep;
  const ContextualInput sep = Assemble(FigureOneMatch(), 2, o, WordTokenizer());
  EXPECT_EQ(sep.segments[2].prefix, (std::vector<std::string>{"[MSG]"}));
}

TEST(Assemble, BudgetDropsOldestWholeMessages) {
  std::vector<ChatMessage> msgs;
  for (int i = 0; i < 5; ++i) msgs.push_back(Msg(i, i % 2, i, Words(100)));
  msgs.push_back(Msg(5, 0, 9, Words(50)));
  AssemblyOptions o;
  o.level = ContextLevel::kAllPlayers;
  o.scheme = SeparatorScheme::kSenderTokens;
  o.token_budget = 256;
  const FixedWidthCounter counter;
  const ContextualInput in = Assemble(MatchOf(msgs), 5, o, counter);
  ASSERT_EQ(in.segments.size(), 3u);
  EXPECT_EQ(in.segments[0].message_index, 3);
  EXPECT_EQ(in.segments[1].message_index, 4);
  EXPECT_EQ(in.truncated_count, 3u);
  EXPECT_EQ(CountInputTokens(in, counter), 256u);
}

TEST(Assemble, OversizedEvaluatedMessageKeepsItsLastTokens) {
  AssemblyOptions o;
  o.token_budget = 6;
  const Match m = MatchOf({Msg(0, 0, 0, "one two three four five six seven")});
  const ContextualInput in = Assemble(m, 0, o, WordTokenizer());
  // One reserved token and two sender tokens leave room for three words.
  EXPECT_EQ(in.segments[0].text, "five six seven");
  EXPECT_EQ(in.evaluated_tokens_dropped, 4u);
}

TEST(Assemble, BudgetBelowMinimumIsError) {
  AssemblyOptions o;
  o.token_budget = 3;
  try {
    Assemble(MatchOf({Msg(0, 0, 0, "x")}), 0, o, WordTokenizer());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBudget);
  }
  o.token_budget = 4;
  EXPECT_NO_THROW(Assemble(MatchOf({Msg(0, 0, 0, "x")}), 0, o,
                           WordTokenizer()));
}

TEST(Assemble, OutOfRangeIndexIsInputError) {
  EXPECT_THROW(Assemble(MatchOf({Msg(0, 0, 0, "x")}), 1, {}, WordTokenizer()),
               Error);
}

// Randomized properties; the acceptance suite runs the same checks at 10^4.
class AssemblyProperties : public ::testing::Test {
 protected:
  static AssemblyOptions RandomOptions(Rng& rng) {
    AssemblyOptions o;
    o.level = static_cast<ContextLevel>(rng.UniformInt(3));
    o.scheme = static_cast<SeparatorScheme>(rng.UniformInt(3));
    o.token_budget = 4 + rng.UniformInt(60);
    return o;
  }
};

TEST_F(AssemblyProperties, CausalAndWithinBudget) {
  Rng rng(101);
  const WordTokenizer tok;
  for (int trial = 0; trial < 2000; ++trial) {
    const Match m = RandomMatch(rng);
    const int eval = static_cast<int>(rng.UniformInt(m.messages.size()));
    const AssemblyOptions o = RandomOptions(rng);
    const ContextualInput in = Assemble(m, eval, o, tok);
    ASSERT_LE(CountInputTokens(in, tok), o.token_budget);
    ASSERT_EQ(in.segments.back().message_index, eval);
    for (std::size_t s = 0; s + 1 < in.segments.size(); ++s) {
      ASSERT_LT(in.segments[s].message_index, eval);
    }
  }
}

TEST_F(AssemblyProperties, LevelMonotonicity) {
  Rng rng(202);
  for (int trial = 0; trial < 2000; ++trial) {
    const Match m = RandomMatch(rng);
    const int eval = static_cast<int>(rng.UniformInt(m.messages.size()));
    EXPECT_TRUE(SelectHistory(m, eval, ContextLevel::kNone).empty());
    const std::vector<int> cur =
        SelectHistory(m, eval, ContextLevel::kCurrentPlayer);
    const std::vector<int> all =
        SelectHistory(m, eval, ContextLevel::kAllPlayers);
    ASSERT_TRUE(std::includes(all.begin(), all.end(), cur.begin(), cur.end()));
    ASSERT_EQ(all.size(), static_cast<std::size_t>(eval));
  }
}

TEST_F(AssemblyProperties, RawIdPermutationInvariance) {
  Rng rng(303);
  const WordTokenizer tok;
  for (int trial = 0; trial < 2000; ++trial) {
    const Match m = RandomMatch(rng);
    std::vector<int> team_perm(3);
    std::iota(team_perm.begin(), team_perm.end(), 7);
    rng.Shuffle(team_perm);
    std::vector<int> player_perm(40);
    std::iota(player_perm.begin(), player_perm.end(), 100);
    rng.Shuffle(player_perm);
    Match renamed = m;
    for (ChatMessage& msg : renamed.messages) {
      msg.team = team_perm[msg.team];
      msg.player = player_perm[msg.player];
    }
    const int eval = static_cast<int>(rng.UniformInt(m.messages.size()));
    AssemblyOptions o = RandomOptions(rng);
    o.scheme = SeparatorScheme::kSenderTokens;
    ASSERT_EQ(Assemble(m, eval, o, tok).segments,
              Assemble(renamed, eval, o, tok).segments);
  }
}

TEST(ContextNames, RoundTrip) {
  for (ContextLevel l : {ContextLevel::kNone, ContextLevel::kCurrentPlayer,
                         ContextLevel::kAllPlayers}) {
    EXPECT_EQ(ParseContextLevel(ContextLevelName(l)), l);
  }
  for (SeparatorScheme s : {SeparatorScheme::kPeriod,
                            SeparatorScheme::kNeutralSep,
                            SeparatorScheme::kSenderTokens}) {
    EXPECT_EQ(ParseSeparatorScheme(SeparatorSchemeName(s)), s);
  }
  EXPECT_THROW(ParseContextLevel("some"), Error);
}

}  // namespace
}  // namespace toxctx
