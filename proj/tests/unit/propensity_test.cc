#include <algorithm>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "toxctx/error.h"
#include "toxctx/propensity.h"
#include "toxctx/rng.h"
#include "unit/test_util.h"

namespace toxctx {
namespace {

using testing::Msg;

// Scores a message toxic iff it contains the word "bad", or returns a fixed
// logit when `constant` is set.
class FakeEncoder : public EncoderBackend {
 public:
  explicit FakeEncoder(std::optional<double> constant = std::nullopt)
      : constant_(constant) {}

  std::string kind() const override { return "fake"; }
  const TokenCounter& token_counter() const override { return tokenizer_; }
  std::vector<int> Tokenize(std::string_view text) const override {
    std::vector<int> ids;
    for (const std::string& w : tokenizer_.Split(text)) {
      ids.push_back(w == "bad" ? 7 : 8);
    }
    return ids;
  }
  std::vector<int> Encode(const std::vector<Segment>& segments) const override {
    std::vector<int> ids = {1};
    for (const Segment& s : segments) {
      ids.insert(ids.end(), s.prefix.size(), 9);
      for (int id : Tokenize(s.text)) ids.push_back(id);
    }
    return ids;
  }
  std::size_t vocab_size() const override { return 10; }
  const TokenRegistry& registry() const override { return registry_; }
  void ExtendVocabulary(const std::vector<std::string>&,
                        std::uint64_t) override {}
  void ResetClassifierHead(std::uint64_t) override {}
  void ResetOptimizer(const OptimizerConfig&) override {}
  double MlmStep(const std::vector<MaskedSequence>&, double) override {
    return 0.0;
  }
  double ClassifyStep(const std::vector<std::vector<int>>&,
                      const std::vector<int>&, const ClassWeights&,
                      double) override {
    return 0.0;
  }
  Logits ClassifyLogits(const std::vector<int>& ids) const override {
    if (constant_) return {0.0, *constant_};
    const bool bad = std::find(ids.begin(), ids.end(), 7) != ids.end();
    return {0.0, bad ? 8.0 : -8.0};
  }
  using EncoderBackend::ClassifyLogits;
  std::unique_ptr<EncoderBackend> Clone() const override {
    return std::make_unique<FakeEncoder>(*this);
  }
  void Save(const std::string&) const override {}

 private:
  std::optional<double> constant_;
  WordTokenizer tokenizer_;
  TokenRegistry registry_;
};

Checkpoint Finetuned(std::optional<double> constant = std::nullopt) {
  Checkpoint c;
  c.model = std::make_shared<FakeEncoder>(constant);
  c.phase = Phase::kFinetuned;
  c.epoch = 0;
  return c;
}

ChatMessage Keyed(int index, int player, const std::string& key,
                  const std::string& text,
                  std::optional<int> label = std::nullopt) {
  ChatMessage m = Msg(index, player / 5, player, text, label);
  m.player_key = key;
  return m;
}

Match TenMessagesThreeBad() {
  Match m;
  m.match_id = "m";
  m.period_id = "w1";
  for (int i = 0; i < 10; ++i) {
    m.messages.push_back(Keyed(i, 0, "p", i < 3 ? "so bad" : "fine"));
  }
  return m;
}

TEST(ScorePlayerPropensity, MeanOfHardLabels) {
  const std::vector<Match> matches = {TenMessagesThreeBad()};
  PropensityOptions o;
  const PropensityRecord r =
      ScorePlayerPropensity(Finetuned(), matches, "p", "w1", o);
  EXPECT_DOUBLE_EQ(r.propensity, 0.3);
  EXPECT_EQ(r.n_scored_messages, 10u);
  o.decision_threshold = 1.0;
  EXPECT_EQ(ScorePlayerPropensity(Finetuned(), matches, "p", "w1", o).propensity,
            0.0);
  EXPECT_EQ(
      ScorePlayerPropensity(Finetuned(-3.0), matches, "p", "w1", {}).propensity,
      0.0);
}

TEST(ScorePlayerPropensity, LabeledMessagesAreExcluded) {
  Match m = TenMessagesThreeBad();
  for (int i = 10; i < 15; ++i) {
    m.messages.push_back(Keyed(i, 0, "p", "bad bad", kToxic));
  }
  const std::vector<Match> matches = {m};
  EXPECT_EQ(ScoredMessages(matches, "p", "w1").size(), 10u);
  EXPECT_DOUBLE_EQ(
      ScorePlayerPropensity(Finetuned(), matches, "p", "w1", {}).propensity,
      0.3);
}

TEST(ScorePlayerPropensity, CoverageAndPhaseErrors) {
  const std::vector<Match> matches = {TenMessagesThreeBad()};
  try {
    ScorePlayerPropensity(Finetuned(), matches, "nobody", "w1", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCoverage);
  }
  Checkpoint pre = Finetuned();
  pre.phase = Phase::kPretrained;
  try {
    ScorePlayerPropensity(pre, matches, "p", "w1", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPhase);
  }
}

Match RandomKeyedMatch(Rng& rng, int id) {
  static const std::vector<std::string> kWords = {"bad", "gg", "mid", "ok"};
  Match m;
  m.match_id = "r" + std::to_string(id);
  m.period_id = rng.Bernoulli(0.5) ? "w1" : "w2";
  const std::size_t n = 1 + rng.UniformInt(15);
  for (std::size_t i = 0; i < n; ++i) {
    const int player = static_cast<int>(rng.UniformInt(6));
    std::optional<int> label;
    if (rng.Bernoulli(0.3)) label = rng.Bernoulli(0.5) ? kToxic : kNonToxic;
    m.messages.push_back(Keyed(static_cast<int>(i), player,
                               "k" + std::to_string(player),
                               kWords[rng.UniformInt(kWords.size())], label));
  }
  return m;
}

TEST(ScoreAllPropensities, BoundedAndMonotone) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Match> matches;
    for (int k = 0; k < 4; ++k) matches.push_back(RandomKeyedMatch(rng, k));
    const auto records = ScoreAllPropensities(Finetuned(), matches, {});
    for (std::size_t i = 0; i < records.size(); ++i) {
      ASSERT_GE(records[i].propensity, 0.0);
      ASSERT_LE(records[i].propensity, 1.0);
      ASSERT_GT(records[i].n_scored_messages, 0u);
      if (i) {
        ASSERT_LT(std::tie(records[i - 1].player_key, records[i - 1].period_id),
                  std::tie(records[i].player_key, records[i].period_id));
      }
    }
    // Turning one unlabeled message toxic never lowers any propensity.
    std::vector<Match> worse = matches;
    for (ChatMessage& msg : worse[0].messages) {
      if (!msg.label) {
        msg.text = "bad";
        break;
      }
    }
    const auto after = ScoreAllPropensities(Finetuned(), worse, {});
    ASSERT_EQ(after.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      ASSERT_GE(after[i].propensity, records[i].propensity);
    }
  }
}

PlayerEvidence Evidence(const std::string& key, double propensity,
                        std::vector<int> labels) {
  PlayerEvidence e;
  e.record = {key, "w1", 5, propensity};
  e.labels = std::move(labels);
  return e;
}

TEST(FitThreshold, SeparablePlayersGiveMidpoint) {
  const ThresholdModel t = FitThreshold(
      {Evidence("a", 0.1, {0, 0, 0}), Evidence("b", 0.6, {1, 1}),
       Evidence("c", 0.2, {0})});
  EXPECT_DOUBLE_EQ(t.threshold, 0.4);
  EXPECT_DOUBLE_EQ(t.training_balanced_accuracy, 1.0);
  EXPECT_FALSE(t.degenerate);
}

TEST(FitThreshold, EqualPropensitiesAreDegenerate) {
  const ThresholdModel t =
      FitThreshold({Evidence("a", 0.3, {0, 1}), Evidence("b", 0.3, {0})});
  EXPECT_TRUE(t.degenerate);
  EXPECT_EQ(t.training_balanced_accuracy, 0.5);
  EXPECT_THROW(FitThreshold({Evidence("a", 0.3, {0, 0})}), Error);
}

TEST(FitThreshold, MatchesBruteForceScan) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PlayerEvidence> ev;
    const int players = 2 + static_cast<int>(rng.UniformInt(8));
    for (int p = 0; p < players; ++p) {
      std::vector<int> labels(1 + rng.UniformInt(5));
      for (int& y : labels) y = rng.Bernoulli(0.4) ? 1 : 0;
      ev.push_back(Evidence("p" + std::to_string(p),
                            static_cast<double>(rng.UniformInt(5)) / 4.0,
                            labels));
    }
    ev[0].labels.push_back(1);
    ev[1].labels.push_back(0);
    const ThresholdModel t = FitThreshold(ev);
    // Best over a fine grid of thresholds, including "nobody toxic".
    double best = 0.0;
    for (int g = -1; g <= 400; ++g) {
      const double thr = g / 400.0;
      std::vector<int> labels, preds;
      for (const auto& e : ev) {
        for (int y : e.labels) {
          labels.push_back(y);
          preds.push_back(e.record.propensity > thr ? 1 : 0);
        }
      }
      best = std::max(best, BalancedAccuracy(Confusion(labels, preds)));
    }
    if (t.degenerate) {
      EXPECT_EQ(best, 0.5);
    } else {
      EXPECT_NEAR(t.training_balanced_accuracy, best, 1e-12);
    }
  }
}

Match LabeledMatch(const std::string& id, const std::string& key, int label) {
  Match m;
  m.match_id = id;
  m.period_id = "w1";
  m.messages = {Keyed(0, 0, key, "x", label), Keyed(1, 0, key, "y", 0)};
  return m;
}

TEST(EvaluatePropensity, ConstantPropensityIsChance) {
  const std::vector<Match> test = {LabeledMatch("t1", "a", 1),
                                   LabeledMatch("t2", "b", 0)};
  const std::vector<PropensityRecord> records = {{"a", "w1", 3, 0.4},
                                                 {"b", "w1", 3, 0.4}};
  ThresholdModel t;
  t.threshold = 0.2;
  EXPECT_EQ(EvaluatePropensity(t, test, records, {}).balanced_accuracy, 0.5);
  t.threshold = 0.9;
  EXPECT_EQ(EvaluatePropensity(t, test, records, {}).balanced_accuracy, 0.5);
}

TEST(EvaluatePropensity, OverlapAndCoverageErrors) {
  const std::vector<Match> test = {LabeledMatch("t1", "a", 1),
                                   LabeledMatch("t2", "b", 0)};
  const std::vector<PropensityRecord> records = {{"a", "w1", 3, 0.9}};
  try {
    EvaluatePropensity({}, test, records, {"b", "z"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
  }
  try {
    EvaluatePropensity({}, test, records, {"z"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCoverage);
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
}

TEST(SplitByPlayers, SidesShareNoPlayer) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Match> matches;
    const int n = 4 + static_cast<int>(rng.UniformInt(20));
    for (int k = 0; k < n; ++k) {
      Match m;
      m.match_id = "s" + std::to_string(k);
      m.period_id = "w";
      for (int i = 0; i < 3; ++i) {
        const int p = static_cast<int>(rng.UniformInt(40));
        m.messages.push_back(
            Keyed(i, 0, "k" + std::to_string(p), "x", kNonToxic));
      }
      matches.push_back(m);
    }
    PlayerSplit split;
    try {
      split = SplitByPlayers(matches, 0.3, trial);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::kSizing);
      continue;
    }
    const std::set<std::string> test_ids(split.test_matches.begin(),
                                         split.test_matches.end());
    std::vector<Match> train, test;
    for (const Match& m : matches) {
      (test_ids.count(m.match_id) ? test : train).push_back(m);
    }
    ASSERT_EQ(train.size() + test.size(), matches.size());
    ASSERT_EQ(split.train_matches.size(), train.size());
    ASSERT_FALSE(test.empty());
    ASSERT_FALSE(train.empty());
    const auto a = LabeledPlayers(train);
    const auto b = LabeledPlayers(test);
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(both));
    ASSERT_TRUE(both.empty());
  }
}

TEST(SplitByPlayers, SingleGroupIsSizingError) {
  const std::vector<Match> matches = {LabeledMatch("a", "same", 1),
                                      LabeledMatch("b", "same", 0)};
  try {
    SplitByPlayers(matches, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSizing);
  }
}

TEST(PropensityTable, RoundTrip) {
  const std::vector<PropensityRecord> records = {{"a", "w1", 3, 1.0 / 3.0},
                                                 {"b", "w2", 1, 0.0}};
  std::ostringstream out;
  WritePropensityTable(out, records);
  std::istringstream in(out.str());
  EXPECT_EQ(ReadPropensityTable(in), records);
}

TEST(Propensity, PlantedPronePlayersAreRecovered) {
  // Prone players write "bad" often, in labeled and unlabeled matches alike.
  Rng rng(8);
  std::vector<Match> matches;
  for (int k = 0; k < 60; ++k) {
    Match m;
    m.match_id = "p" + std::to_string(k);
    m.period_id = "w1";
    const bool labeled = k % 2 == 0;
    for (int i = 0; i < 12; ++i) {
      const int p = static_cast<int>(rng.UniformInt(10));
      const bool prone = p < 3;
      const bool toxic = rng.Bernoulli(prone ? 0.9 : 0.01);
      std::optional<int> label;
      if (labeled) label = toxic ? kToxic : kNonToxic;
      m.messages.push_back(Keyed(i, p, "k" + std::to_string(p),
                                 toxic ? "bad" : "gg", label));
    }
    matches.push_back(m);
  }
  const auto records = ScoreAllPropensities(Finetuned(), matches, {});
  const ThresholdModel t = FitThreshold(CollectEvidence(matches, records));
  EXPECT_GT(t.training_balanced_accuracy, 0.9);
  EXPECT_GT(t.threshold, 0.1);
  EXPECT_LT(t.threshold, 0.7);
}

}  // namespace
}  // namespace toxctx
