#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "toxctx/aggregate.h"
#include "toxctx/error.h"
#include "toxctx/rng.h"

namespace toxctx {
namespace {

RunMetrics Record(const std::string& hash, double lr, int epoch,
                  std::uint64_t seed, double ba) {
  RunMetrics r;
  r.config_hash = hash;
  r.lr = lr;
  r.epoch = epoch;
  r.seed = seed;
  r.run_id = hash + "-" + FormatExact(lr) + "-" + std::to_string(seed);
  r.values = {ba, ba * 0.9, 0.25, 0.5, 1.0 / 3.0};
  return r;
}

AggregateRow Row(double lr, int epoch, double mean_ba) {
  AggregateRow r;
  r.config_hash = "h";
  r.lr = lr;
  r.epoch = epoch;
  r.n_runs = 1;
  r.mean.balanced_accuracy = mean_ba;
  return r;
}

TEST(RunMetricsLog, ExactKeysAndRoundTrip) {
  const RunMetrics r = Record("abc", 2e-5, 3, 12345678901234567ull, 0.1 + 0.2);
  const std::string line = SerializeRunMetrics(r);
  for (const char* key : {"\"run_id\"", "\"config_hash\"", "\"seed\"",
                          "\"epoch\"", "\"lr\"", "\"balanced_accuracy\"",
                          "\"auc\"", "\"precision\"", "\"recall\"", "\"f1\""}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
  std::ostringstream out;
  AppendRunMetrics(out, r);
  AppendRunMetrics(out, r);
  std::istringstream in(out.str());
  const std::vector<RunMetrics> back = ParseRunMetrics(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].seed, r.seed);
  EXPECT_EQ(back[0].values.balanced_accuracy, r.values.balanced_accuracy);
  EXPECT_EQ(back[0].values.f1, r.values.f1);
  EXPECT_EQ(back[1].lr, 2e-5);
}

TEST(RunMetricsLog, MalformedLineNamesLine) {
  std::istringstream in(SerializeRunMetrics(Record("h", 1e-5, 0, 1, 0.5)) +
                        "\n{\"run_id\":\"a\"\n");
  try {
    ParseRunMetrics(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(AggregateRunMetrics, SingleRecordHasZeroStd) {
  const auto rows = AggregateRunMetrics({Record("h", 1e-5, 0, 1, 0.7)});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].mean.balanced_accuracy, 0.7);
  EXPECT_EQ(rows[0].std.balanced_accuracy, 0.0);
  EXPECT_EQ(rows[0].n_runs, 1u);
}

TEST(AggregateRunMetrics, PopulationStdOfTwo) {
  const auto rows = AggregateRunMetrics(
      {Record("h", 1e-5, 0, 1, 0.7), Record("h", 1e-5, 0, 2, 0.8)});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].mean.balanced_accuracy, 0.75, 1e-12);
  EXPECT_NEAR(rows[0].std.balanced_accuracy, 0.05, 1e-12);
}

TEST(AggregateRunMetrics, GroupsByEpoch) {
  const auto rows = AggregateRunMetrics(
      {Record("h", 1e-5, 0, 1, 0.7), Record("h", 1e-5, 1, 1, 0.8)});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].epoch, 0);
  EXPECT_EQ(rows[1].epoch, 1);
}

TEST(AggregateRunMetrics, IndependentOfRecordOrder) {
  Rng rng(8);
  std::vector<RunMetrics> records;
  for (int s = 0; s < 10; ++s) {
    for (double lr : {5e-6, 1e-5}) {
      for (int e = 0; e < 3; ++e) {
        records.push_back(Record("h", lr, e, s, rng.Uniform()));
      }
    }
  }
  std::ostringstream a, b;
  WriteAggregateCsv(a, AggregateRunMetrics(records));
  rng.Shuffle(records);
  WriteAggregateCsv(b, AggregateRunMetrics(records));
  EXPECT_EQ(a.str(), b.str());
}

TEST(AggregateCsv, RoundTripIsExact) {
  std::vector<RunMetrics> records;
  Rng rng(9);
  for (int s = 0; s < 4; ++s) {
    records.push_back(Record("h", 2e-5, 0, s, rng.Uniform()));
  }
  const auto rows = AggregateRunMetrics(records);
  std::ostringstream out;
  WriteAggregateCsv(out, rows);
  std::istringstream in(out.str());
  const auto back = ParseAggregateCsv(in);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(back[0].mean.balanced_accuracy, rows[0].mean.balanced_accuracy);
  EXPECT_EQ(back[0].std.auc, rows[0].std.auc);
  EXPECT_EQ(back[0].lr, rows[0].lr);
}

TEST(SelectBest, SingleRowIsItself) {
  const AggregateRow best = SelectBest({Row(1e-5, 4, 0.6)});
  EXPECT_EQ(best.epoch, 4);
  EXPECT_EQ(best.lr, 1e-5);
}

TEST(SelectBest, ArgmaxOverEpochs) {
  const AggregateRow best =
      SelectBest({Row(1e-5, 0, 0.60), Row(1e-5, 1, 0.70), Row(1e-5, 2, 0.65)});
  EXPECT_EQ(best.epoch, 1);
}

TEST(SelectBest, BestLearningRateWins) {
  const AggregateRow best =
      SelectBest({Row(1e-5, 0, 0.70), Row(1e-5, 1, 0.72), Row(2e-5, 0, 0.75),
                  Row(2e-5, 1, 0.74)});
  EXPECT_EQ(best.lr, 2e-5);
  EXPECT_EQ(best.epoch, 0);
}

TEST(SelectBest, TiesGoToEarlierEpochThenLowerRate) {
  EXPECT_EQ(SelectBest({Row(1e-5, 3, 0.7), Row(2e-5, 1, 0.7)}).epoch, 1);
  const AggregateRow tie = SelectBest({Row(2e-5, 1, 0.7), Row(1e-5, 1, 0.7)});
  EXPECT_EQ(tie.lr, 1e-5);
  // Input order does not matter.
  std::vector<AggregateRow> rows = {Row(5e-6, 2, 0.7), Row(1e-5, 2, 0.7),
                                    Row(2e-5, 2, 0.7), Row(2e-5, 3, 0.6)};
  for (int k = 0; k < 4; ++k) {
    std::rotate(rows.begin(), rows.begin() + 1, rows.end());
    EXPECT_EQ(SelectBest(rows).lr, 5e-6);
  }
}

TEST(SelectBest, RejectsEmptyAndMixedConfigs) {
  EXPECT_THROW(SelectBest({}), Error);
  AggregateRow other = Row(1e-5, 0, 0.5);
  other.config_hash = "g";
  EXPECT_THROW(SelectBest({Row(1e-5, 0, 0.5), other}), Error);
}

TEST(FormatExact, ShortestRoundTrip) {
  EXPECT_EQ(FormatExact(2e-5), "2e-05");
  EXPECT_EQ(FormatExact(0.001), "0.001");
  EXPECT_EQ(std::stod(FormatExact(0.1 + 0.2)), 0.1 + 0.2);
}

}  // namespace
}  // namespace toxctx
