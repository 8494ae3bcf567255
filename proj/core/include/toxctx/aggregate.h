#ifndef TOXCTX_AGGREGATE_H_
#define TOXCTX_AGGREGATE_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "toxctx/metrics.h"

namespace toxctx {

// One test-set evaluation of one run after one finetuning epoch (0-based).
struct RunMetrics {
  std::string run_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  int epoch = 0;
  double lr = 0.0;
  MetricValues values;
};

// JSON lines with keys run_id, config_hash, seed, epoch, lr,
// balanced_accuracy, auc, precision, recall, f1.
std::string SerializeRunMetrics(const RunMetrics& record);
void AppendRunMetrics(std::ostream& out, const RunMetrics& record);
std::vector<RunMetrics> ParseRunMetrics(std::istream& in);
std::vector<RunMetrics> ReadRunMetricsFile(const std::string& path);

struct AggregateRow {
  std::string config_hash;
  double lr = 0.0;
  int epoch = 0;
  std::size_t n_runs = 0;
  MetricValues mean;
  MetricValues std;  // population standard deviation
};

// Groups by (config_hash, lr, epoch), sorted by that key. The result does
// not depend on record order.
std::vector<AggregateRow> AggregateRunMetrics(
    const std::vector<RunMetrics>& records);

// Highest mean balanced accuracy; ties go to the earlier epoch, then the
// lower learning rate. Rows must share one config_hash. Throws Error(kInput)
// when empty.
AggregateRow SelectBest(const std::vector<AggregateRow>& rows);

// Rows of one config, in aggregate order.
std::vector<AggregateRow> RowsForConfig(const std::vector<AggregateRow>& rows,
                                        const std::string& config_hash);

// CSV with a header; reals are printed with 17 significant digits so that
// ParseAggregateCsv reproduces every value exactly.
void WriteAggregateCsv(std::ostream& out, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> ParseAggregateCsv(std::istream& in);

// Shortest round-trippable decimal form of a double.
std::string FormatExact(double value);

}  // namespace toxctx

#endif  // TOXCTX_AGGREGATE_H_
