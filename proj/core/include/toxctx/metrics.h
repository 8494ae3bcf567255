#ifndef TOXCTX_METRICS_H_
#define TOXCTX_METRICS_H_

#include <cstdint>
#include <vector>

namespace toxctx {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;

  friend bool operator==(const ConfusionCounts&,
                         const ConfusionCounts&) = default;
};

// Counts against binary labels (1 = toxic, the positive class).
ConfusionCounts Confusion(const std::vector<int>& labels,
                          const std::vector<int>& predictions);

// Hard label of a toxicity probability: toxic iff strictly above threshold.
inline int HardLabel(double probability, double threshold = 0.5) {
  return probability > threshold ? 1 : 0;
}

// Mean of the two per-class recalls. Throws Error(kUndefinedMetric) when
// either class is absent.
double BalancedAccuracy(const ConfusionCounts& c);

// Probability that a random positive outscores a random negative, ties
// counting one half. Exact: pairs are counted as integers. Throws
// Error(kUndefinedMetric) unless both classes are present.
double RocAuc(const std::vector<double>& scores, const std::vector<int>& labels);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the denominator was zero and 0 was reported instead.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

PrecisionRecallF1 ComputePrecisionRecallF1(const ConfusionCounts& c);

// Prevalence and bias adjusted kappa for two binary annotations:
// 2 * observed agreement - 1. Throws Error(kInput) on empty or mismatched
// inputs.
double Pabak(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

// Every metric recorded per run and epoch.
struct MetricValues {
  double balanced_accuracy = 0.0;
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Pooled over all messages: hard labels at `threshold` for the confusion
// based metrics, raw probabilities for AUC.
MetricValues EvaluateProbabilities(const std::vector<double>& probabilities,
                                   const std::vector<int>& labels,
                                   double threshold = 0.5);

}  // namespace toxctx

#endif  // TOXCTX_METRICS_H_
