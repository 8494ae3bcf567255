#include "toxctx/metrics.h"

#include <algorithm>
#include <numeric>

#include "toxctx/error.h"

namespace toxctx {

namespace {

void CheckBinary(int v) {
  if (v != 0 && v != 1) throw Error(ErrorKind::kInput, "labels must be 0 or 1");
}

}  // namespace

ConfusionCounts Confusion(const std::vector<int>& labels,
                          const std::vector<int>& predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorKind::kInput, "labels and predictions differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CheckBinary(labels[i]);
    CheckBinary(predictions[i]);
    if (labels[i] == 1) {
      ++(predictions[i] == 1 ? c.tp : c.fn);
    } else {
      ++(predictions[i] == 1 ? c.fp : c.tn);
    }
  }
  return c;
}

double BalancedAccuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw Error(ErrorKind::kUndefinedMetric,
                "balanced accuracy needs both classes");
  }
  const double tpr =
      static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double tnr =
      static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (tpr + tnr);
}

double RocAuc(const std::vector<double>& scores,
              const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kInput, "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Twice the Mann-Whitney count stays integral with half-credit ties.
  std::uint64_t twice_wins = 0;
  std::uint64_t negatives_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      CheckBinary(labels[order[j]]);
      ++(labels[order[j]] == 1 ? pos : neg);
      ++j;
    }
    twice_wins += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::kUndefinedMetric, "AUC needs both classes");
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

PrecisionRecallF1 ComputePrecisionRecallF1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  if (c.tp + c.fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

double Pabak(const std::vector<int>& labels_a,
             const std::vector<int>& labels_b) {
  if (labels_a.empty() || labels_a.size() != labels_b.size()) {
    throw Error(ErrorKind::kInput,
                "annotations must be non-empty and of equal length");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    CheckBinary(labels_a[i]);
    CheckBinary(labels_b[i]);
    if (labels_a[i] == labels_b[i]) ++agree;
  }
  const double p_o =
      static_cast<double>(agree) / static_cast<double>(labels_a.size());
  return 2.0 * p_o - 1.0;
}

MetricValues EvaluateProbabilities(const std::vector<double>& probabilities,
                                   const std::vector<int>& labels,
                                   double threshold) {
  std::vector<int> predictions;
  predictions.reserve(probabilities.size());
  for (double p : probabilities) predictions.push_back(HardLabel(p, threshold));
  const ConfusionCounts c = Confusion(labels, predictions);
  const PrecisionRecallF1 prf = ComputePrecisionRecallF1(c);
  MetricValues m;
  m.balanced_accuracy = BalancedAccuracy(c);
  m.auc = RocAuc(probabilities, labels);
  m.precision = prf.precision;
  m.recall = prf.recall;
  m.f1 = prf.f1;
  return m;
}

}  // namespace toxctx
