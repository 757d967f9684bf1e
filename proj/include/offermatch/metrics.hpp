#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "offermatch/common.hpp"

namespace offermatch {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricSet {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const MetricSet&) const = default;
};

inline ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> gold) {
  if (predictions.size() != gold.size()) {
    throw Error("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(gold.size()) + " gold labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] == Label::kMatch;
    const bool g = gold[i] == Label::kMatch;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Positive-class precision, recall and F1; empty denominators give 0.
inline MetricSet prf1(const ConfusionCounts& c) {
  MetricSet m;
  m.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

// Component-wise mean; F1 is averaged directly, not re-derived. Accumulates
// offsets from the first run so identical runs average to exactly that run.
inline MetricSet average_runs(std::span<const MetricSet> runs) {
  if (runs.empty()) throw Error("average_runs: no runs");
  const MetricSet& base = runs.front();
  MetricSet d;
  for (const auto& r : runs) {
    d.precision += r.precision - base.precision;
    d.recall += r.recall - base.recall;
    d.f1 += r.f1 - base.f1;
  }
  const auto n = static_cast<double>(runs.size());
  return {base.precision + d.precision / n, base.recall + d.recall / n, base.f1 + d.f1 / n};
}

}  // namespace offermatch
