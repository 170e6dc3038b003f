#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathcast {

// Confusion counts and the derived scores, with the convention that any
// 0/0 ratio is reported as 0.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_pos = 0.0;
  double f1_neg = 0.0;
  double macro_f1 = 0.0;
};

inline MetricsReport compute_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(predicted.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw std::invalid_argument("compute_metrics: nothing to score");
  MetricsReport m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] != 0 && predicted[i] != 1) {
      throw std::invalid_argument("compute_metrics: prediction not binary at " +
                                  std::to_string(i));
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("compute_metrics: label not binary at " + std::to_string(i));
    }
    if (predicted[i] == 1) {
      (labels[i] == 1 ? m.tp : m.fp) += 1;
    } else {
      (labels[i] == 1 ? m.fn : m.tn) += 1;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  auto f1 = [](double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1_pos = f1(m.precision, m.recall);
  const double precision_neg = ratio(m.tn, m.tn + m.fn);
  const double recall_neg = ratio(m.tn, m.tn + m.fp);
  m.f1_neg = f1(precision_neg, recall_neg);
  m.macro_f1 = 0.5 * (m.f1_pos + m.f1_neg);
  return m;
}

}  // namespace pathcast
