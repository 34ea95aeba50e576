#pragma once

// ROC AUC (Mann-Whitney form, ties count 1/2) and confusion matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "onh/error.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

// Probability that a random positive outranks a random negative. Undefined
// (nullopt) when either group is empty.
inline std::optional<double> roc_auc(std::vector<ScoredLabel> s) {
  std::size_t n_pos = 0;
  for (const auto& x : s) n_pos += x.positive;
  const std::size_t n_neg = s.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  for (const auto& x : s) {
    if (!std::isfinite(x.score)) throw ValidationError("roc_auc: non-finite score");
  }
  std::sort(s.begin(), s.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score < b.score; });
  // Rank-sum with midranks for ties.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < s.size() && s[j].score == s[i].score) pos_in_group += s[j++].positive;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    pos_rank_sum += midrank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

using ConfusionMatrix = std::array<std::array<std::size_t, kClassCount>, kClassCount>;  // [truth][predicted]

struct ClassificationMetrics {
  std::array<std::optional<double>, kClassCount> class_auc{};
  double micro_auc = 0.0;
  ConfusionMatrix confusion{};
  double accuracy = 0.0;
};

inline std::size_t argmax4(const std::array<double, kClassCount>& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kClassCount; ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

// One-vs-rest AUC per class on that class's probability, and the
// micro-average pooling every (binarized label, score) pair.
inline ClassificationMetrics classification_metrics(const std::vector<std::array<double, kClassCount>>& probs,
                                                    const std::vector<ClassLabel>& truth) {
  if (probs.empty() || probs.size() != truth.size()) {
    throw ValidationError("classification_metrics: need matching nonempty score and label lists");
  }
  ClassificationMetrics m;
  std::vector<ScoredLabel> pooled;
  pooled.reserve(probs.size() * kClassCount);
  std::size_t correct = 0;
  for (int c = 0; c < kClassCount; ++c) {
    std::vector<ScoredLabel> one;
    one.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
      one.push_back({probs[i][c], class_code(truth[i]) == c});
      pooled.push_back(one.back());
    }
    m.class_auc[c] = roc_auc(std::move(one));
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto pred = argmax4(probs[i]);
    ++m.confusion[class_code(truth[i])][pred];
    correct += pred == static_cast<std::size_t>(class_code(truth[i]));
  }
  const auto micro = roc_auc(std::move(pooled));
  if (!micro) throw ValidationError("classification_metrics: micro-average AUC undefined");
  m.micro_auc = *micro;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(probs.size());
  return m;
}

}  // namespace onh
