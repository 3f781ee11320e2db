#include "costloss/metrics.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace costloss {

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

int64_t ConfusionMatrix::diagonal_sum() const {
  int64_t sum = 0;
  for (int i = 0; i < k; ++i) sum += at(i, i);
  return sum;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int k) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion: " + std::to_string(preds.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  if (k < 1) throw std::invalid_argument("confusion: class count must be >= 1");
  ConfusionMatrix cm;
  cm.k = k;
  cm.counts.assign(static_cast<size_t>(k) * k, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || preds[i] < 0 || preds[i] >= k)
      throw std::invalid_argument("confusion: index out of range at position " +
                                  std::to_string(i));
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

double total_error(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("total_error: empty confusion matrix");
  return static_cast<double>(total - cm.diagonal_sum()) / static_cast<double>(total);
}

int64_t masked_error_count(const ConfusionMatrix& cm, const ErrorMask& mask) {
  if (mask.k != cm.k)
    throw std::invalid_argument("masked_error_count: mask is " + std::to_string(mask.k) +
                                "x" + std::to_string(mask.k) + " but confusion matrix is " +
                                std::to_string(cm.k) + "x" + std::to_string(cm.k));
  int64_t count = 0;
  for (int i = 0; i < cm.k; ++i)
    for (int j = 0; j < cm.k; ++j)
      if (mask.at(i, j)) count += cm.at(i, j);
  return count;
}

double coarse_error(const ConfusionMatrix& cm, const SuperClassMap& map) {
  if (map.k() != cm.k)
    throw std::invalid_argument("coarse_error: map covers " + std::to_string(map.k()) +
                                " classes but confusion matrix has " + std::to_string(cm.k));
  const int64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("coarse_error: empty confusion matrix");
  int64_t coarse_errors = 0;
  for (int i = 0; i < cm.k; ++i)
    for (int j = 0; j < cm.k; ++j)
      if (map.super_of(i) != map.super_of(j)) coarse_errors += cm.at(i, j);
  return static_cast<double>(coarse_errors) / static_cast<double>(total);
}

std::optional<double> within_superclass_fraction(const ConfusionMatrix& cm,
                                                 const SuperClassMap& map) {
  if (map.k() != cm.k)
    throw std::invalid_argument("within_superclass_fraction: map covers " +
                                std::to_string(map.k()) + " classes but confusion matrix has " +
                                std::to_string(cm.k));
  int64_t errors = 0;
  int64_t within = 0;
  for (int i = 0; i < cm.k; ++i)
    for (int j = 0; j < cm.k; ++j) {
      if (i == j) continue;
      errors += cm.at(i, j);
      if (map.super_of(i) == map.super_of(j)) within += cm.at(i, j);
    }
  if (errors == 0) return std::nullopt;
  return static_cast<double>(within) / static_cast<double>(errors);
}

MeanCi ci95(std::span<const double> samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("ci95: need at least 2 samples, got " +
                                std::to_string(samples.size()));
  const double m = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= m;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  return {mean, 1.96 * sd / std::sqrt(m)};
}

void save_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_confusion_csv: cannot open " + path);
  for (int i = 0; i < cm.k; ++i) {
    for (int j = 0; j < cm.k; ++j) {
      if (j) out << ',';
      out << cm.at(i, j);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_confusion_csv: write failed for " + path);
}

}  // namespace costloss
