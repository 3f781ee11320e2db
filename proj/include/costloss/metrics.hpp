// metrics.hpp
//
// Confusion-matrix construction and the evaluation quantities reported by
// the experiment harness: total error, masked-zone error count, coarse
// (super-class) error, within-super-class error fraction, and mean with a
// 95% normal-approximation confidence interval.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costloss/penalty.hpp"

namespace costloss {

// Cell (i, j) counts examples with true label i predicted as j.
struct ConfusionMatrix {
  int k = 0;
  std::vector<int64_t> counts;  // row-major, k*k

  int64_t at(int i, int j) const { return counts[static_cast<size_t>(i) * k + j]; }
  int64_t& at(int i, int j) { return counts[static_cast<size_t>(i) * k + j]; }
  int64_t total() const;
  int64_t diagonal_sum() const;
  int64_t error_count() const { return total() - diagonal_sum(); }
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int k);

// Off-diagonal count / total count.
double total_error(const ConfusionMatrix& cm);

// Sum of counts over the mask's true cells.
int64_t masked_error_count(const ConfusionMatrix& cm, const ErrorMask& mask);

// Fraction of examples whose predicted super-class differs from the true one.
double coarse_error(const ConfusionMatrix& cm, const SuperClassMap& map);

// Among misclassified examples, the fraction whose prediction shares the
// true super-class. Undefined (nullopt) when there are no errors.
std::optional<double> within_superclass_fraction(const ConfusionMatrix& cm,
                                                 const SuperClassMap& map);

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sd / sqrt(m), sd the sample standard deviation
};

// Requires at least 2 samples.
MeanCi ci95(std::span<const double> samples);

void save_confusion_csv(const ConfusionMatrix& cm, const std::string& path);

}  // namespace costloss
