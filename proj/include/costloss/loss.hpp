// loss.hpp
//
// Forward values and analytic logit-gradients for cross-entropy, the
// cost-weighted bilinear loss, the log-bilinear loss, and their
// alpha-combined forms evaluated on softmax outputs.
//
// Gradient convention: losses are evaluated per example; training reduces
// by the mean over a batch. All loss math runs in double precision. Log
// arguments are clamped to [epsilon, 1 - epsilon]; the stored probability
// vector is never mutated. Everything here is a pure function of immutable
// inputs and safe to call concurrently.

#pragma once

#include <span>
#include <vector>

#include "costloss/penalty.hpp"

namespace costloss {

// Length-k probability vector: components in [0, 1], summing to 1 within
// 1e-6.
struct ProbVector {
  std::vector<double> p;

  int size() const { return static_cast<int>(p.size()); }
  double operator[](int i) const { return p[i]; }

  // Validates the invariants; throws std::invalid_argument on violation.
  static ProbVector from(std::vector<double> values);
};

// Training target: either a one-hot label (fast path) or a dense
// distribution over the k classes.
class Target {
 public:
  static Target one_hot(int label);
  static Target dense(std::vector<double> q);  // validated as a ProbVector

  bool is_one_hot() const { return label_ >= 0; }
  int label() const;                            // one-hot form only
  const std::vector<double>& dense_values() const;  // dense form only
  double weight(int i) const;                   // y_i in either form
  double sum() const;                           // exactly 1.0 for one-hot

 private:
  Target() = default;
  int label_ = -1;
  std::vector<double> dense_;
  double dense_sum_ = 0.0;
};

enum class LossVariant {
  kCrossEntropy,       // plain CE; penalty matrix unused
  kCePlusBilinear,     // (1-alpha) CE + alpha y^T A p
  kCePlusLogBilinear,  // (1-alpha) CE - alpha y^T A log(1 - p)
};

struct LossConfig {
  LossVariant variant = LossVariant::kCrossEntropy;
  double alpha = 0.0;
  PenaltyMatrix penalty;  // ignored for kCrossEntropy
  double epsilon = 1e-7;
};

// Throws if alpha is outside [0,1], epsilon outside (0, 0.5), or the
// penalty matrix fails validation when the variant uses it.
void validate_loss_config(const LossConfig& cfg);

// Numerically stable (max-subtracted) softmax. Rejects non-finite inputs.
ProbVector softmax(std::span<const double> logits);

// -sum_i y_i log(p_i) with p clamped to >= epsilon inside the log.
double cross_entropy(const ProbVector& p, const Target& y, double epsilon = 1e-7);

// y^T A p: expected penalty of the predicted distribution under the target.
double bilinear_loss(const ProbVector& p, const Target& y, const PenaltyMatrix& a);

// -y^T A log(1 - p), element-wise log, p clamped to <= 1 - epsilon.
double log_bilinear_loss(const ProbVector& p, const Target& y, const PenaltyMatrix& a,
                         double epsilon = 1e-7);

// (1-alpha) CE + alpha * penalty term per the variant. alpha = 0 is
// bit-identical to cross_entropy, alpha = 1 to the pure penalty term; the
// penalty matrix is never touched when the CE path alone is active.
double combined_loss(const ProbVector& p, const Target& y, const LossConfig& cfg);

// combined_loss of softmax(logits), fused for numerical stability.
double combined_loss_logits(std::span<const double> logits, const Target& y,
                            const LossConfig& cfg);

// Analytic d(combined_loss(softmax(z)))/dz. Matches central finite
// differences of combined_loss_logits to relative error <= 1e-5 away from
// the clamp boundaries.
std::vector<double> loss_grad_logits(std::span<const double> logits, const Target& y,
                                     const LossConfig& cfg);

// Fused value + gradient, one softmax evaluation.
struct LossValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};
LossValueGrad loss_value_and_grad(std::span<const double> logits, const Target& y,
                                  const LossConfig& cfg);

}  // namespace costloss
