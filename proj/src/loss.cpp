#include "costloss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace costloss {

namespace {

constexpr double kProbSumTolerance = 1e-6;

void check_prob_invariants(const std::vector<double>& p, const char* who) {
  if (p.empty()) throw std::invalid_argument(std::string(who) + ": empty vector");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(std::string(who) + ": component " + std::to_string(v) +
                                  " outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance)
    throw std::invalid_argument(std::string(who) + ": components sum to " + std::to_string(sum) +
                                ", expected 1 within 1e-6");
}

void check_dims(int pk, const PenaltyMatrix& a) {
  if (a.k != pk)
    throw std::invalid_argument("loss: penalty matrix is " + std::to_string(a.k) + "x" +
                                std::to_string(a.k) + " but probability vector has length " +
                                std::to_string(pk));
}

void check_target_dims(int pk, const Target& y) {
  if (y.is_one_hot()) {
    if (y.label() >= pk)
      throw std::invalid_argument("loss: one-hot label " + std::to_string(y.label()) +
                                  " outside [0, " + std::to_string(pk) + ")");
  } else if (static_cast<int>(y.dense_values().size()) != pk) {
    throw std::invalid_argument("loss: target length " +
                                std::to_string(y.dense_values().size()) +
                                " != probability length " + std::to_string(pk));
  }
}

// c_j = sum_i y_i a_ij; for one-hot y this is row label of A.
std::vector<double> penalty_row(const Target& y, const PenaltyMatrix& a) {
  std::vector<double> c(a.k, 0.0);
  if (y.is_one_hot()) {
    const int i = y.label();
    for (int j = 0; j < a.k; ++j) c[j] = a.at(i, j);
  } else {
    const auto& q = y.dense_values();
    for (int i = 0; i < a.k; ++i) {
      const double yi = q[i];
      if (yi == 0.0) continue;
      for (int j = 0; j < a.k; ++j) c[j] += yi * a.at(i, j);
    }
  }
  return c;
}

}  // namespace

ProbVector ProbVector::from(std::vector<double> values) {
  check_prob_invariants(values, "ProbVector");
  ProbVector p;
  p.p = std::move(values);
  return p;
}

Target Target::one_hot(int label) {
  if (label < 0) throw std::invalid_argument("Target::one_hot: negative label");
  Target t;
  t.label_ = label;
  return t;
}

Target Target::dense(std::vector<double> q) {
  check_prob_invariants(q, "Target::dense");
  Target t;
  t.dense_sum_ = 0.0;
  for (double v : q) t.dense_sum_ += v;
  t.dense_ = std::move(q);
  return t;
}

int Target::label() const {
  if (!is_one_hot()) throw std::logic_error("Target::label: target is dense");
  return label_;
}

const std::vector<double>& Target::dense_values() const {
  if (is_one_hot()) throw std::logic_error("Target::dense_values: target is one-hot");
  return dense_;
}

double Target::weight(int i) const { return is_one_hot() ? (i == label_ ? 1.0 : 0.0) : dense_[i]; }

double Target::sum() const { return is_one_hot() ? 1.0 : dense_sum_; }

void validate_loss_config(const LossConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("LossConfig: alpha " + std::to_string(cfg.alpha) +
                                " outside [0, 1]");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5))
    throw std::invalid_argument("LossConfig: epsilon must be in (0, 0.5)");
  if (cfg.variant != LossVariant::kCrossEntropy) {
    const auto violations = validate_penalty(cfg.penalty);
    if (!violations.empty())
      throw std::invalid_argument("LossConfig: penalty matrix violation at (" +
                                  std::to_string(violations[0].row) + ", " +
                                  std::to_string(violations[0].col) + "): " +
                                  violations[0].what);
  }
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double max_logit = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
    max_logit = std::max(max_logit, z);
  }
  ProbVector out;
  out.p.resize(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out.p[i] = std::exp(logits[i] - max_logit);
    sum += out.p[i];
  }
  for (double& v : out.p) v /= sum;
  return out;
}

double cross_entropy(const ProbVector& p, const Target& y, double epsilon) {
  check_target_dims(p.size(), y);
  if (y.is_one_hot()) return -std::log(std::max(p[y.label()], epsilon));
  const auto& q = y.dense_values();
  double loss = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (q[i] == 0.0) continue;
    loss -= q[i] * std::log(std::max(p[i], epsilon));
  }
  return loss;
}

double bilinear_loss(const ProbVector& p, const Target& y, const PenaltyMatrix& a) {
  check_dims(p.size(), a);
  check_target_dims(p.size(), y);
  if (y.is_one_hot()) {
    const int i = y.label();
    double loss = 0.0;
    for (int j = 0; j < a.k; ++j) loss += a.at(i, j) * p[j];
    return loss;
  }
  const auto c = penalty_row(y, a);
  double loss = 0.0;
  for (int j = 0; j < a.k; ++j) loss += c[j] * p[j];
  return loss;
}

double log_bilinear_loss(const ProbVector& p, const Target& y, const PenaltyMatrix& a,
                         double epsilon) {
  check_dims(p.size(), a);
  check_target_dims(p.size(), y);
  const auto c = penalty_row(y, a);
  double loss = 0.0;
  for (int j = 0; j < a.k; ++j) {
    if (c[j] == 0.0) continue;
    loss -= c[j] * std::log(1.0 - std::min(p[j], 1.0 - epsilon));
  }
  return loss;
}

double combined_loss(const ProbVector& p, const Target& y, const LossConfig& cfg) {
  validate_loss_config(cfg);
  const bool ce_only = cfg.variant == LossVariant::kCrossEntropy || cfg.alpha == 0.0;
  if (ce_only) return cross_entropy(p, y, cfg.epsilon);

  const double penalty_term = cfg.variant == LossVariant::kCePlusBilinear
                                  ? bilinear_loss(p, y, cfg.penalty)
                                  : log_bilinear_loss(p, y, cfg.penalty, cfg.epsilon);
  if (cfg.alpha == 1.0) return penalty_term;
  return (1.0 - cfg.alpha) * cross_entropy(p, y, cfg.epsilon) + cfg.alpha * penalty_term;
}

double combined_loss_logits(std::span<const double> logits, const Target& y,
                            const LossConfig& cfg) {
  return combined_loss(softmax(logits), y, cfg);
}

namespace {

// g_ce = S*p - y where S = sum of target weights (1 for valid targets);
// exact one-hot identity p - e_label falls out bitwise.
void add_ce_grad(const ProbVector& p, const Target& y, double scale, std::vector<double>& g) {
  const double s = y.sum();
  for (int m = 0; m < p.size(); ++m) g[m] += scale * (s * p[m] - y.weight(m));
}

// Softmax-Jacobian contraction of dL/dp: g_m = p_m (d_m - sum_j d_j p_j).
void add_chain_grad(const ProbVector& p, const std::vector<double>& dldp, double scale,
                    std::vector<double>& g) {
  double dot = 0.0;
  for (int j = 0; j < p.size(); ++j) dot += dldp[j] * p[j];
  for (int m = 0; m < p.size(); ++m) g[m] += scale * p[m] * (dldp[m] - dot);
}

}  // namespace

LossValueGrad loss_value_and_grad(std::span<const double> logits, const Target& y,
                                  const LossConfig& cfg) {
  validate_loss_config(cfg);
  const ProbVector p = softmax(logits);
  check_target_dims(p.size(), y);

  LossValueGrad out;
  out.grad.assign(p.size(), 0.0);

  const bool ce_only = cfg.variant == LossVariant::kCrossEntropy || cfg.alpha == 0.0;
  if (ce_only) {
    out.value = cross_entropy(p, y, cfg.epsilon);
    add_ce_grad(p, y, 1.0, out.grad);
    return out;
  }

  check_dims(p.size(), cfg.penalty);
  const auto c = penalty_row(y, cfg.penalty);
  std::vector<double> dldp(p.size(), 0.0);
  double penalty_term = 0.0;
  if (cfg.variant == LossVariant::kCePlusBilinear) {
    for (int j = 0; j < p.size(); ++j) {
      penalty_term += c[j] * p[j];
      dldp[j] = c[j];
    }
  } else {
    const double cap = 1.0 - cfg.epsilon;
    for (int j = 0; j < p.size(); ++j) {
      if (c[j] == 0.0) continue;
      if (p[j] < cap) {
        penalty_term -= c[j] * std::log(1.0 - p[j]);
        dldp[j] = c[j] / (1.0 - p[j]);
      } else {
        // Clamped coordinate: forward is constant here, derivative 0.
        penalty_term -= c[j] * std::log(1.0 - cap);
      }
    }
  }

  if (cfg.alpha == 1.0) {
    out.value = penalty_term;
    add_chain_grad(p, dldp, 1.0, out.grad);
    return out;
  }
  out.value = (1.0 - cfg.alpha) * cross_entropy(p, y, cfg.epsilon) + cfg.alpha * penalty_term;
  add_ce_grad(p, y, 1.0 - cfg.alpha, out.grad);
  add_chain_grad(p, dldp, cfg.alpha, out.grad);
  return out;
}

std::vector<double> loss_grad_logits(std::span<const double> logits, const Target& y,
                                     const LossConfig& cfg) {
  return loss_value_and_grad(logits, y, cfg).grad;
}

}  // namespace costloss
