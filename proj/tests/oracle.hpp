// Test-only oracles: the loss forward evaluated directly from the defining
// formulas in extended precision, central finite differences on top of it,
// and random-input generators. Nothing here shares code with the library's
// fused paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "costloss/loss.hpp"
#include "costloss/rng.hpp"

namespace oracle {

inline std::vector<long double> softmax_ld(const std::vector<double>& logits) {
  long double max_logit = logits[0];
  for (double z : logits) max_logit = std::max<long double>(max_logit, z);
  std::vector<long double> p(logits.size());
  long double sum = 0.0L;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<long double>(logits[i]) - max_logit);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline long double combined_loss_ld(const std::vector<double>& logits, const costloss::Target& y,
                                    const costloss::LossConfig& cfg) {
  const auto p = softmax_ld(logits);
  const int k = static_cast<int>(p.size());
  const long double eps = cfg.epsilon;

  long double ce = 0.0L;
  for (int i = 0; i < k; ++i) {
    const long double w = y.weight(i);
    if (w != 0.0L) ce -= w * std::log(std::max(p[i], eps));
  }
  if (cfg.variant == costloss::LossVariant::kCrossEntropy || cfg.alpha == 0.0) return ce;

  std::vector<long double> c(k, 0.0L);
  for (int i = 0; i < k; ++i) {
    const long double w = y.weight(i);
    if (w == 0.0L) continue;
    for (int j = 0; j < k; ++j) c[j] += w * cfg.penalty.at(i, j);
  }
  long double pen = 0.0L;
  if (cfg.variant == costloss::LossVariant::kCePlusBilinear) {
    for (int j = 0; j < k; ++j) pen += c[j] * p[j];
  } else {
    for (int j = 0; j < k; ++j) {
      if (c[j] == 0.0L) continue;
      pen -= c[j] * std::log(1.0L - std::min(p[j], 1.0L - eps));
    }
  }
  if (cfg.alpha == 1.0) return pen;
  return (1.0L - static_cast<long double>(cfg.alpha)) * ce +
         static_cast<long double>(cfg.alpha) * pen;
}

// Central differences of the extended-precision forward.
inline std::vector<double> fd_grad(const std::vector<double>& logits, const costloss::Target& y,
                                   const costloss::LossConfig& cfg, double h = 1e-5) {
  std::vector<double> g(logits.size());
  std::vector<double> z = logits;
  for (size_t m = 0; m < logits.size(); ++m) {
    z[m] = logits[m] + h;
    const long double up = combined_loss_ld(z, y, cfg);
    z[m] = logits[m] - h;
    const long double down = combined_loss_ld(z, y, cfg);
    z[m] = logits[m];
    g[m] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

// Relative error with a unit floor, the usual gradient-check metric.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

inline std::vector<double> random_logits(costloss::Rng& rng, int k, double range = 4.0) {
  std::vector<double> z(k);
  for (double& v : z) v = rng.uniform(-range, range);
  return z;
}

inline costloss::PenaltyMatrix random_penalty(costloss::Rng& rng, int k) {
  auto a = costloss::PenaltyMatrix::zero(k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      // Mix of zero and positive costs, like the matrices the harness builds.
      a.at(i, j) = rng.uniform() < 0.4 ? 0.0 : rng.uniform(0.1, 5.0);
    }
  return a;
}

inline std::vector<double> random_prob(costloss::Rng& rng, int k) {
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = rng.uniform(1e-3, 1.0);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline costloss::Target random_target(costloss::Rng& rng, int k) {
  if (rng.uniform() < 0.5)
    return costloss::Target::one_hot(static_cast<int>(rng.uniform_index(k)));
  return costloss::Target::dense(random_prob(rng, k));
}

}  // namespace oracle
