#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "costloss/loss.hpp"
#include "costloss/rng.hpp"
#include "oracle.hpp"

using namespace costloss;

namespace {

PenaltyMatrix row_penalty_015() {
  // Row 0 of A = [0, 1, 5]; the rest mirrored to keep the matrix valid.
  auto a = PenaltyMatrix::zero(3);
  a.at(0, 1) = 1.0;
  a.at(0, 2) = 5.0;
  a.at(1, 0) = 1.0;
  a.at(2, 0) = 5.0;
  return a;
}

}  // namespace

TEST_CASE("softmax") {
  SUBCASE("symmetry") {
    const auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("large logits do not overflow") {
    const auto p = softmax(std::vector<double>{1000.0, 0.0, 0.0});
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(p[1]));
    CHECK(p[1] == 0.0);
  }
  SUBCASE("direct-evaluation oracle at [1,2,3]") {
    const std::vector<double> logits{1.0, 2.0, 3.0};
    const auto p = softmax(logits);
    const auto expect = oracle::softmax_ld(logits);
    for (int i = 0; i < 3; ++i)
      CHECK(p[i] == doctest::Approx(static_cast<double>(expect[i])).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(0.09003057317038046).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.24472847105479764).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(0.66524095577482190).epsilon(1e-14));
  }
  SUBCASE("non-finite input rejected") {
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), std::invalid_argument);
  }
  SUBCASE("output satisfies the probability invariants") {
    Rng rng(99);
    for (int t = 0; t < 50; ++t) {
      const auto p = softmax(oracle::random_logits(rng, 2 + t % 9, 30.0));
      CHECK_NOTHROW(ProbVector::from(p.p));
    }
  }
}

TEST_CASE("ProbVector validation") {
  CHECK_THROWS_AS(ProbVector::from({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ProbVector::from({-0.1, 1.1}), std::invalid_argument);
  CHECK_NOTHROW(ProbVector::from({0.25, 0.75}));
}

TEST_CASE("cross_entropy") {
  SUBCASE("certain correct prediction costs nothing") {
    const auto p = ProbVector::from({0.0, 0.0, 1.0});
    CHECK(cross_entropy(p, Target::one_hot(2)) == 0.0);
  }
  SUBCASE("halved mass costs ln 2") {
    const auto p = ProbVector::from({0.5, 0.25, 0.25});
    CHECK(cross_entropy(p, Target::one_hot(0)) ==
          doctest::Approx(0.6931471805599453).epsilon(1e-15));
  }
  SUBCASE("dense target equal to p gives the entropy, the minimum over p") {
    Rng rng(5);
    const auto y = oracle::random_prob(rng, 4);
    double entropy = 0.0;
    for (double v : y) entropy -= v * std::log(v);
    CHECK(cross_entropy(ProbVector::from(y), Target::dense(y)) ==
          doctest::Approx(entropy).epsilon(1e-14));
    for (int t = 0; t < 100; ++t) {
      const auto p = oracle::random_prob(rng, 4);
      CHECK(cross_entropy(ProbVector::from(p), Target::dense(y)) >= entropy - 1e-12);
    }
  }
}

TEST_CASE("bilinear_loss") {
  SUBCASE("zero matrix costs nothing") {
    const auto a = PenaltyMatrix::zero(3);
    Rng rng(17);
    for (int t = 0; t < 10; ++t) {
      const auto p = ProbVector::from(oracle::random_prob(rng, 3));
      CHECK(bilinear_loss(p, oracle::random_target(rng, 3), a) == 0.0);
    }
  }
  SUBCASE("no cost for a certain correct prediction") {
    const auto p = ProbVector::from({1.0, 0.0, 0.0});
    CHECK(bilinear_loss(p, Target::one_hot(0), row_penalty_015()) == 0.0);
  }
  SUBCASE("direct evaluation") {
    const auto p = ProbVector::from({0.7, 0.2, 0.1});
    CHECK(bilinear_loss(p, Target::one_hot(0), row_penalty_015()) ==
          doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch rejected") {
    const auto p = ProbVector::from({0.5, 0.5});
    CHECK_THROWS_AS(bilinear_loss(p, Target::one_hot(0), row_penalty_015()),
                    std::invalid_argument);
  }
}

TEST_CASE("log_bilinear_loss") {
  SUBCASE("zero matrix costs nothing") {
    const auto a = PenaltyMatrix::zero(3);
    const auto p = ProbVector::from({0.7, 0.2, 0.1});
    CHECK(log_bilinear_loss(p, Target::one_hot(0), a) == 0.0);
  }
  SUBCASE("direct evaluation") {
    const auto p = ProbVector::from({0.7, 0.2, 0.1});
    const double expect = -(1.0 * std::log(0.8) + 5.0 * std::log(0.9));
    CHECK(log_bilinear_loss(p, Target::one_hot(0), row_penalty_015()) ==
          doctest::Approx(expect).epsilon(1e-15));
    CHECK(expect == doctest::Approx(0.7499461296033412).epsilon(1e-12));
  }
  SUBCASE("a certain penalized mistake saturates at -a*ln(epsilon)") {
    const auto p = ProbVector::from({0.0, 1.0, 0.0});
    auto a = PenaltyMatrix::zero(3);
    a.at(0, 1) = 2.0;
    const double loss = log_bilinear_loss(p, Target::one_hot(0), a, 1e-7);
    CHECK(loss == -2.0 * std::log(1.0 - (1.0 - 1e-7)));  // the clamped endpoint, exactly
    CHECK(loss == doctest::Approx(-2.0 * std::log(1e-7)).epsilon(1e-7));
  }
}

TEST_CASE("combined_loss endpoints are bit-identical to the components") {
  Rng rng(23);
  for (LossVariant variant : {LossVariant::kCePlusBilinear, LossVariant::kCePlusLogBilinear}) {
    for (int t = 0; t < 25; ++t) {
      const auto p = ProbVector::from(oracle::random_prob(rng, 5));
      const auto y = oracle::random_target(rng, 5);
      LossConfig cfg;
      cfg.variant = variant;
      cfg.penalty = oracle::random_penalty(rng, 5);

      cfg.alpha = 0.0;
      CHECK(combined_loss(p, y, cfg) == cross_entropy(p, y, cfg.epsilon));

      cfg.alpha = 1.0;
      const double pure = variant == LossVariant::kCePlusBilinear
                              ? bilinear_loss(p, y, cfg.penalty)
                              : log_bilinear_loss(p, y, cfg.penalty, cfg.epsilon);
      CHECK(combined_loss(p, y, cfg) == pure);
    }
  }
}

TEST_CASE("combined_loss mixes against an independent summation") {
  const auto p = ProbVector::from({0.7, 0.2, 0.1});
  const auto y = Target::one_hot(0);
  LossConfig cfg;
  cfg.variant = LossVariant::kCePlusBilinear;
  cfg.alpha = 0.5;
  cfg.penalty = row_penalty_015();
  const double expect = 0.5 * (-std::log(0.7)) + 0.5 * 0.7;
  CHECK(combined_loss(p, y, cfg) == doctest::Approx(expect).epsilon(1e-15));

  cfg.variant = LossVariant::kCePlusLogBilinear;
  const double expect_lb = 0.5 * (-std::log(0.7)) + 0.5 * 0.7499461296033412;
  CHECK(combined_loss(p, y, cfg) == doctest::Approx(expect_lb).epsilon(1e-12));
}

TEST_CASE("loss_grad_logits: CE one-hot equals the closed form p - e_i") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const auto logits = oracle::random_logits(rng, 6);
    const int label = static_cast<int>(rng.uniform_index(6));
    LossConfig cfg;  // plain CE
    const auto g = loss_grad_logits(logits, Target::one_hot(label), cfg);
    const auto p = softmax(logits);
    for (int m = 0; m < 6; ++m) {
      const double expect = m == label ? p[m] - 1.0 : p[m];
      CHECK(g[m] == expect);
    }
  }
}

TEST_CASE("loss_grad_logits: alpha=0 gradient equals the CE gradient for any variant") {
  Rng rng(37);
  const auto logits = oracle::random_logits(rng, 5);
  const auto y = Target::one_hot(2);
  LossConfig ce;
  const auto g_ce = loss_grad_logits(logits, y, ce);
  for (LossVariant variant : {LossVariant::kCePlusBilinear, LossVariant::kCePlusLogBilinear}) {
    LossConfig cfg;
    cfg.variant = variant;
    cfg.alpha = 0.0;
    cfg.penalty = oracle::random_penalty(rng, 5);
    CHECK(loss_grad_logits(logits, y, cfg) == g_ce);
  }
}

TEST_CASE("loss_grad_logits matches finite differences of the oracle forward") {
  Rng rng(41);
  for (LossVariant variant : {LossVariant::kCrossEntropy, LossVariant::kCePlusBilinear,
                              LossVariant::kCePlusLogBilinear}) {
    for (int k : {3, 5}) {
      for (double alpha : {0.0, 0.5, 0.99}) {
        for (int t = 0; t < 20; ++t) {
          LossConfig cfg;
          cfg.variant = variant;
          cfg.alpha = alpha;
          cfg.penalty = oracle::random_penalty(rng, k);
          const auto logits = oracle::random_logits(rng, k);
          const auto y = oracle::random_target(rng, k);
          const auto analytic = loss_grad_logits(logits, y, cfg);
          const auto numeric = oracle::fd_grad(logits, y, cfg);
          CHECK(oracle::max_rel_err(analytic, numeric) <= 1e-5);

          // The fused forward agrees with the direct-formula oracle too.
          const double value = combined_loss_logits(logits, y, cfg);
          CHECK(value == doctest::Approx(static_cast<double>(
                             oracle::combined_loss_ld(logits, y, cfg)))
                             .epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("loss_grad_logits rejects non-finite logits") {
  LossConfig cfg;
  CHECK_THROWS_AS(loss_grad_logits(std::vector<double>{1.0, std::nan("")}, Target::one_hot(0), cfg),
                  std::invalid_argument);
}

TEST_CASE("bilinear redistribution invariance between equally penalized classes") {
  // With a_{i,j} = a_{i,k}, only the sum of the two assignments matters.
  Rng rng(43);
  auto a = PenaltyMatrix::zero(4);
  a.at(0, 1) = a.at(0, 2) = 2.5;
  a.at(0, 3) = 7.0;
  const auto y = Target::one_hot(0);
  for (int t = 0; t < 200; ++t) {
    auto p = oracle::random_prob(rng, 4);
    const double transferable = std::min(p[2], 1.0 - p[1]);
    const double delta = rng.uniform(0.0, transferable);
    auto q = p;
    q[1] += delta;
    q[2] -= delta;
    const double before = bilinear_loss(ProbVector::from(p), y, a);
    const double after = bilinear_loss(ProbVector::from(q), y, a);
    CHECK(std::abs(before - after) <= 1e-12);
  }
}

TEST_CASE("log-bilinear concentration: endpoints maximal, even split minimal") {
  auto a = PenaltyMatrix::zero(3);
  a.at(0, 1) = a.at(0, 2) = 1.5;
  const auto y = Target::one_hot(0);
  const double s = 0.6;
  const int points = 100;
  std::vector<double> values;
  for (int i = 0; i <= points; ++i) {
    const double t = s * i / points;
    const auto p = ProbVector::from({1.0 - s, t, s - t});
    values.push_back(log_bilinear_loss(p, y, a));
  }
  const double at_ends = values.front();
  CHECK(values.back() == doctest::Approx(at_ends).epsilon(1e-12));
  for (int i = 1; i < points; ++i) CHECK(values[i] < at_ends);
  const double at_center = values[points / 2];
  for (int i = 0; i <= points; ++i)
    if (i != points / 2) CHECK(at_center <= values[i]);
  // Strictly decreasing toward the even split.
  for (int i = 1; i <= points / 2; ++i) CHECK(values[i] < values[i - 1]);
}

TEST_CASE("non-negativity of all losses on random valid inputs") {
  Rng rng(47);
  for (int t = 0; t < 1000; ++t) {
    const int k = 2 + static_cast<int>(rng.uniform_index(8));
    const auto p = ProbVector::from(oracle::random_prob(rng, k));
    const auto y = oracle::random_target(rng, k);
    const auto a = oracle::random_penalty(rng, k);
    CHECK(cross_entropy(p, y) >= 0.0);
    CHECK(bilinear_loss(p, y, a) >= 0.0);
    CHECK(log_bilinear_loss(p, y, a) >= 0.0);
    LossConfig cfg;
    cfg.variant = LossVariant::kCePlusBilinear;
    cfg.alpha = rng.uniform();
    cfg.penalty = a;
    CHECK(combined_loss(p, y, cfg) >= 0.0);
  }
}

TEST_CASE("bilinear loss is linear in p") {
  Rng rng(53);
  const auto a = oracle::random_penalty(rng, 5);
  const auto y = oracle::random_target(rng, 5);
  for (int t = 0; t < 100; ++t) {
    const auto p1 = oracle::random_prob(rng, 5);
    const auto p2 = oracle::random_prob(rng, 5);
    const double lambda = rng.uniform();
    std::vector<double> mix(5);
    for (int i = 0; i < 5; ++i) mix[i] = lambda * p1[i] + (1.0 - lambda) * p2[i];
    const double lhs = bilinear_loss(ProbVector::from(mix), y, a);
    const double rhs = lambda * bilinear_loss(ProbVector::from(p1), y, a) +
                       (1.0 - lambda) * bilinear_loss(ProbVector::from(p2), y, a);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("LossConfig validation") {
  LossConfig cfg;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(validate_loss_config(cfg), std::invalid_argument);

  cfg.alpha = 0.5;
  cfg.variant = LossVariant::kCePlusBilinear;
  cfg.penalty = PenaltyMatrix::zero(3);
  cfg.penalty.at(1, 1) = 2.0;  // nonzero diagonal
  CHECK_THROWS_AS(validate_loss_config(cfg), std::invalid_argument);

  cfg.variant = LossVariant::kCrossEntropy;  // CE ignores the matrix
  CHECK_NOTHROW(validate_loss_config(cfg));
}
