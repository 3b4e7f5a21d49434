#include <doctest.h>

#include <cmath>
#include <random>

#include "opeval/benchmarks.hpp"
#include "opeval/diagnostics.hpp"
#include "opeval/estimators.hpp"
#include "oracles.hpp"

using namespace opeval;

namespace {

Policy first_action_policy(const DiscountedMDP& mdp) {
  Policy pi;
  pi.action_of.assign(mdp.num_states(), 0);
  return pi;
}

}  // namespace

TEST_CASE("single state single action: every covariance coincides, constants are 1") {
  DiscountedMDP mdp(1, 1, {Mat::Ones(1, 1)}, Mat::Constant(1, 1, 0.5), Mat::Zero(1, 1), 0.9,
                    Vec::Ones(1));
  const Policy pi = first_action_policy(mdp);
  const FeatureMap fmap = one_hot_features(mdp);
  const Vec mu = Vec::Ones(1);
  const auto diag = shift_constants(mdp, fmap, pi, mu);
  CHECK(diag.c_policy == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(diag.c_init == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(diag.assumption_low_shift);
  CHECK((diag.lambda_pop - diag.lambda_bar).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stationary data distribution gives c_policy = 1") {
  auto mdp = ergodic_chain(8, 0.9);
  const Policy pi = myopic_policy(mdp);
  const Vec mu = stationary_distribution(mdp, pi);
  const auto diag = shift_constants(mdp, one_hot_features(mdp), pi, mu);
  CHECK(std::abs(diag.c_policy - 1.0) <= 1e-8);
  CHECK(diag.assumption_low_shift);
}

TEST_CASE("uncovered lookahead direction sends c_policy to infinity") {
  // Deterministic move 0 -> 1, data only covers state 0.
  Mat t = Mat::Zero(2, 2);
  t(0, 1) = 1.0;
  t(1, 1) = 1.0;
  Vec init = Vec::Zero(2);
  init[0] = 1.0;
  DiscountedMDP mdp(2, 1, {t}, Mat::Zero(2, 1), Mat::Zero(2, 1), 0.9, init);
  const Policy pi = first_action_policy(mdp);
  Vec mu = Vec::Zero(2);
  mu[0] = 1.0;  // pair (s=0, a=0) only
  const auto diag = shift_constants(mdp, one_hot_features(mdp), pi, mu);
  CHECK(std::isinf(diag.c_policy));
  CHECK_FALSE(diag.assumption_low_shift);
}

TEST_CASE("shift constants are invariant to invertible feature transforms") {
  auto mdp = random_dense_mdp(4, 2, 0.9, 3);
  const Policy pi = myopic_policy(mdp);
  const auto inst = make_span_realizable(mdp, pi, 5, 5);
  const Vec mu = stationary_distribution(mdp, pi);
  const auto base = shift_constants(mdp, inst.features, pi, mu);

  Rng rng(9);
  Mat a(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) a(i, j) = draw_normal(rng);
  a += 5.0 * Mat::Identity(5, 5);  // comfortably invertible
  const FeatureMap transformed(4, 2, inst.features.matrix() * a.transpose(), false,
                               "transformed");
  const auto after = shift_constants(mdp, transformed, pi, mu);
  CHECK(std::abs(after.c_policy - base.c_policy) <= 1e-8 * std::max(1.0, base.c_policy));
  CHECK(std::abs(after.c_init - base.c_init) <= 1e-8 * std::max(1.0, base.c_init));
}

TEST_CASE("dominance constant solves small pencils exactly") {
  Mat b = Mat::Identity(2, 2);
  Mat a(2, 2);
  a << 3.0, 0.0, 0.0, 0.5;
  CHECK(generalized_dominance_constant(a, b) == doctest::Approx(3.0).epsilon(1e-12));
  // Verify the defining property: a <= C b and not a <= (C - eps) b.
  Eigen::SelfAdjointEigenSolver<Mat> ok(3.0 * b - a);
  CHECK(ok.eigenvalues().minCoeff() >= -1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> tight((3.0 - 1e-6) * b - a);
  CHECK(tight.eigenvalues().minCoeff() < 0.0);
}

TEST_CASE("one-hot features are Bellman-complete; full-rank features too") {
  auto mdp = random_dense_mdp(5, 3, 0.9, 7);
  const Policy pi = myopic_policy(mdp);
  CHECK(completeness_residual(mdp, one_hot_features(mdp), pi).worst_residual <= 1e-10);

  // Any full-rank square feature matrix spans everything.
  Rng rng(11);
  Mat square(mdp.num_pairs(), mdp.num_pairs());
  for (int i = 0; i < square.rows(); ++i)
    for (int j = 0; j < square.cols(); ++j) square(i, j) = draw_normal(rng);
  const FeatureMap full(5, 3, square, false, "table");
  CHECK(completeness_residual(mdp, full, pi).worst_residual <= 1e-9);
}

TEST_CASE("rank-deficient features match the brute-force projection residual") {
  auto mdp = random_dense_mdp(4, 2, 0.9, 13);
  const Policy pi = myopic_policy(mdp);
  const int d = mdp.num_pairs() / 2;
  Rng rng(17);
  Mat half(mdp.num_pairs(), d);
  for (int i = 0; i < half.rows(); ++i)
    for (int j = 0; j < d; ++j) half(i, j) = draw_normal(rng);
  const FeatureMap fmap(4, 2, half, false, "table");

  const auto report = completeness_residual(mdp, fmap, pi);
  CHECK(report.worst_residual > 0.0);

  const Mat lookahead_features = policy_lookahead_matrix(mdp, pi) * fmap.matrix();
  const Vec rewards = reward_vector(mdp);
  double oracle_worst = oracle::svd_projection_sup_residual(fmap.matrix(), rewards);
  for (int j = 0; j < d; ++j) {
    const Vec target = rewards + 0.9 * lookahead_features.col(j);
    oracle_worst =
        std::max(oracle_worst, oracle::svd_projection_sup_residual(fmap.matrix(), target));
    CHECK(std::abs(report.per_basis_residuals[j] -
                   oracle::svd_projection_sup_residual(fmap.matrix(), target)) <= 1e-10);
  }
  CHECK(std::abs(report.worst_residual - oracle_worst) <= 1e-10);
}

TEST_CASE("completeness residual is zero iff the backup image stays in the span") {
  // Build features whose span is closed under the backup: one-hot on a
  // two-state chain, then drop one direction to break closedness.
  auto mdp = random_dense_mdp(3, 2, 0.9, 19);
  const Policy pi = myopic_policy(mdp);

  const auto closed = completeness_residual(mdp, one_hot_features(mdp), pi);
  CHECK(closed.worst_residual <= 1e-10);

  const auto inst = make_span_realizable(mdp, pi, 2, 23);
  const auto open = completeness_residual(mdp, inst.features, pi);
  CHECK(open.worst_residual > 1e-6);
}

TEST_CASE("non-expansiveness holds for one-hot features up to power 10") {
  auto mdp = random_dense_mdp(5, 2, 0.9, 29);
  const Policy pi = myopic_policy(mdp);
  const Vec mu = Vec::Constant(mdp.num_pairs(), 1.0 / mdp.num_pairs());
  std::vector<int> powers;
  for (int t = 0; t <= 10; ++t) powers.push_back(t);
  const auto report =
      non_expansiveness_check(mdp, one_hot_features(mdp), pi, mu, powers, 20, 31);
  CHECK(report.worst_violation <= 1e-8);
  CHECK_FALSE(report.lambda_singular);
}

TEST_CASE("power zero never violates the bound") {
  auto mdp = random_dense_mdp(4, 2, 0.9, 37);
  const Policy pi = myopic_policy(mdp);
  const auto inst = make_span_realizable(mdp, pi, 3, 5);
  const Vec mu = Vec::Constant(mdp.num_pairs(), 1.0 / mdp.num_pairs());
  const auto report = non_expansiveness_check(mdp, inst.features, pi, mu, {0}, 50, 41);
  CHECK(report.worst_violation == 0.0);
}

TEST_CASE("incomplete features with skewed coverage violate non-expansiveness") {
  // Deterministic funnel into state 1, scalar features (0.1, 1.0), data mass
  // concentrated on the small-feature pair. The population operator is then
  // the scalar 0.19 / 0.109 > 1 and its powers amplify any probe.
  Mat t = Mat::Zero(2, 2);
  t(0, 1) = 1.0;
  t(1, 1) = 1.0;
  Vec init = Vec::Zero(2);
  init[0] = 1.0;
  DiscountedMDP mdp(2, 1, {t}, Mat::Zero(2, 1), Mat::Zero(2, 1), 0.9, init);
  const Policy pi = first_action_policy(mdp);
  Mat features(2, 1);
  features << 0.1, 1.0;
  const FeatureMap fmap(2, 1, features, true, "table");
  Vec mu(2);
  mu << 0.9, 0.1;

  const double gain = 0.19 / 0.109;
  const auto first = non_expansiveness_check(mdp, fmap, pi, mu, {1}, 4, 3);
  CHECK(first.worst_violation == doctest::Approx(gain - 1.0).epsilon(1e-9));
  const auto later = non_expansiveness_check(mdp, fmap, pi, mu, {6}, 4, 3);
  CHECK(later.worst_violation == doctest::Approx(std::pow(gain, 6) - 1.0).epsilon(1e-9));
  CHECK(later.worst_violation > first.worst_violation);

  // The same span is genuinely incomplete.
  std::vector<Vec> probes{Vec::Ones(1)};
  CHECK(completeness_residual(mdp, fmap, pi, &probes).worst_residual > 1e-3);
}

TEST_CASE("amplification spectrum closed forms") {
  // Scalar bundle: L = c, so ||(gamma L)^t||_F = (gamma c)^t.
  const int n = 30;
  const double gamma = 0.9;
  const auto bundle = CovarianceBundle::from_feature_pairs(
      Mat::Ones(n, 1), Mat::Constant(n, 1, 0.8), Vec::Zero(n), 0.25, gamma);
  const double c = bundle.amplifier(0, 0);
  const auto spectrum = amplification_spectrum(bundle, gamma, 5);
  for (int t = 1; t <= 5; ++t) {
    CHECK(spectrum.frobenius[t - 1] ==
          doctest::Approx(std::pow(gamma * std::abs(c), t)).epsilon(1e-10));
  }
  CHECK(spectrum.spectral_radius == doctest::Approx(gamma * std::abs(c)).epsilon(1e-10));

  // Zero lookahead features: L = 0 and the whole curve vanishes.
  const auto zero_bundle = CovarianceBundle::from_feature_pairs(
      Mat::Ones(n, 1), Mat::Zero(n, 1), Vec::Zero(n), 0.25, gamma);
  const auto zero_spectrum = amplification_spectrum(zero_bundle, gamma, 4);
  for (double v : zero_spectrum.frobenius) CHECK(v == 0.0);
  CHECK(zero_spectrum.spectral_radius == 0.0);
}

TEST_CASE("subcritical spectra decay after a bounded transient") {
  std::mt19937_64 meta(47);
  for (int trial = 0; trial < 5; ++trial) {
    const int d = 4;
    Rng rng(meta());
    Mat phi(500, d), phi_bar(500, d);
    for (int i = 0; i < 500; ++i) {
      for (int j = 0; j < d; ++j) phi(i, j) = draw_normal(rng);
      for (int j = 0; j < d; ++j) phi_bar(i, j) = draw_normal(rng);
    }
    const auto bundle =
        CovarianceBundle::from_feature_pairs(phi, phi_bar, Vec::Zero(500), 1e-3, 0.99);
    const auto spectrum = amplification_spectrum(bundle, 0.99, 5 * d + 20);
    if (spectrum.spectral_radius >= 1.0) continue;
    // Past the transient allowance of 5d the curve must be decreasing.
    for (std::size_t t = 5 * d; t + 1 < spectrum.frobenius.size(); ++t) {
      CHECK(spectrum.frobenius[t + 1] <= spectrum.frobenius[t] + 1e-12);
    }
    CHECK(spectrum.frobenius.back() < spectrum.frobenius[5 * d - 1] + 1e-12);
  }
}

TEST_CASE("power curve saturates instead of overflowing") {
  Mat m(1, 1);
  m << 1e61;
  const auto curve = operator_power_frobenius(m, 8);
  CHECK(curve.any_saturated);
  CHECK(curve.saturated[3] == 0);
  CHECK(curve.frobenius[3] == doctest::Approx(1e244));
  CHECK(curve.frobenius[4] == kSaturationCap);  // 1e305 clamps at t = 5
  CHECK(curve.saturated[4] == 1);
  // Flags are monotone once tripped.
  for (std::size_t t = 5; t < curve.saturated.size(); ++t) CHECK(curve.saturated[t] == 1);
}
