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

struct PairInstance {
  Mat phi, phi_bar;
  Vec rewards, theta_star;
};

/// Realizable feature-pair instance; noise_std > 0 adds mean-zero reward
/// noise (the realized Bellman noise is then exactly that noise).
PairInstance random_pair_instance(int n, int d, double gamma, std::uint64_t seed,
                                  double noise_std = 0.0) {
  Rng rng(seed);
  PairInstance inst;
  inst.theta_star = Vec(d);
  for (int j = 0; j < d; ++j) inst.theta_star[j] = draw_normal(rng);
  inst.phi = Mat(n, d);
  inst.phi_bar = Mat(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) inst.phi(i, j) = draw_normal(rng);
    for (int j = 0; j < d; ++j) inst.phi_bar(i, j) = draw_normal(rng);
  }
  inst.rewards = inst.phi * inst.theta_star - gamma * (inst.phi_bar * inst.theta_star);
  if (noise_std > 0.0) {
    for (int i = 0; i < n; ++i) inst.rewards[i] += noise_std * draw_normal(rng);
  }
  return inst;
}

}  // namespace

TEST_CASE("fqi with zero rewards stays at zero forever") {
  auto mdp = random_dense_mdp(4, 2, 0.9, 1);
  std::vector<Mat> p;
  for (int a = 0; a < 2; ++a) p.push_back(mdp.transition_matrix(a));
  DiscountedMDP zero(4, 2, p, Mat::Zero(4, 2), Mat::Zero(4, 2), 0.9, mdp.init_dist());
  const Policy pi = first_action_policy(zero);
  const auto data = sample_offline_dataset(zero, &pi, {SourceKind::Target, -1}, 300, 2);
  FqiConfig config{1e-3, 50, 1};
  const auto report = fitted_q_iteration(data, one_hot_features(zero), pi, 0.9, config);
  for (const auto& theta : report.theta_trajectory) {
    CHECK(theta.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fqi recording cadence") {
  const auto inst = random_pair_instance(50, 4, 0.9, 3);
  const auto bundle =
      CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar, inst.rewards, 1e-3, 0.9);
  FqiConfig config{1e-3, 25, 10};
  const auto report = fqi_from_bundle(bundle, config);
  CHECK(report.recorded_rounds == std::vector<int>{10, 20, 25});
  CHECK(report.theta_trajectory.size() == 3);
  CHECK((report.final_theta - report.theta_trajectory.back()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(fqi_from_bundle(bundle, FqiConfig{1e-3, 0, 1}), std::invalid_argument);
}

TEST_CASE("exact-expectation fqi contracts at rate gamma under one-hot features") {
  for (std::uint64_t seed : {2u, 3u}) {
    auto mdp = random_dense_mdp(8, 2, 0.9, seed);
    const Policy pi = myopic_policy(mdp);
    const auto values = exact_q_value(mdp, pi);
    const FeatureMap fmap = one_hot_features(mdp);
    const Vec mu = Vec::Constant(mdp.num_pairs(), 1.0 / mdp.num_pairs());
    const int T = 200;
    const auto report = exact_expectation_fqi(mdp, fmap, pi, mu, 0.0, T);

    Vec q_flat(mdp.num_pairs());
    for (int s = 0; s < 8; ++s)
      for (int a = 0; a < 2; ++a) q_flat[sa_index(s, a, 2)] = values.q(s, a);
    const double q_sup = q_flat.cwiseAbs().maxCoeff();

    double prev_err = q_sup;  // error of theta_0 = 0
    for (int t = 0; t < T; ++t) {
      const double err = (report.theta_trajectory[t] - q_flat).cwiseAbs().maxCoeff();
      CHECK(err <= 0.9 * prev_err + 1e-12);         // one-step contraction
      CHECK(err <= std::pow(0.9, t + 1) * q_sup + 1e-9);  // cumulative bound
      prev_err = err;
    }
  }
}

TEST_CASE("fqi is homogeneous in the rewards") {
  const auto inst = random_pair_instance(80, 5, 0.95, 7);
  const double c = -2.5;
  const auto bundle =
      CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar, inst.rewards, 1e-3, 0.95);
  const auto scaled = CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar,
                                                           (c * inst.rewards).eval(), 1e-3, 0.95);
  FqiConfig config{1e-3, 30, 1};
  const auto a = fqi_from_bundle(bundle, config);
  const auto b = fqi_from_bundle(scaled, config);
  for (std::size_t t = 0; t < a.theta_trajectory.size(); ++t) {
    const double diff =
        (c * a.theta_trajectory[t] - b.theta_trajectory[t]).cwiseAbs().maxCoeff();
    CHECK(diff <= 1e-9 * std::max(1.0, b.theta_trajectory[t].cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("lstd closed forms") {
  // Zero rewards: zero weights.
  const auto inst = random_pair_instance(60, 4, 0.9, 11);
  const auto zero_bundle = CovarianceBundle::from_feature_pairs(
      inst.phi, inst.phi_bar, Vec::Zero(60), 1e-3, 0.9);
  CHECK(lstd_from_bundle(zero_bundle).theta.cwiseAbs().maxCoeff() == 0.0);

  // Scalar instance phi = phibar = 1, constant reward.
  const int n = 25;
  const double r = 0.7, gamma = 0.9, lambda = 0.05;
  const auto scalar_bundle = CovarianceBundle::from_feature_pairs(
      Mat::Ones(n, 1), Mat::Ones(n, 1), Vec::Constant(n, r), lambda, gamma);
  const auto report = lstd_from_bundle(scalar_bundle);
  CHECK(report.theta[0] == doctest::Approx(r / (1.0 - gamma + lambda)).epsilon(1e-12));
  CHECK(report.solve_residual <= 1e-10);
}

TEST_CASE("lstd reports singular systems with a condition estimate") {
  // phi = 1, phibar = c with c = (1 + lambda) / gamma makes the system matrix
  // exactly zero in one dimension.
  const int n = 10;
  const double gamma = 0.9, lambda = 0.1;
  const double c = (1.0 + lambda) / gamma;
  const auto bundle = CovarianceBundle::from_feature_pairs(
      Mat::Ones(n, 1), Mat::Constant(n, 1, c), Vec::Constant(n, 1.0), lambda, gamma);
  CHECK_THROWS_AS(lstd_from_bundle(bundle), NumericalError);
}

TEST_CASE("lstd equals the fqi fixed point when the spectral radius is small") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto inst = random_pair_instance(4000, 6, 0.95, seed);
    const auto bundle = CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar,
                                                             inst.rewards, 1e-4, 0.95);
    REQUIRE(spectral_radius(0.95 * bundle.amplifier) < 0.95);
    const auto fixed = lstd_from_bundle(bundle);
    FqiConfig config{1e-4, 2000, 2000};
    const auto iterated = fqi_from_bundle(bundle, config);
    const double diff = (fixed.theta - iterated.final_theta).norm();
    CHECK(diff <= 1e-8 * (1.0 + fixed.theta.norm()));
  }
}

TEST_CASE("error identity is exact after one round") {
  const auto inst = random_pair_instance(40, 5, 0.9, 13, 0.3);
  const auto bundle = CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar, inst.rewards,
                                                           1e-2, 0.9, &inst.theta_star);
  const auto report = lemma1_decomposition(bundle, inst.theta_star, 1);
  CHECK(report.relative_gap < 1e-12);
  CHECK(report.per_power_frobenius.size() == 1);
}

TEST_CASE("deterministic instances have no noise contribution") {
  const auto inst = random_pair_instance(60, 8, 0.99, 17);
  const auto bundle = CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar, inst.rewards,
                                                           1e-4, 0.99, &inst.theta_star);
  const auto report = lemma1_decomposition(bundle, inst.theta_star, 10);
  CHECK(report.noise_term.cwiseAbs().maxCoeff() < 1e-10);
  const Vec ridge_plus_prop = report.ridge_term + report.propagation_term;
  CHECK((report.reconstructed_error - ridge_plus_prop).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(report.relative_gap < 1e-8);
}

TEST_CASE("error identity holds across random noisy instances") {
  std::mt19937_64 meta(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + static_cast<int>(meta() % 19);
    const int n = 10 + static_cast<int>(meta() % 191);
    const int T = 1 + static_cast<int>(meta() % 20);
    const double lambda = (trial % 2 == 0) ? 1e-4 : 1e-2;
    const double noise = (trial % 3 == 0) ? 0.0 : 0.5;
    const auto inst = random_pair_instance(n, d, 0.95, 1000 + trial, noise);
    const auto bundle = CovarianceBundle::from_feature_pairs(
        inst.phi, inst.phi_bar, inst.rewards, lambda, 0.95, &inst.theta_star);
    const auto report = lemma1_decomposition(bundle, inst.theta_star, T);
    CHECK(report.relative_gap <= 1e-8);
  }
}

TEST_CASE("error identity holds on sampled tabular instances") {
  for (std::uint64_t seed : {3u, 4u}) {
    auto mdp = random_dense_mdp(5, 2, 0.9, seed, 0.2);
    const Policy pi = myopic_policy(mdp);
    const auto instance = make_onehot_realizable(mdp, pi);
    const auto data = sample_offline_dataset(mdp, &pi, {SourceKind::Target, -1}, 150, seed + 9);
    const auto bundle = build_covariance_bundle(data, instance.features, pi, 1e-2, 0.9,
                                                &instance.theta_star);
    const auto report = lemma1_decomposition(bundle, instance.theta_star, 12);
    CHECK(report.relative_gap <= 1e-8);
  }
}

TEST_CASE("decomposition frobenius curve matches naive powers") {
  const auto inst = random_pair_instance(50, 4, 0.9, 29);
  const auto bundle = CovarianceBundle::from_feature_pairs(inst.phi, inst.phi_bar, inst.rewards,
                                                           1e-2, 0.9, &inst.theta_star);
  const auto report = lemma1_decomposition(bundle, inst.theta_star, 6);
  Mat power = Mat::Identity(4, 4);
  for (int t = 1; t <= 6; ++t) {
    power = power * bundle.amplifier;
    CHECK(report.per_power_frobenius[t - 1] == doctest::Approx(power.norm()).epsilon(1e-10));
  }
}

TEST_CASE("eval set prices states through the value table") {
  auto mdp = random_dense_mdp(6, 2, 0.9, 31);
  const Policy pi = myopic_policy(mdp);
  const auto values = exact_q_value(mdp, pi);
  const auto instance = make_onehot_realizable(mdp, pi);
  const auto eval = make_eval_set(mdp, pi, instance.features, values, 40, 5);
  CHECK(eval.states.size() == 40);
  for (int s : eval.states) {
    CHECK(s >= 0);
    CHECK(s < 6);
  }
  // theta* reproduces V exactly, so the rmse at theta* is zero.
  CHECK(eval.rmse(instance.theta_star) < 1e-10);
}

TEST_CASE("sweep selects the argmin and breaks ties toward larger lambda") {
  auto mdp = random_dense_mdp(5, 2, 0.9, 37);
  const Policy pi = myopic_policy(mdp);
  const auto values = exact_q_value(mdp, pi);
  const FeatureMap fmap = one_hot_features(mdp);
  const auto eval = make_eval_set(mdp, pi, fmap, values, 30, 7);
  const auto data = sample_offline_dataset(mdp, &pi, {SourceKind::Target, -1}, 3000, 8);

  const std::vector<double> lambdas{1e-1, 1e-2, 1e-3, 1e-4, 1e-8};
  const auto sweep = hyperparameter_sweep(data, fmap, pi, 0.9, lambdas, 60, 10, eval);
  REQUIRE(sweep.reports.size() == lambdas.size());
  for (const auto& report : sweep.reports) {
    CHECK(sweep.reports[sweep.best_index].final_rmse <= report.final_rmse);
  }

  // Duplicated lambdas give identical reports, and the tie resolves to the
  // later (equal) lambda only when values are exactly tied - by construction
  // the duplicate IS tied, so best_index stays at the first equal-but-larger.
  const auto dup = hyperparameter_sweep(data, fmap, pi, 0.9, {1e-3, 1e-3}, 30, 10, eval);
  CHECK(dup.reports[0].final_rmse == dup.reports[1].final_rmse);
  CHECK((dup.reports[0].final_theta - dup.reports[1].final_theta).cwiseAbs().maxCoeff() == 0.0);

  const auto single = hyperparameter_sweep(data, fmap, pi, 0.9, {1e-3}, 30, 10, eval);
  CHECK(single.best_index == 0);
  CHECK(single.reports[0].final_rmse == dup.reports[0].final_rmse);

  CHECK_THROWS_AS(hyperparameter_sweep(data, fmap, pi, 0.9, {}, 30, 10, eval),
                  std::invalid_argument);
}

TEST_CASE("tie toward larger lambda is explicit") {
  // Zero rewards: every lambda gives rmse 0, so the largest lambda wins.
  auto mdp = random_dense_mdp(3, 2, 0.9, 41);
  std::vector<Mat> p;
  for (int a = 0; a < 2; ++a) p.push_back(mdp.transition_matrix(a));
  DiscountedMDP zero(3, 2, p, Mat::Zero(3, 2), Mat::Zero(3, 2), 0.9, mdp.init_dist());
  const Policy pi = first_action_policy(zero);
  const FeatureMap fmap = one_hot_features(zero);
  const auto values = exact_q_value(zero, pi);
  const auto eval = make_eval_set(zero, pi, fmap, values, 10, 2);
  const auto data = sample_offline_dataset(zero, &pi, {SourceKind::Target, -1}, 200, 3);
  const auto sweep = hyperparameter_sweep(data, fmap, pi, 0.9, {1e-4, 1e-1, 1e-2}, 20, 10, eval);
  CHECK(sweep.lambdas[sweep.best_index] == 1e-1);
}

TEST_CASE("estimator input validation") {
  auto mdp = random_dense_mdp(3, 2, 0.9, 43);
  const Policy pi = first_action_policy(mdp);
  const FeatureMap fmap = one_hot_features(mdp);
  TransitionDataset empty;
  FqiConfig config{1e-3, 10, 1};
  CHECK_THROWS_AS(fitted_q_iteration(empty, fmap, pi, 0.9, config), std::invalid_argument);
  const auto data = sample_offline_dataset(mdp, &pi, {SourceKind::Target, -1}, 10, 1);
  FqiConfig bad{0.0, 10, 1};
  CHECK_THROWS_AS(fitted_q_iteration(data, fmap, pi, 0.9, bad), std::invalid_argument);
}
