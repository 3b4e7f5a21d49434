#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "opeval/dataset.hpp"
#include "opeval/features.hpp"
#include "opeval/mdp.hpp"

namespace opeval {

struct FqiConfig {
  double lambda_reg = 1e-4;
  int num_rounds = 100;
  int record_every = 10;
};

/// Evaluation states with their exact values and policy-action feature rows,
/// so a weight vector prices them with one mat-vec.
struct EvalSet {
  std::vector<int> states;
  Vec true_values;
  Mat features_at_policy;  // row j = phi(states[j], pi(states[j]))

  double rmse(const Vec& theta) const;
};

/// Draws evaluation states from the first `prefix_len` steps of seeded
/// target-policy trajectories, one state per trajectory.
EvalSet make_eval_set(const DiscountedMDP& mdp, const Policy& pi, const FeatureMap& fmap,
                      const ValueTable& values, int num_states, std::uint64_t seed,
                      int prefix_len = 100);

struct FqiReport {
  std::vector<int> recorded_rounds;
  std::vector<Vec> theta_trajectory;     // at the recording cadence
  std::vector<double> rmse_per_round;    // same cadence; empty without an eval set
  std::vector<double> error_norm_per_round;  // ||theta_t - theta*||, every round, when theta* given
  Vec final_theta;
  double final_rmse = 0.0;
};

/// Iterative ridge-regression policy evaluation: theta_0 = 0 and
///   theta_t = lambda_hat^{-1} (Phi^T r / N + gamma * (Phi^T PhiBar / N) theta_{t-1}).
/// The covariance factorization is computed once and reused every round.
FqiReport fqi_from_bundle(const CovarianceBundle& bundle, const FqiConfig& config,
                          const EvalSet* eval = nullptr, const Vec* theta_star = nullptr);

FqiReport fitted_q_iteration(const TransitionDataset& data, const FeatureMap& fmap,
                             const Policy& pi, double gamma, const FqiConfig& config,
                             const EvalSet* eval = nullptr, const Vec* theta_star = nullptr);

/// Population-limit variant: empirical sums replaced by exact expectations
/// under an explicit pair distribution mu. lambda_reg may be zero here; the
/// weighted covariance must then be positive definite on its own.
FqiReport exact_expectation_fqi(const DiscountedMDP& mdp, const FeatureMap& fmap, const Policy& pi,
                                const Vec& mu_sa, double lambda_reg, int num_rounds,
                                const EvalSet* eval = nullptr);

struct LstdReport {
  Vec theta;
  double solve_residual = 0.0;  // relative residual of the linear system
  std::vector<double> predicted_values;
  double rmse = 0.0;
};

/// One-shot temporal-difference solve:
///   (Phi^T (Phi - gamma PhiBar) / N + lambda I) theta = Phi^T r / N.
/// The system matrix is not symmetric; near-singular systems raise
/// NumericalError carrying a condition estimate.
LstdReport lstd_from_bundle(const CovarianceBundle& bundle, const EvalSet* eval = nullptr);
LstdReport lstd(const TransitionDataset& data, const FeatureMap& fmap, const Policy& pi,
                double gamma, double lambda_reg, const EvalSet* eval = nullptr);

/// Terms of the exact error identity for the iterative estimator after T
/// rounds, each accumulated by repeated application of gamma * L to a vector:
///   theta_T - theta* = sum_{t=1..T} (gamma L)^{t-1} (Phi^T zeta / N - lambda theta*,
///                      both preconditioned by lambda_hat^{-1})
///                      - (gamma L)^T theta*.
struct DecompositionReport {
  Vec noise_term;
  Vec ridge_term;
  Vec propagation_term;
  Vec reconstructed_error;
  Vec actual_error;                        // theta_T - theta* from an independent FQI run
  std::vector<double> per_power_frobenius;  // ||L^t||_F, t = 1..T
  std::vector<double> error_norm_per_round;  // ||theta_t - theta*||, t = 1..T
  double relative_gap = 0.0;  // ||reconstructed - actual|| / max(1, ||actual||)
};

DecompositionReport lemma1_decomposition(const CovarianceBundle& bundle, const Vec& theta_star,
                                         int num_rounds);

struct SweepResult {
  std::vector<double> lambdas;
  std::vector<FqiReport> reports;
  int best_index = 0;  // argmin final rmse, ties resolved toward larger lambda
};

SweepResult hyperparameter_sweep(const TransitionDataset& data, const FeatureMap& fmap,
                                 const Policy& pi, double gamma,
                                 const std::vector<double>& lambdas, int num_rounds,
                                 int record_every, const EvalSet& eval);

void write_fqi_csv(const FqiReport& report, const std::filesystem::path& path,
                   std::uint64_t seed, std::uint64_t config_hash);
void write_decomposition_csv(const DecompositionReport& report, const std::filesystem::path& path,
                             std::uint64_t seed, std::uint64_t config_hash);

}  // namespace opeval
