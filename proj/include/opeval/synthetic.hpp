#pragma once

#include <cstdint>
#include <vector>

#include "opeval/dataset.hpp"

namespace opeval {

/// Synthetic policy-evaluation instance made of raw feature pairs: current
/// and lookahead features are independent standard Gaussians and rewards are
/// built so the target weights reproduce every Q value exactly (zero
/// realized Bellman noise unless reward_noise_std > 0).
struct SimConfig {
  int n_samples = 100;
  int dim = 100;
  double gamma = 0.99;
  double lambda_reg = 1e-4;
  int num_rounds = 100;
  int repetitions = 100;
  std::uint64_t master_seed = 0;
  double reward_noise_std = 0.0;
  int num_threads = 0;  // 0 = hardware concurrency
};

struct SimInstance {
  Mat phi;       // N x d
  Mat phi_bar;   // N x d
  Vec rewards;   // length N
  Vec theta_star;
};

SimInstance build_sim_instance(const SimConfig& config, std::uint64_t rep_seed);

struct SimCurves {
  std::vector<double> mean_estimation_error;  // mean_t ||theta_t - theta*||
  std::vector<double> mean_frobenius;         // mean_t ||L^t||_F
  std::vector<std::uint8_t> saturated;        // flag once any repetition overflowed at t
};

/// Runs the configured number of repetitions (in parallel, merged in
/// repetition order so the output is deterministic) and averages both
/// curves. Values are clamped at 1e300 and flagged instead of overflowing.
SimCurves run_simulation(const SimConfig& config);

/// Least-squares slope of log10(values) against t over the unsaturated
/// prefix; entries <= 0 are skipped.
double log10_growth_slope(const std::vector<double>& values,
                          const std::vector<std::uint8_t>& saturated);

/// Spearman rank correlation between two curves on the index set where both
/// are finite and unsaturated.
double rank_correlation(const std::vector<double>& a, const std::vector<double>& b,
                        const std::vector<std::uint8_t>& saturated);

}  // namespace opeval
