#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "opeval/dataset.hpp"
#include "opeval/features.hpp"
#include "opeval/mdp.hpp"

namespace opeval {

/// Population feature covariances of a data distribution mu over pairs,
/// together with the spectral dominance constants of the lookahead and
/// initial-state covariances. A constant is +infinity when the dominated
/// matrix has range outside range(lambda_pop).
struct ShiftDiagnostics {
  Mat lambda_pop;    // E_mu[phi phi^T]
  Mat lambda_bar;    // lookahead covariance under (mu, pi)
  Mat lambda_init;   // covariance of phi(s, pi(s)), s ~ init_dist
  Mat lambda_cross;  // E_mu[phi(s,a) phi(s',pi(s'))^T]
  double c_policy = std::numeric_limits<double>::infinity();
  double c_init = std::numeric_limits<double>::infinity();
  bool assumption_low_shift = false;  // c_policy < 1 / gamma^2
};

ShiftDiagnostics shift_constants(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                 const Policy& pi, const Vec& mu_sa);

/// Smallest C with A <= C * B in the positive-semidefinite order, restricted
/// to range(B) (eigenvalue floor 1e-12); +infinity when range(A) escapes
/// range(B).
double generalized_dominance_constant(const Mat& a, const Mat& b);

/// Sup-norm residual of projecting Bellman-backup targets onto the feature
/// span. Probes are the weight vectors theta whose backup
/// r + gamma * E[phi(s',pi(s'))^T theta] is tested; the zero probe isolates
/// the reward vector itself.
struct CompletenessReport {
  double worst_residual = 0.0;
  Vec per_basis_residuals;     // one per standard basis probe
  double reward_residual = 0.0;  // zero probe
  double tolerance = 1e-10;
};

CompletenessReport completeness_residual(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                         const Policy& pi,
                                         const std::vector<Vec>* probes = nullptr);

/// Worst violation of |phi(s,a)^T (Lambda^-1 Lambda_cross)^t x| <= ||x||_2
/// over the listed powers and unit probes (standard basis plus seeded random
/// directions). Exhaustive over pairs, sampled over probes.
struct NonExpansionReport {
  double worst_violation = 0.0;
  bool lambda_singular = false;  // check then runs on range(lambda_pop)
};

NonExpansionReport non_expansiveness_check(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                           const Policy& pi, const Vec& mu_sa,
                                           const std::vector<int>& powers,
                                           int num_random_probes = 20, std::uint64_t seed = 0);

/// ||M^t||_F for t = 1..max_power by repeated multiplication. Entries are
/// clamped at 1e300 once the norm overflows; the flag vector marks every t
/// from the first overflow on.
struct PowerCurve {
  std::vector<double> frobenius;
  std::vector<std::uint8_t> saturated;
  bool any_saturated = false;
};

PowerCurve operator_power_frobenius(const Mat& m, int max_power);

constexpr double kSaturationCap = 1e300;

struct SpectrumReport {
  std::vector<double> frobenius;  // ||(gamma L)^t||_F
  std::vector<std::uint8_t> saturated;
  double spectral_radius = 0.0;
};

SpectrumReport amplification_spectrum(const CovarianceBundle& bundle, double gamma, int max_power);

double spectral_radius(const Mat& m);

}  // namespace opeval
