#include "opeval/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace opeval {

namespace {

constexpr double kRangeFloor = 1e-12;  // eigenvalue floor defining range(Lambda)
constexpr double kRangeLeakTol = 1e-10;

struct RangeBasis {
  Mat basis;          // columns: eigenvectors above the floor
  Vec eigenvalues;    // matching eigenvalues
  Mat complement;     // columns: eigenvectors at or below the floor
  bool deficient = false;
};

RangeBasis range_of(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
  const Vec& vals = eig.eigenvalues();
  const Mat& vecs = eig.eigenvectors();
  std::vector<int> keep, drop;
  for (int i = 0; i < vals.size(); ++i) {
    (vals[i] > kRangeFloor ? keep : drop).push_back(i);
  }
  RangeBasis rb;
  rb.basis = Mat(sym.rows(), keep.size());
  rb.eigenvalues = Vec(keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    rb.basis.col(j) = vecs.col(keep[j]);
    rb.eigenvalues[j] = vals[keep[j]];
  }
  rb.complement = Mat(sym.rows(), drop.size());
  for (std::size_t j = 0; j < drop.size(); ++j) rb.complement.col(j) = vecs.col(drop[j]);
  rb.deficient = !drop.empty();
  return rb;
}

}  // namespace

double generalized_dominance_constant(const Mat& a, const Mat& b) {
  const RangeBasis rb = range_of(b);
  if (rb.basis.cols() == 0) {
    // b vanishes; dominance only possible when a vanishes too.
    return a.cwiseAbs().maxCoeff() <= kRangeLeakTol
               ? 0.0
               : std::numeric_limits<double>::infinity();
  }
  if (rb.deficient) {
    const Mat leak = rb.complement.transpose() * a * rb.complement;
    if (leak.cwiseAbs().maxCoeff() > kRangeLeakTol) {
      return std::numeric_limits<double>::infinity();
    }
  }
  const Vec inv_sqrt = rb.eigenvalues.cwiseSqrt().cwiseInverse();
  const Mat pencil =
      inv_sqrt.asDiagonal() * (rb.basis.transpose() * a * rb.basis) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> eig(pencil);
  if (eig.info() != Eigen::Success) throw NumericalError("pencil eigen decomposition failed");
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

ShiftDiagnostics shift_constants(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                 const Policy& pi, const Vec& mu_sa) {
  mdp.check_policy(pi);
  if (mu_sa.size() != mdp.num_pairs() || mu_sa.minCoeff() < -1e-12 ||
      std::abs(mu_sa.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("mu is not a distribution over state-action pairs");
  }
  const Mat& phi_all = fmap.matrix();
  const Mat lookahead = policy_lookahead_matrix(mdp, pi);

  ShiftDiagnostics diag;
  diag.lambda_pop = phi_all.transpose() * mu_sa.asDiagonal() * phi_all;
  const Vec mu_next = lookahead.transpose() * mu_sa;  // distribution of (s', pi(s'))
  diag.lambda_bar = phi_all.transpose() * mu_next.asDiagonal() * phi_all;
  Vec mu_init_sa = Vec::Zero(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s) {
    mu_init_sa[sa_index(s, pi(s), mdp.num_actions())] = mdp.init_dist()[s];
  }
  diag.lambda_init = phi_all.transpose() * mu_init_sa.asDiagonal() * phi_all;
  diag.lambda_cross = phi_all.transpose() * mu_sa.asDiagonal() * (lookahead * phi_all);

  diag.c_policy = generalized_dominance_constant(diag.lambda_bar, diag.lambda_pop);
  diag.c_init = generalized_dominance_constant(diag.lambda_init, diag.lambda_pop);
  diag.assumption_low_shift = diag.c_policy < 1.0 / (mdp.gamma() * mdp.gamma());
  return diag;
}

CompletenessReport completeness_residual(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                         const Policy& pi, const std::vector<Vec>* probes) {
  mdp.check_policy(pi);
  const Mat& phi_all = fmap.matrix();
  const int d = fmap.dim();
  const Mat lookahead_features = policy_lookahead_matrix(mdp, pi) * phi_all;
  const Vec rewards = reward_vector(mdp);

  Eigen::ColPivHouseholderQR<Mat> qr(phi_all);
  auto sup_residual = [&](const Vec& target) {
    const Vec w = qr.solve(target);
    return (target - phi_all * w).cwiseAbs().maxCoeff();
  };

  CompletenessReport report;
  if (probes != nullptr) {
    report.per_basis_residuals = Vec(probes->size());
    for (std::size_t i = 0; i < probes->size(); ++i) {
      const Vec target = rewards + mdp.gamma() * (lookahead_features * (*probes)[i]);
      report.per_basis_residuals[i] = sup_residual(target);
    }
  } else {
    report.per_basis_residuals = Vec(d);
    for (int i = 0; i < d; ++i) {
      const Vec target = rewards + mdp.gamma() * lookahead_features.col(i);
      report.per_basis_residuals[i] = sup_residual(target);
    }
  }
  report.reward_residual = sup_residual(rewards);
  report.worst_residual =
      std::max(report.reward_residual,
               report.per_basis_residuals.size() ? report.per_basis_residuals.maxCoeff() : 0.0);
  return report;
}

NonExpansionReport non_expansiveness_check(const DiscountedMDP& mdp, const FeatureMap& fmap,
                                           const Policy& pi, const Vec& mu_sa,
                                           const std::vector<int>& powers, int num_random_probes,
                                           std::uint64_t seed) {
  if (powers.empty()) throw std::invalid_argument("need at least one power");
  const Mat& phi_all = fmap.matrix();
  const int d = fmap.dim();
  const Mat lambda_pop = phi_all.transpose() * mu_sa.asDiagonal() * phi_all;
  const Mat lambda_cross =
      phi_all.transpose() * mu_sa.asDiagonal() * (policy_lookahead_matrix(mdp, pi) * phi_all);

  const RangeBasis rb = range_of(lambda_pop);
  NonExpansionReport report;
  report.lambda_singular = rb.deficient;
  // Pseudo-inverse restricted to range(lambda_pop).
  const Mat pinv = rb.basis * rb.eigenvalues.cwiseInverse().asDiagonal() * rb.basis.transpose();
  const Mat step = pinv * lambda_cross;

  std::vector<Vec> probes;
  probes.reserve(d + num_random_probes);
  for (int i = 0; i < d; ++i) probes.push_back(Vec::Unit(d, i));
  Rng rng(seed);
  for (int i = 0; i < num_random_probes; ++i) {
    Vec v(d);
    for (int j = 0; j < d; ++j) v[j] = draw_normal(rng);
    v.normalize();
    probes.push_back(v);
  }

  const int max_power = *std::max_element(powers.begin(), powers.end());
  for (const Vec& probe : probes) {
    Vec x = probe;
    for (int t = 0; t <= max_power; ++t) {
      if (std::find(powers.begin(), powers.end(), t) != powers.end()) {
        const double reach = (phi_all * x).cwiseAbs().maxCoeff();
        report.worst_violation = std::max(report.worst_violation, reach - 1.0);
      }
      if (t < max_power) x = step * x;
    }
  }
  report.worst_violation = std::max(0.0, report.worst_violation);
  return report;
}

namespace {

// Frobenius norm without intermediate overflow: factor out the largest entry
// before squaring, so the result only saturates when entries genuinely
// approach the double range.
double safe_frobenius(const Mat& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  if (!std::isfinite(scale)) return scale;
  return scale * (m / scale).norm();
}

}  // namespace

PowerCurve operator_power_frobenius(const Mat& m, int max_power) {
  if (max_power < 1) throw std::invalid_argument("max_power must be >= 1");
  PowerCurve curve;
  curve.frobenius.reserve(max_power);
  curve.saturated.assign(max_power, 0);
  Mat power = m;
  bool saturated = false;
  double last = 0.0;
  for (int t = 1; t <= max_power; ++t) {
    if (!saturated) {
      const double norm = safe_frobenius(power);
      if (!std::isfinite(norm) || norm > kSaturationCap) {
        saturated = true;
        last = kSaturationCap;
      } else {
        last = norm;
        if (t < max_power) power = m * power;
      }
    }
    curve.frobenius.push_back(last);
    if (saturated) {
      curve.saturated[t - 1] = 1;
      curve.any_saturated = true;
    }
  }
  return curve;
}

double spectral_radius(const Mat& m) {
  Eigen::EigenSolver<Mat> eig(m, /*computeEigenvectors=*/false);
  if (eig.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

SpectrumReport amplification_spectrum(const CovarianceBundle& bundle, double gamma,
                                      int max_power) {
  const Mat scaled = gamma * bundle.amplifier;
  const PowerCurve curve = operator_power_frobenius(scaled, max_power);
  SpectrumReport report;
  report.frobenius = curve.frobenius;
  report.saturated = curve.saturated;
  report.spectral_radius = spectral_radius(scaled);
  return report;
}

}  // namespace opeval
