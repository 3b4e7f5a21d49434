#include "opeval/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "opeval/text_io.hpp"

namespace opeval {

double EvalSet::rmse(const Vec& theta) const {
  const Vec predicted = features_at_policy * theta;
  return std::sqrt((predicted - true_values).squaredNorm() / true_values.size());
}

EvalSet make_eval_set(const DiscountedMDP& mdp, const Policy& pi, const FeatureMap& fmap,
                      const ValueTable& values, int num_states, std::uint64_t seed,
                      int prefix_len) {
  if (num_states < 1) throw std::invalid_argument("need at least one evaluation state");
  EvalSet eval;
  eval.states.reserve(num_states);
  for (int i = 0; i < num_states; ++i) {
    const auto traj = rollout(mdp, pi, prefix_len, derive_seed(seed, i));
    Rng rng(derive_seed(seed, 1000003ULL + i));
    std::uniform_int_distribution<int> pick(0, static_cast<int>(traj.size()) - 1);
    eval.states.push_back(traj[pick(rng)].s);
  }
  eval.true_values = Vec(num_states);
  eval.features_at_policy = Mat(num_states, fmap.dim());
  for (int i = 0; i < num_states; ++i) {
    const int s = eval.states[i];
    eval.true_values[i] = values.v[s];
    eval.features_at_policy.row(i) = fmap.row(s, pi(s));
  }
  return eval;
}

FqiReport fqi_from_bundle(const CovarianceBundle& bundle, const FqiConfig& config,
                          const EvalSet* eval, const Vec* theta_star) {
  if (config.num_rounds < 1) throw std::invalid_argument("num_rounds must be >= 1");
  if (config.record_every < 1) throw std::invalid_argument("record_every must be >= 1");

  const auto& llt = bundle.factorization();
  FqiReport report;
  Vec theta = Vec::Zero(bundle.dim());
  for (int t = 1; t <= config.num_rounds; ++t) {
    theta = llt.solve(bundle.phi_t_r + bundle.gamma * (bundle.cross * theta));
    if (theta_star != nullptr) {
      report.error_norm_per_round.push_back((theta - *theta_star).norm());
    }
    if (t % config.record_every == 0 || t == config.num_rounds) {
      report.recorded_rounds.push_back(t);
      report.theta_trajectory.push_back(theta);
      if (eval != nullptr) report.rmse_per_round.push_back(eval->rmse(theta));
    }
  }
  report.final_theta = theta;
  report.final_rmse = eval ? report.rmse_per_round.back() : 0.0;
  return report;
}

FqiReport fitted_q_iteration(const TransitionDataset& data, const FeatureMap& fmap,
                             const Policy& pi, double gamma, const FqiConfig& config,
                             const EvalSet* eval, const Vec* theta_star) {
  const CovarianceBundle bundle =
      build_covariance_bundle(data, fmap, pi, config.lambda_reg, gamma, theta_star);
  return fqi_from_bundle(bundle, config, eval, theta_star);
}

FqiReport exact_expectation_fqi(const DiscountedMDP& mdp, const FeatureMap& fmap, const Policy& pi,
                                const Vec& mu_sa, double lambda_reg, int num_rounds,
                                const EvalSet* eval) {
  if (lambda_reg < 0.0) throw std::invalid_argument("lambda_reg must be >= 0");
  if (mu_sa.size() != mdp.num_pairs()) throw std::invalid_argument("mu has wrong length");
  mdp.check_policy(pi);

  const Mat& phi_all = fmap.matrix();
  const int d = fmap.dim();
  const Mat weighted = mu_sa.asDiagonal() * phi_all;
  const Mat cov = phi_all.transpose() * weighted + lambda_reg * Mat::Identity(d, d);
  const Mat lookahead = policy_lookahead_matrix(mdp, pi);
  const Mat cross = weighted.transpose() * (lookahead * phi_all);
  const Vec b = weighted.transpose() * reward_vector(mdp);

  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("weighted covariance is singular; mu does not cover the feature span");
  }
  FqiReport report;
  Vec theta = Vec::Zero(d);
  for (int t = 1; t <= num_rounds; ++t) {
    theta = llt.solve(b + mdp.gamma() * (cross * theta));
    report.recorded_rounds.push_back(t);
    report.theta_trajectory.push_back(theta);
    if (eval != nullptr) report.rmse_per_round.push_back(eval->rmse(theta));
  }
  report.final_theta = theta;
  report.final_rmse = eval ? report.rmse_per_round.back() : 0.0;
  return report;
}

LstdReport lstd_from_bundle(const CovarianceBundle& bundle, const EvalSet* eval) {
  const Mat system = bundle.lambda_hat - bundle.gamma * bundle.cross;
  Eigen::PartialPivLU<Mat> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw NumericalError("temporal-difference system is numerically singular", 1.0 / rcond);
  }
  LstdReport report;
  report.theta = lu.solve(bundle.phi_t_r);
  const double scale = std::max(1.0, bundle.phi_t_r.norm());
  report.solve_residual = (system * report.theta - bundle.phi_t_r).norm() / scale;
  if (report.solve_residual > 1e-10) {
    throw NumericalError("temporal-difference solve residual too large", 1.0 / rcond);
  }
  if (eval != nullptr) {
    const Vec predicted = eval->features_at_policy * report.theta;
    report.predicted_values.assign(predicted.data(), predicted.data() + predicted.size());
    report.rmse = eval->rmse(report.theta);
  }
  return report;
}

LstdReport lstd(const TransitionDataset& data, const FeatureMap& fmap, const Policy& pi,
                double gamma, double lambda_reg, const EvalSet* eval) {
  const CovarianceBundle bundle = build_covariance_bundle(data, fmap, pi, lambda_reg, gamma);
  return lstd_from_bundle(bundle, eval);
}

DecompositionReport lemma1_decomposition(const CovarianceBundle& bundle, const Vec& theta_star,
                                         int num_rounds) {
  if (!bundle.phi_t_zeta.has_value()) {
    throw std::invalid_argument("decomposition needs the bundle built with theta_star");
  }
  if (num_rounds < 1) throw std::invalid_argument("num_rounds must be >= 1");
  const auto& llt = bundle.factorization();
  const double gamma = bundle.gamma;

  // Per-round contributions, both preconditioned by lambda_hat^{-1}.
  const Vec noise_seed = llt.solve(*bundle.phi_t_zeta);
  const Vec ridge_seed = llt.solve(-bundle.lambda_reg * theta_star);

  DecompositionReport report;
  Vec noise_acc = Vec::Zero(bundle.dim());
  Vec ridge_acc = Vec::Zero(bundle.dim());
  Vec noise_vec = noise_seed;
  Vec ridge_vec = ridge_seed;
  Vec prop_vec = theta_star;
  for (int t = 1; t <= num_rounds; ++t) {
    noise_acc += noise_vec;
    ridge_acc += ridge_vec;
    noise_vec = gamma * (bundle.amplifier * noise_vec);
    ridge_vec = gamma * (bundle.amplifier * ridge_vec);
    prop_vec = gamma * (bundle.amplifier * prop_vec);
  }
  report.noise_term = noise_acc;
  report.ridge_term = ridge_acc;
  // Unrolling the recursion from theta_0 = 0 leaves -(gamma L)^T theta*.
  report.propagation_term = -prop_vec;
  report.reconstructed_error = report.noise_term + report.ridge_term + report.propagation_term;

  FqiConfig config;
  config.lambda_reg = bundle.lambda_reg;
  config.num_rounds = num_rounds;
  config.record_every = num_rounds;
  const FqiReport fqi = fqi_from_bundle(bundle, config, nullptr, &theta_star);
  report.actual_error = fqi.final_theta - theta_star;
  report.error_norm_per_round = fqi.error_norm_per_round;
  report.relative_gap = (report.reconstructed_error - report.actual_error).norm() /
                        std::max(1.0, report.actual_error.norm());

  // Frobenius curve from explicit successive products L * L^{t-1}.
  Mat power = bundle.amplifier;
  report.per_power_frobenius.reserve(num_rounds);
  for (int t = 1; t <= num_rounds; ++t) {
    report.per_power_frobenius.push_back(power.norm());
    if (t < num_rounds) power = bundle.amplifier * power;
  }
  return report;
}

SweepResult hyperparameter_sweep(const TransitionDataset& data, const FeatureMap& fmap,
                                 const Policy& pi, double gamma,
                                 const std::vector<double>& lambdas, int num_rounds,
                                 int record_every, const EvalSet& eval) {
  if (lambdas.empty()) throw std::invalid_argument("lambda list must be non-empty");
  SweepResult result;
  result.lambdas = lambdas;
  result.reports.reserve(lambdas.size());
  for (double lam : lambdas) {
    FqiConfig config{lam, num_rounds, record_every};
    result.reports.push_back(fitted_q_iteration(data, fmap, pi, gamma, config, &eval));
  }
  result.best_index = 0;
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    const double best = result.reports[result.best_index].final_rmse;
    const double cur = result.reports[i].final_rmse;
    const bool better = cur < best ||
                        (cur == best && lambdas[i] > lambdas[result.best_index]);
    if (better) result.best_index = static_cast<int>(i);
  }
  return result;
}

void write_fqi_csv(const FqiReport& report, const std::filesystem::path& path, std::uint64_t seed,
                   std::uint64_t config_hash) {
  CsvWriter csv({"round", "rmse"});
  csv.set_provenance(seed, config_hash);
  for (std::size_t i = 0; i < report.recorded_rounds.size(); ++i) {
    csv.add_row({std::to_string(report.recorded_rounds[i]),
                 format_double(report.rmse_per_round.at(i))});
  }
  csv.write(path);
}

void write_decomposition_csv(const DecompositionReport& report, const std::filesystem::path& path,
                             std::uint64_t seed, std::uint64_t config_hash) {
  CsvWriter csv({"t", "frobenius_norm", "estimation_error"});
  csv.set_provenance(seed, config_hash);
  for (std::size_t t = 0; t < report.per_power_frobenius.size(); ++t) {
    csv.add_row({std::to_string(t + 1), format_double(report.per_power_frobenius[t]),
                 format_double(report.error_norm_per_round.at(t))});
  }
  csv.write(path);
}

}  // namespace opeval
