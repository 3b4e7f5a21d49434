#include "opeval/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "opeval/diagnostics.hpp"
#include "opeval/estimators.hpp"

namespace opeval {

SimInstance build_sim_instance(const SimConfig& config, std::uint64_t rep_seed) {
  if (config.n_samples < 1 || config.dim < 1) {
    throw std::invalid_argument("simulation needs positive sample count and dimension");
  }
  Rng rng(rep_seed);
  SimInstance inst;
  inst.theta_star = Vec(config.dim);
  for (int j = 0; j < config.dim; ++j) inst.theta_star[j] = draw_normal(rng);
  inst.phi = Mat(config.n_samples, config.dim);
  inst.phi_bar = Mat(config.n_samples, config.dim);
  for (int i = 0; i < config.n_samples; ++i) {
    for (int j = 0; j < config.dim; ++j) inst.phi(i, j) = draw_normal(rng);
    for (int j = 0; j < config.dim; ++j) inst.phi_bar(i, j) = draw_normal(rng);
  }
  inst.rewards = inst.phi * inst.theta_star - config.gamma * (inst.phi_bar * inst.theta_star);
  if (config.reward_noise_std > 0.0) {
    for (int i = 0; i < config.n_samples; ++i) {
      inst.rewards[i] += config.reward_noise_std * draw_normal(rng);
    }
  }
  return inst;
}

namespace {

struct RepCurves {
  std::vector<double> error;
  std::vector<double> frobenius;
  std::vector<std::uint8_t> saturated;
};

RepCurves run_repetition(const SimConfig& config, std::uint64_t rep_seed) {
  const SimInstance inst = build_sim_instance(config, rep_seed);
  const CovarianceBundle bundle = CovarianceBundle::from_feature_pairs(
      inst.phi, inst.phi_bar, inst.rewards, config.lambda_reg, config.gamma, &inst.theta_star);

  FqiConfig fqi_config{config.lambda_reg, config.num_rounds, 1};
  const FqiReport fqi = fqi_from_bundle(bundle, fqi_config, nullptr, &inst.theta_star);
  const PowerCurve powers = operator_power_frobenius(bundle.amplifier, config.num_rounds);

  RepCurves rep;
  rep.error = fqi.error_norm_per_round;
  rep.frobenius = powers.frobenius;
  rep.saturated.assign(config.num_rounds, 0);
  bool tripped = false;
  for (int t = 0; t < config.num_rounds; ++t) {
    if (!std::isfinite(rep.error[t]) || rep.error[t] > kSaturationCap || powers.saturated[t]) {
      tripped = true;
    }
    if (tripped) {
      rep.saturated[t] = 1;
      rep.error[t] = std::min(std::isfinite(rep.error[t]) ? rep.error[t] : kSaturationCap,
                              kSaturationCap);
      rep.frobenius[t] = std::min(rep.frobenius[t], kSaturationCap);
    }
  }
  return rep;
}

}  // namespace

SimCurves run_simulation(const SimConfig& config) {
  if (config.repetitions < 1) throw std::invalid_argument("need at least one repetition");
  const int reps = config.repetitions;
  std::vector<RepCurves> all(reps);

  int workers = config.num_threads > 0 ? config.num_threads
                                       : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, reps);
  if (workers == 1) {
    for (int r = 0; r < reps; ++r) {
      all[r] = run_repetition(config, derive_seed(config.master_seed, r));
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = w; r < reps; r += workers) {
          all[r] = run_repetition(config, derive_seed(config.master_seed, r));
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  SimCurves curves;
  const int T = config.num_rounds;
  curves.mean_estimation_error.assign(T, 0.0);
  curves.mean_frobenius.assign(T, 0.0);
  curves.saturated.assign(T, 0);
  for (int t = 0; t < T; ++t) {
    for (int r = 0; r < reps; ++r) {  // fixed reduction order: repetition index
      curves.mean_estimation_error[t] += all[r].error[t];
      curves.mean_frobenius[t] += all[r].frobenius[t];
      if (all[r].saturated[t]) curves.saturated[t] = 1;
    }
    curves.mean_estimation_error[t] =
        std::min(curves.mean_estimation_error[t] / reps, kSaturationCap);
    curves.mean_frobenius[t] = std::min(curves.mean_frobenius[t] / reps, kSaturationCap);
  }
  return curves;
}

double log10_growth_slope(const std::vector<double>& values,
                          const std::vector<std::uint8_t>& saturated) {
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (t < saturated.size() && saturated[t]) break;
    if (values[t] <= 0.0 || !std::isfinite(values[t])) continue;
    xs.push_back(static_cast<double>(t + 1));
    ys.push_back(std::log10(values[t]));
  }
  if (xs.size() < 2) throw std::invalid_argument("not enough points for a slope fit");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

namespace {

std::vector<double> ranks_of(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = 0.5 * (i + j);  // ties share the average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b,
                        const std::vector<std::uint8_t>& saturated) {
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t < std::min(a.size(), b.size()); ++t) {
    if (t < saturated.size() && saturated[t]) break;
    if (!std::isfinite(a[t]) || !std::isfinite(b[t])) continue;
    xs.push_back(a[t]);
    ys.push_back(b[t]);
  }
  if (xs.size() < 3) throw std::invalid_argument("not enough points for rank correlation");
  const auto rx = ranks_of(xs);
  const auto ry = ranks_of(ys);
  const double n = static_cast<double>(rx.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace opeval
