#include "opeval/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "opeval/rng.hpp"
#include "opeval/text_io.hpp"

namespace opeval {

namespace {
constexpr double kProbTol = 1e-12;
constexpr int kMaxDensePairs = 10000;
}  // namespace

DiscountedMDP::DiscountedMDP(int num_states, int num_actions, std::vector<Mat> transition,
                             Mat reward_mean, Mat reward_noise_std, double gamma, Vec init_dist)
    : num_states_(num_states),
      num_actions_(num_actions),
      transition_(std::move(transition)),
      reward_mean_(std::move(reward_mean)),
      reward_noise_std_(std::move(reward_noise_std)),
      gamma_(gamma),
      init_dist_(std::move(init_dist)) {
  validate();
}

void DiscountedMDP::validate() const {
  if (num_states_ <= 0 || num_actions_ <= 0) {
    throw std::invalid_argument("mdp needs at least one state and one action");
  }
  if (num_pairs() > kMaxDensePairs) {
    throw std::invalid_argument("|S||A| exceeds the dense-solver cap of 10000");
  }
  if (static_cast<int>(transition_.size()) != num_actions_) {
    throw std::invalid_argument("transition tensor has wrong action count");
  }
  for (int a = 0; a < num_actions_; ++a) {
    const Mat& p = transition_[a];
    if (p.rows() != num_states_ || p.cols() != num_states_) {
      throw std::invalid_argument("transition matrix has wrong shape");
    }
    for (int s = 0; s < num_states_; ++s) {
      if (p.row(s).minCoeff() < -kProbTol) {
        throw std::invalid_argument("negative transition probability");
      }
      if (std::abs(p.row(s).sum() - 1.0) > kProbTol) {
        throw std::invalid_argument("transition row does not sum to 1");
      }
    }
  }
  if (reward_mean_.rows() != num_states_ || reward_mean_.cols() != num_actions_ ||
      reward_noise_std_.rows() != num_states_ || reward_noise_std_.cols() != num_actions_) {
    throw std::invalid_argument("reward tables have wrong shape");
  }
  if (reward_noise_std_.minCoeff() < 0.0) {
    throw std::invalid_argument("negative reward noise std");
  }
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1)");
  }
  if (init_dist_.size() != num_states_ || init_dist_.minCoeff() < -kProbTol ||
      std::abs(init_dist_.sum() - 1.0) > kProbTol) {
    throw std::invalid_argument("init_dist is not a probability vector");
  }
}

bool DiscountedMDP::rewards_in_unit_range() const {
  return reward_mean_.minCoeff() >= 0.0 && reward_mean_.maxCoeff() <= 1.0;
}

double DiscountedMDP::max_abs_reward() const {
  return reward_mean_.cwiseAbs().maxCoeff() + 8.0 * reward_noise_std_.maxCoeff();
}

void DiscountedMDP::check_policy(const Policy& pi) const {
  if (pi.num_states() != num_states_) {
    throw std::invalid_argument("policy has wrong number of states");
  }
  for (int s = 0; s < num_states_; ++s) {
    if (pi(s) < 0 || pi(s) >= num_actions_) {
      throw std::invalid_argument("policy action out of range");
    }
  }
}

void DiscountedMDP::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines;
  lines.push_back("num_states " + std::to_string(num_states_));
  lines.push_back("num_actions " + std::to_string(num_actions_));
  lines.push_back("gamma " + format_double(gamma_));
  std::string init = "init_dist";
  for (int s = 0; s < num_states_; ++s) init += " " + format_double(init_dist_[s]);
  lines.push_back(init);
  for (int s = 0; s < num_states_; ++s) {
    for (int a = 0; a < num_actions_; ++a) {
      std::string row = "transition " + std::to_string(s) + " " + std::to_string(a);
      for (int t = 0; t < num_states_; ++t) row += " " + format_double(transition_[a](s, t));
      lines.push_back(row);
    }
  }
  for (int s = 0; s < num_states_; ++s) {
    for (int a = 0; a < num_actions_; ++a) {
      lines.push_back("reward " + std::to_string(s) + " " + std::to_string(a) + " " +
                      format_double(reward_mean_(s, a)) + " " +
                      format_double(reward_noise_std_(s, a)));
    }
  }
  write_lines(path, lines);
}

DiscountedMDP DiscountedMDP::load(const std::filesystem::path& path) {
  auto lines = read_kv_file(path);
  int S = -1, A = -1;
  double gamma = -1.0;
  Vec init;
  std::vector<Mat> transition;
  Mat reward_mean, reward_std;
  auto need_dims = [&] {
    if (S < 0 || A < 0) throw std::runtime_error("mdp file: dims must come first");
  };
  for (const auto& kv : lines) {
    if (kv.key == "num_states") {
      S = std::stoi(kv.fields.at(0));
    } else if (kv.key == "num_actions") {
      A = std::stoi(kv.fields.at(0));
    } else if (kv.key == "gamma") {
      gamma = parse_double(kv.fields.at(0));
    } else if (kv.key == "init_dist") {
      need_dims();
      init.resize(S);
      for (int s = 0; s < S; ++s) init[s] = parse_double(kv.fields.at(s));
    } else if (kv.key == "transition") {
      need_dims();
      if (transition.empty()) transition.assign(A, Mat::Zero(S, S));
      int s = std::stoi(kv.fields.at(0));
      int a = std::stoi(kv.fields.at(1));
      for (int t = 0; t < S; ++t) transition.at(a)(s, t) = parse_double(kv.fields.at(2 + t));
    } else if (kv.key == "reward") {
      need_dims();
      if (reward_mean.size() == 0) {
        reward_mean = Mat::Zero(S, A);
        reward_std = Mat::Zero(S, A);
      }
      int s = std::stoi(kv.fields.at(0));
      int a = std::stoi(kv.fields.at(1));
      reward_mean(s, a) = parse_double(kv.fields.at(2));
      reward_std(s, a) = parse_double(kv.fields.at(3));
    } else {
      throw std::runtime_error("mdp file: unknown key '" + kv.key + "'");
    }
  }
  if (S < 0 || A < 0 || gamma < 0.0 || init.size() == 0 || transition.empty()) {
    throw std::runtime_error("mdp file: missing required keys");
  }
  return DiscountedMDP(S, A, std::move(transition), std::move(reward_mean), std::move(reward_std),
                       gamma, std::move(init));
}

Mat policy_state_chain(const DiscountedMDP& mdp, const Policy& pi) {
  mdp.check_policy(pi);
  const int S = mdp.num_states();
  Mat chain(S, S);
  for (int s = 0; s < S; ++s) chain.row(s) = mdp.transition_matrix(pi(s)).row(s);
  return chain;
}

Mat policy_lookahead_matrix(const DiscountedMDP& mdp, const Policy& pi) {
  mdp.check_policy(pi);
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  Mat out = Mat::Zero(S * A, S * A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const int row = sa_index(s, a, A);
      for (int t = 0; t < S; ++t) {
        out(row, sa_index(t, pi(t), A)) = mdp.transition(s, a, t);
      }
    }
  }
  return out;
}

Vec reward_vector(const DiscountedMDP& mdp) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  Vec r(S * A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) r[sa_index(s, a, A)] = mdp.reward_mean()(s, a);
  }
  return r;
}

ValueTable exact_q_value(const DiscountedMDP& mdp, const Policy& pi) {
  mdp.check_policy(pi);
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const int n = S * A;
  const Mat lookahead = policy_lookahead_matrix(mdp, pi);
  const Vec r = reward_vector(mdp);
  Mat system = Mat::Identity(n, n) - mdp.gamma() * lookahead;
  Eigen::PartialPivLU<Mat> lu(system);
  Vec q_flat = lu.solve(r);
  const double residual = (q_flat - r - mdp.gamma() * lookahead * q_flat).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, q_flat.cwiseAbs().maxCoeff());
  if (residual > 1e-10 * scale) {
    throw NumericalError("bellman solve residual too large", residual);
  }

  ValueTable table;
  table.q = Mat(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) table.q(s, a) = q_flat[sa_index(s, a, A)];
  }
  table.v = Vec(S);
  for (int s = 0; s < S; ++s) table.v[s] = table.q(s, pi(s));
  table.scalar_value = mdp.init_dist().dot(table.v);
  return table;
}

namespace {

int sample_categorical(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (x < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

double sample_reward(const DiscountedMDP& mdp, int s, int a, Rng& rng) {
  const double std = mdp.reward_noise_std()(s, a);
  double r = mdp.reward_mean()(s, a);
  if (std > 0.0) {
    // Noise clipped at 8 sigma so a realized reward can never be unbounded.
    double z = std::clamp(draw_normal(rng), -8.0, 8.0);
    r += std * z;
  }
  return r;
}

}  // namespace

std::vector<Step> rollout(const DiscountedMDP& mdp, const Policy& pi, int horizon,
                          std::uint64_t rng_seed) {
  mdp.check_policy(pi);
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  Rng rng(rng_seed);
  std::vector<Step> traj;
  traj.reserve(horizon);
  int s = sample_categorical(mdp.init_dist(), rng);
  for (int h = 0; h < horizon; ++h) {
    const int a = pi(s);
    const double r = sample_reward(mdp, s, a, rng);
    const int s_next = sample_categorical(mdp.transition_matrix(a).row(s).transpose(), rng);
    traj.push_back({s, a, r, s_next});
    s = s_next;
  }
  return traj;
}

MonteCarloEstimate monte_carlo_value(const DiscountedMDP& mdp, const Policy& pi,
                                     int num_trajectories, int horizon, std::uint64_t rng_seed) {
  if (num_trajectories < 1) throw std::invalid_argument("need at least one trajectory");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < num_trajectories; ++i) {
    const auto traj = rollout(mdp, pi, horizon, derive_seed(rng_seed, i));
    double ret = 0.0;
    double discount = 1.0;
    for (const auto& step : traj) {
      ret += discount * step.r;
      discount *= mdp.gamma();
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / num_trajectories;
  double se = 0.0;
  if (num_trajectories > 1) {
    const double var = std::max(0.0, (sum_sq - num_trajectories * mean * mean) /
                                         (num_trajectories - 1));
    se = std::sqrt(var / num_trajectories);
  }
  return {mean, se, num_trajectories};
}

int truncation_horizon(double gamma, double r_max, double tol) {
  if (tol <= 0.0 || r_max <= 0.0) throw std::invalid_argument("tol and r_max must be positive");
  if (gamma <= 0.0) return 1;
  const double h = std::log(tol * (1.0 - gamma) / r_max) / std::log(gamma);
  return std::max(1, static_cast<int>(std::ceil(h)));
}

Vec stationary_state_distribution(const DiscountedMDP& mdp, const Policy& pi) {
  const Mat chain = policy_state_chain(mdp, pi);
  const int S = mdp.num_states();
  if (S == 1) return Vec::Ones(1);

  Eigen::EigenSolver<Mat> eig(chain.transpose());
  if (eig.info() != Eigen::Success) {
    throw NumericalError("eigen decomposition of the policy chain failed");
  }
  std::vector<int> order(S);
  for (int i = 0; i < S; ++i) order[i] = i;
  const auto& vals = eig.eigenvalues();
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(vals[i]) > std::abs(vals[j]); });
  const double top = std::abs(vals[order[0]]);
  const double second = std::abs(vals[order[1]]);
  if (std::abs(top - 1.0) > 1e-8 || second > 1.0 - 1e-8) {
    throw NumericalError(
        "policy chain is not ergodic (eigen gap " + format_double(top - second) +
        "); stationary distribution undefined or not unique");
  }
  Vec mu = eig.eigenvectors().col(order[0]).real();
  if (mu.sum() < 0.0) mu = -mu;
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  // Polish with a few power steps; the eigensolver alone is usually at
  // ~1e-14 already but this keeps the residual contract robust.
  for (int it = 0; it < 64; ++it) {
    Vec next = chain.transpose() * mu;
    next /= next.sum();
    if ((next - mu).lpNorm<1>() < 1e-15) {
      mu = next;
      break;
    }
    mu = next;
  }
  const double residual = (chain.transpose() * mu - mu).lpNorm<1>();
  if (residual > 1e-10) {
    throw NumericalError("stationary distribution residual too large", residual);
  }
  return mu;
}

Vec stationary_distribution(const DiscountedMDP& mdp, const Policy& pi) {
  const Vec mu_s = stationary_state_distribution(mdp, pi);
  const int A = mdp.num_actions();
  Vec mu = Vec::Zero(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s) mu[sa_index(s, pi(s), A)] = mu_s[s];
  return mu;
}

}  // namespace opeval
