#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace opeval {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when a linear solve or eigen computation cannot deliver the
/// requested accuracy (singular system, reducible chain, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg, double condition_estimate = 0.0)
      : std::runtime_error(msg), condition_estimate(condition_estimate) {}
  double condition_estimate;
};

/// Row-major flattening of a state-action pair; every matrix over S x A uses
/// this ordering.
inline int sa_index(int s, int a, int num_actions) { return s * num_actions + a; }

/// Deterministic policy: one action per state.
struct Policy {
  std::vector<int> action_of;

  int num_states() const { return static_cast<int>(action_of.size()); }
  int operator()(int s) const { return action_of[s]; }
};

/// Tabular discounted MDP. Transition probabilities are stored per action as
/// an S x S matrix (row s, column s'). Rewards are Gaussian around
/// reward_mean with per-pair std reward_noise_std; noise 0 gives the
/// deterministic instances used throughout the diagnostics.
class DiscountedMDP {
 public:
  DiscountedMDP(int num_states, int num_actions, std::vector<Mat> transition, Mat reward_mean,
                Mat reward_noise_std, double gamma, Vec init_dist);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_pairs() const { return num_states_ * num_actions_; }
  double gamma() const { return gamma_; }
  const Vec& init_dist() const { return init_dist_; }
  const Mat& reward_mean() const { return reward_mean_; }
  const Mat& reward_noise_std() const { return reward_noise_std_; }
  double transition(int s, int a, int s_next) const { return transition_[a](s, s_next); }
  const Mat& transition_matrix(int a) const { return transition_[a]; }

  /// True when every mean reward lies in [0, 1]; instances outside that range
  /// are legal but flagged by the diagnostics.
  bool rewards_in_unit_range() const;
  double max_abs_reward() const;

  void check_policy(const Policy& pi) const;

  void save(const std::filesystem::path& path) const;
  static DiscountedMDP load(const std::filesystem::path& path);

 private:
  void validate() const;

  int num_states_;
  int num_actions_;
  std::vector<Mat> transition_;  // per action: S x S
  Mat reward_mean_;              // S x A
  Mat reward_noise_std_;         // S x A
  double gamma_;
  Vec init_dist_;
};

/// Exact Q/V for a policy plus the scalar value from the initial distribution.
struct ValueTable {
  Mat q;               // S x A
  Vec v;               // V[s] = Q[s][pi(s)]
  double scalar_value;  // sum_s init_dist[s] * V[s]
};

/// S x S chain induced on states: row s is P(. | s, pi(s)).
Mat policy_state_chain(const DiscountedMDP& mdp, const Policy& pi);

/// (S*A) x (S*A) lookahead operator: ((s,a),(s',a')) carries P(s'|s,a) when
/// a' = pi(s'), so applying it to vec(Q) evaluates E[Q(s', pi(s'))].
Mat policy_lookahead_matrix(const DiscountedMDP& mdp, const Policy& pi);

/// Mean rewards flattened to length S*A in sa_index order.
Vec reward_vector(const DiscountedMDP& mdp);

/// Solves the evaluation fixed point Q = R + gamma * P^pi Q as one dense
/// linear system and verifies the residual to 1e-10 in sup norm.
ValueTable exact_q_value(const DiscountedMDP& mdp, const Policy& pi);

struct Step {
  int s;
  int a;
  double r;
  int s_next;
};

/// Samples one trajectory of `horizon` steps starting from init_dist.
std::vector<Step> rollout(const DiscountedMDP& mdp, const Policy& pi, int horizon,
                          std::uint64_t rng_seed);

struct MonteCarloEstimate {
  double mean;
  double std_error;
  int num_trajectories;
};

/// Mean truncated discounted return over independent rollouts.
MonteCarloEstimate monte_carlo_value(const DiscountedMDP& mdp, const Policy& pi,
                                     int num_trajectories, int horizon, std::uint64_t rng_seed);

/// Smallest horizon H with gamma^H * r_max / (1 - gamma) <= tol.
int truncation_horizon(double gamma, double r_max, double tol);

/// Stationary distribution of the state chain under pi. Requires an ergodic
/// chain, checked through the modulus gap between the leading and second
/// eigenvalue; reducible or periodic chains raise NumericalError.
Vec stationary_state_distribution(const DiscountedMDP& mdp, const Policy& pi);

/// Same distribution lifted to (s,a): all mass of state s sits on (s, pi(s)).
Vec stationary_distribution(const DiscountedMDP& mdp, const Policy& pi);

}  // namespace opeval
