#include "opeval/benchmarks.hpp"

#include <algorithm>
#include <cmath>

#include "opeval/rng.hpp"

namespace opeval {

DiscountedMDP random_dense_mdp(int num_states, int num_actions, double gamma, std::uint64_t seed,
                               double reward_noise_std) {
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Mat> transition(num_actions, Mat(num_states, num_states));
  for (int a = 0; a < num_actions; ++a) {
    for (int s = 0; s < num_states; ++s) {
      double total = 0.0;
      for (int t = 0; t < num_states; ++t) {
        transition[a](s, t) = expo(rng);
        total += transition[a](s, t);
      }
      transition[a].row(s) /= total;
    }
  }
  Mat reward(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) reward(s, a) = unif(rng);
  }
  Mat noise = Mat::Constant(num_states, num_actions, reward_noise_std);
  Vec init = Vec::Constant(num_states, 1.0 / num_states);
  return DiscountedMDP(num_states, num_actions, std::move(transition), std::move(reward),
                       std::move(noise), gamma, std::move(init));
}

DiscountedMDP ergodic_chain(int num_states, double gamma, double mixing,
                            double reward_noise_std) {
  if (num_states < 2) throw std::invalid_argument("chain needs at least two states");
  const int S = num_states;
  const int A = 2;
  std::vector<Mat> transition(A, Mat::Constant(S, S, mixing / S));
  for (int s = 0; s < S; ++s) {
    const int up = (s + 1) % S;
    const int down = (s + S - 1) % S;
    transition[0](s, up) += (1.0 - mixing) * 0.8;
    transition[0](s, s) += (1.0 - mixing) * 0.2;
    transition[1](s, down) += (1.0 - mixing) * 0.8;
    transition[1](s, s) += (1.0 - mixing) * 0.2;
  }
  Mat reward(S, A);
  for (int s = 0; s < S; ++s) {
    const double base = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s / S);
    reward(s, 0) = base;
    reward(s, 1) = 0.9 * base;
  }
  Mat noise = Mat::Constant(S, A, reward_noise_std);
  Vec init = Vec::Constant(S, 1.0 / S);
  return DiscountedMDP(S, A, std::move(transition), std::move(reward), std::move(noise), gamma,
                       std::move(init));
}

DiscountedMDP two_room_gridworld(int width, int height, double gamma, double slip,
                                 double reward_noise_std) {
  // Two width x height rooms side by side, connected by a single door in the
  // middle of the shared wall.
  const int room = width * height;
  const int S = 2 * room;
  const int A = 4;  // up, down, left, right
  const int door_row = height / 2;
  auto cell = [&](int room_idx, int x, int y) { return room_idx * room + y * width + x; };

  auto move_target = [&](int s, int a) {
    const int room_idx = s / room;
    const int x = (s % room) % width;
    const int y = (s % room) / width;
    int nx = x, ny = y, nroom = room_idx;
    if (a == 0) ny = y > 0 ? y - 1 : y;
    if (a == 1) ny = y + 1 < height ? y + 1 : y;
    if (a == 2) {
      if (x > 0) {
        nx = x - 1;
      } else if (room_idx == 1 && y == door_row) {
        nroom = 0;
        nx = width - 1;
      }
    }
    if (a == 3) {
      if (x + 1 < width) {
        nx = x + 1;
      } else if (room_idx == 0 && y == door_row) {
        nroom = 1;
        nx = 0;
      }
    }
    return cell(nroom, nx, ny);
  };

  std::vector<Mat> transition(A, Mat::Zero(S, S));
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      transition[a](s, move_target(s, a)) += 1.0 - slip;
      for (int other = 0; other < A; ++other) {
        transition[a](s, move_target(s, other)) += slip / A;
      }
    }
  }
  const int goal = cell(1, width - 1, height - 1);
  Mat reward = Mat::Zero(S, A);
  for (int a = 0; a < A; ++a) reward(goal, a) = 1.0;
  Mat noise = Mat::Constant(S, A, reward_noise_std);
  Vec init = Vec::Zero(S);
  for (int i = 0; i < room; ++i) init[i] = 1.0 / room;
  return DiscountedMDP(S, A, std::move(transition), std::move(reward), std::move(noise), gamma,
                       std::move(init));
}

Policy myopic_policy(const DiscountedMDP& mdp) {
  Policy pi;
  pi.action_of.resize(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s) {
    int best = 0;
    for (int a = 1; a < mdp.num_actions(); ++a) {
      if (mdp.reward_mean()(s, a) > mdp.reward_mean()(s, best)) best = a;
    }
    pi.action_of[s] = best;
  }
  return pi;
}

Policy epsilon_corrupt_policy(const DiscountedMDP& mdp, const Policy& base, double epsilon,
                              std::uint64_t seed) {
  mdp.check_policy(base);
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon must lie in [0, 1]");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, mdp.num_actions() - 1);
  Policy out = base;
  for (int s = 0; s < mdp.num_states(); ++s) {
    if (unif(rng) < epsilon) out.action_of[s] = pick(rng);
  }
  return out;
}

std::vector<RankedPolicy> lower_performance_policies(const DiscountedMDP& mdp,
                                                     const Policy& target,
                                                     const std::vector<double>& epsilons,
                                                     std::uint64_t seed) {
  std::vector<RankedPolicy> out;
  out.reserve(epsilons.size());
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    RankedPolicy rp;
    rp.epsilon = epsilons[i];
    rp.policy = epsilon_corrupt_policy(mdp, target, epsilons[i], derive_seed(seed, i));
    rp.exact_value = exact_q_value(mdp, rp.policy).scalar_value;
    out.push_back(std::move(rp));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedPolicy& a, const RankedPolicy& b) {
                     return a.exact_value > b.exact_value;
                   });
  return out;
}

}  // namespace opeval
