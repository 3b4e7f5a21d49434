#pragma once

#include <cstdint>
#include <vector>

#include "opeval/mdp.hpp"

namespace opeval {

/// Dense random MDP: transition rows are normalized exponentials (strictly
/// positive, hence ergodic under every policy), mean rewards uniform in
/// [0, 1], uniform initial distribution.
DiscountedMDP random_dense_mdp(int num_states, int num_actions, double gamma, std::uint64_t seed,
                               double reward_noise_std = 0.0);

/// Ergodic birth-death-style chain with two actions (drift up / drift down)
/// and a small uniform mixing term; rewards rise smoothly with the state
/// index so values are nontrivial but bounded in [0, 1].
DiscountedMDP ergodic_chain(int num_states, double gamma, double mixing = 0.05,
                            double reward_noise_std = 0.0);

/// Two connected rooms on a width x height grid each, four move actions with
/// slip probability, reward 1 on the far corner of the second room. Start
/// distribution is uniform over the first room.
DiscountedMDP two_room_gridworld(int width, int height, double gamma, double slip = 0.1,
                                 double reward_noise_std = 0.0);

/// Greedy with respect to the immediate mean reward; ties go to the smaller
/// action index.
Policy myopic_policy(const DiscountedMDP& mdp);

/// Replaces the action in each state by a uniformly random one with
/// probability epsilon (resampled actions may coincide with the original).
Policy epsilon_corrupt_policy(const DiscountedMDP& mdp, const Policy& base, double epsilon,
                              std::uint64_t seed);

struct RankedPolicy {
  Policy policy;
  double exact_value;  // scalar value from the initial distribution
  double epsilon;
};

/// Corruptions of the target at the given epsilons, sorted by exact value
/// descending (index 0 is the best lower-performance policy).
std::vector<RankedPolicy> lower_performance_policies(const DiscountedMDP& mdp,
                                                     const Policy& target,
                                                     const std::vector<double>& epsilons,
                                                     std::uint64_t seed);

}  // namespace opeval
