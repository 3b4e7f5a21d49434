#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "opeval/mdp.hpp"
#include "opeval/rng.hpp"

namespace opeval {

/// Feature map over the state-action pairs of a tabular MDP, stored as the
/// full (S*A) x d evaluation matrix (row sa_index(s,a)). Immutable after
/// construction; evaluation is a row lookup.
class FeatureMap {
 public:
  FeatureMap(int num_states, int num_actions, Mat matrix, bool norm_bound_enforced,
             std::string kind);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  bool norm_bound_enforced() const { return norm_bound_enforced_; }
  const std::string& kind() const { return kind_; }
  const Mat& matrix() const { return matrix_; }

  Vec eval(int s, int a) const { return matrix_.row(sa_index(s, a, num_actions_)); }
  auto row(int s, int a) const { return matrix_.row(sa_index(s, a, num_actions_)); }

  void save(const std::filesystem::path& path) const;
  static FeatureMap load(const std::filesystem::path& path);

 private:
  int num_states_;
  int num_actions_;
  Mat matrix_;
  bool norm_bound_enforced_;
  std::string kind_;
};

/// Indicator features: d = S*A, complete under the Bellman backup of every
/// policy and exactly realizable.
FeatureMap one_hot_features(int num_states, int num_actions);
FeatureMap one_hot_features(const DiscountedMDP& mdp);

/// Orthonormal feature basis whose span contains the given target vectors
/// (length S*A each) padded with seeded random directions up to `dim`
/// columns. Columns are orthonormal, so every row norm is at most 1.
/// Realizable for any Q placed in `targets`, but not Bellman-complete.
FeatureMap span_features_containing(int num_states, int num_actions,
                                    const std::vector<Vec>& targets, int dim,
                                    std::uint64_t seed);

/// Indicator features restricted to the k most likely pairs of mu; pairs
/// outside the support of the truncation map to the zero vector.
FeatureMap coverage_truncated_features(int num_states, int num_actions, const Vec& mu_sa, int k);

/// Cosine features for a Gaussian kernel: phi(x) = cos(sqrt(2*gamma_rff) * W x + u),
/// optionally rescaled by 1/sqrt(d) so the norm bound holds.
struct RffConfig {
  int input_dim = 0;
  int dim = 0;
  double bandwidth_scale = 1.0;  // the constant C in gamma_rff = C / D_median
  int median_pairs = 10000;
  bool rescale_to_unit_norm = true;
};

struct RffMap {
  Mat weight_matrix;  // d x input_dim, standard normal entries
  Vec offset;         // length d, uniform on [0, 2*pi]
  double gamma_rff = 0.0;
  bool rescaled = true;

  int input_dim() const { return static_cast<int>(weight_matrix.cols()); }
  int dim() const { return static_cast<int>(weight_matrix.rows()); }
  Vec apply(const Vec& x) const;

  void save(const std::filesystem::path& path) const;
  static RffMap load(const std::filesystem::path& path);
};

/// Median of squared pairwise distances; enumerates all pairs when there are
/// no more than max_pairs of them, otherwise samples max_pairs seeded pairs.
/// Throws when the sample has fewer than two distinct points.
double median_squared_distance(const std::vector<Vec>& points, int max_pairs, std::uint64_t seed);

/// Fits the bandwidth via the median heuristic and draws W and u.
RffMap fit_random_fourier_features(const std::vector<Vec>& data_sample, const RffConfig& config,
                                   std::uint64_t seed);

/// Raw encoding used for RFF on tabular MDPs: one-hot state concatenated
/// with one-hot action, length S + A.
Vec state_action_encoding(int num_states, int num_actions, int s, int a);
std::vector<Vec> all_state_action_encodings(int num_states, int num_actions);

/// Materializes an RFF map into a tabular FeatureMap by evaluating every pair.
FeatureMap rff_tabular_features(int num_states, int num_actions, const RffMap& rff);

/// Stream of i.i.d. N(0, I_d) vectors; deterministic given the seed.
class GaussianFeatureStream {
 public:
  GaussianFeatureStream(int dim, std::uint64_t seed) : dim_(dim), rng_(seed) {
    if (dim < 1) throw std::invalid_argument("feature dim must be >= 1");
  }
  Vec next();

 private:
  int dim_;
  Rng rng_;
};

/// A feature map together with weights theta_star that reproduce Q^pi
/// exactly (up to realization_residual, reported in sup norm).
struct RealizableInstance {
  FeatureMap features;
  Vec theta_star;
  double realization_residual = 0.0;
  bool theory_norm_ok = true;  // ||theta*||_2 <= sqrt(d) / (1 - gamma)
};

double realization_residual(const ValueTable& values, const Policy& pi, const FeatureMap& fmap,
                            const Vec& theta);

RealizableInstance make_onehot_realizable(const DiscountedMDP& mdp, const Policy& pi);
RealizableInstance make_span_realizable(const DiscountedMDP& mdp, const Policy& pi, int dim,
                                        std::uint64_t seed);

}  // namespace opeval
