#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "opeval/features.hpp"
#include "opeval/mdp.hpp"

namespace opeval {

enum class SourceKind { Target, Random, LowerPerf };

struct SourceTag {
  SourceKind kind = SourceKind::Target;
  int index = -1;  // which lower-performance policy, when kind == LowerPerf

  std::string str() const;
  static SourceTag parse(const std::string& text);
  bool operator==(const SourceTag&) const = default;
};

struct Transition {
  int s;
  int a;
  double r;
  int s_next;
  SourceTag tag;
};

struct TransitionDataset {
  std::vector<Transition> transitions;
  std::uint64_t generating_seed = 0;
  std::string provenance;

  int size() const { return static_cast<int>(transitions.size()); }

  void save_csv(const std::filesystem::path& path) const;
  static TransitionDataset load_csv(const std::filesystem::path& path);
};

/// Harvests N transitions from seeded fixed-horizon episodes (restart from
/// init_dist every episode_len steps). behavior == nullptr plays uniformly
/// random actions.
TransitionDataset sample_offline_dataset(const DiscountedMDP& mdp, const Policy* behavior,
                                         SourceTag tag, int n, std::uint64_t seed,
                                         int episode_len = 100);

/// Theory-mode collection: (s,a) drawn i.i.d. from an explicit distribution
/// over pairs, then r and s' from the model.
TransitionDataset sample_iid_dataset(const DiscountedMDP& mdp, const Vec& mu_sa, int n,
                                     std::uint64_t seed, SourceTag tag = {});

/// base plus the first ceil(ratio * |base|) transitions of extra; base
/// content and order are unchanged.
TransitionDataset mix_datasets(const TransitionDataset& base, const TransitionDataset& extra,
                               double ratio);

/// Empirical second-moment matrices of a dataset under a feature map, plus
/// the operator that propagates error across rounds of the iterative
/// estimator. With theta_star supplied, phi_t_zeta carries the projected
/// realized Bellman noise.
struct CovarianceBundle {
  double lambda_reg = 0.0;
  double gamma = 0.0;
  int n_samples = 0;
  Mat lambda_hat;  // Phi^T Phi / N + lambda I
  Mat cross;       // Phi^T PhiBar / N
  Mat amplifier;   // lambda_hat^{-1} * cross, formed by d solves
  Vec phi_t_r;     // Phi^T r / N
  std::optional<Vec> phi_t_zeta;  // Phi^T zeta / N
  double lambda_hat_rcond = 0.0;  // condition estimate logged when forming the amplifier

  int dim() const { return static_cast<int>(lambda_hat.rows()); }
  const Eigen::LLT<Mat>& factorization() const { return llt_; }

  static CovarianceBundle from_feature_pairs(const Mat& phi, const Mat& phi_bar, const Vec& rewards,
                                             double lambda_reg, double gamma,
                                             const Vec* theta_star = nullptr);

  void save_csv(const std::filesystem::path& dir, const std::string& prefix) const;

 private:
  Eigen::LLT<Mat> llt_;
};

CovarianceBundle build_covariance_bundle(const TransitionDataset& data, const FeatureMap& fmap,
                                         const Policy& pi, double lambda_reg, double gamma,
                                         const Vec* theta_star = nullptr);

/// Feature rows of a dataset: row i of the first matrix is phi(s_i, a_i), of
/// the second phi(s'_i, pi(s'_i)).
std::pair<Mat, Mat> feature_rows(const TransitionDataset& data, const FeatureMap& fmap,
                                 const Policy& pi);

Vec reward_column(const TransitionDataset& data);

}  // namespace opeval
