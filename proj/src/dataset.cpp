#include "opeval/dataset.hpp"

#include <cmath>
#include <fstream>

#include "opeval/text_io.hpp"

namespace opeval {

std::string SourceTag::str() const {
  switch (kind) {
    case SourceKind::Target:
      return "target";
    case SourceKind::Random:
      return "random";
    case SourceKind::LowerPerf:
      return "lower_perf(" + std::to_string(index) + ")";
  }
  return "target";
}

SourceTag SourceTag::parse(const std::string& text) {
  if (text == "target") return {SourceKind::Target, -1};
  if (text == "random") return {SourceKind::Random, -1};
  if (text.rfind("lower_perf(", 0) == 0 && text.back() == ')') {
    int idx = std::stoi(text.substr(11, text.size() - 12));
    return {SourceKind::LowerPerf, idx};
  }
  throw std::invalid_argument("unknown source tag '" + text + "'");
}

namespace {

int sample_from_row(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (x < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

double noisy_reward(const DiscountedMDP& mdp, int s, int a, Rng& rng) {
  const double std = mdp.reward_noise_std()(s, a);
  double r = mdp.reward_mean()(s, a);
  if (std > 0.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    r += std * std::clamp(n(rng), -8.0, 8.0);
  }
  return r;
}

}  // namespace

TransitionDataset sample_offline_dataset(const DiscountedMDP& mdp, const Policy* behavior,
                                         SourceTag tag, int n, std::uint64_t seed,
                                         int episode_len) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  if (episode_len < 1) throw std::invalid_argument("episode_len must be >= 1");
  if (behavior != nullptr) mdp.check_policy(*behavior);

  Rng rng(seed);
  std::uniform_int_distribution<int> random_action(0, mdp.num_actions() - 1);
  TransitionDataset out;
  out.generating_seed = seed;
  out.provenance = (behavior ? "policy" : "uniform_random") + std::string(" episodes of ") +
                   std::to_string(episode_len) + " steps, tag=" + tag.str();
  out.transitions.reserve(n);

  int s = sample_from_row(mdp.init_dist(), rng);
  int steps_in_episode = 0;
  while (out.size() < n) {
    if (steps_in_episode == episode_len) {
      s = sample_from_row(mdp.init_dist(), rng);
      steps_in_episode = 0;
    }
    const int a = behavior ? (*behavior)(s) : random_action(rng);
    const double r = noisy_reward(mdp, s, a, rng);
    const int s_next = sample_from_row(mdp.transition_matrix(a).row(s).transpose(), rng);
    out.transitions.push_back({s, a, r, s_next, tag});
    s = s_next;
    ++steps_in_episode;
  }
  return out;
}

TransitionDataset sample_iid_dataset(const DiscountedMDP& mdp, const Vec& mu_sa, int n,
                                     std::uint64_t seed, SourceTag tag) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  if (mu_sa.size() != mdp.num_pairs() || mu_sa.minCoeff() < -1e-12 ||
      std::abs(mu_sa.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("mu is not a distribution over state-action pairs");
  }
  Rng rng(seed);
  TransitionDataset out;
  out.generating_seed = seed;
  out.provenance = "iid draws from explicit pair distribution, tag=" + tag.str();
  out.transitions.reserve(n);
  const int A = mdp.num_actions();
  for (int i = 0; i < n; ++i) {
    const int pair = sample_from_row(mu_sa, rng);
    const int s = pair / A;
    const int a = pair % A;
    const double r = noisy_reward(mdp, s, a, rng);
    const int s_next = sample_from_row(mdp.transition_matrix(a).row(s).transpose(), rng);
    out.transitions.push_back({s, a, r, s_next, tag});
  }
  return out;
}

TransitionDataset mix_datasets(const TransitionDataset& base, const TransitionDataset& extra,
                               double ratio) {
  if (ratio < 0.0) throw std::invalid_argument("mix ratio must be non-negative");
  const int want = static_cast<int>(std::ceil(ratio * base.size()));
  if (want > extra.size()) {
    throw std::invalid_argument("extra dataset too small: need " + std::to_string(want) +
                                " transitions, have " + std::to_string(extra.size()));
  }
  TransitionDataset out;
  out.generating_seed = base.generating_seed;
  out.provenance = base.provenance + " + " + format_double(ratio) + "x [" + extra.provenance + "]";
  out.transitions = base.transitions;
  out.transitions.insert(out.transitions.end(), extra.transitions.begin(),
                         extra.transitions.begin() + want);
  return out;
}

void TransitionDataset::save_csv(const std::filesystem::path& path) const {
  CsvWriter csv({"s", "a", "r", "s_next", "source_tag"});
  csv.set_provenance(generating_seed, fnv1a_hash(provenance));
  for (const auto& t : transitions) {
    csv.add_row({std::to_string(t.s), std::to_string(t.a), format_double(t.r),
                 std::to_string(t.s_next), t.tag.str()});
  }
  csv.write(path);
}

TransitionDataset TransitionDataset::load_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const int cs = table.column("s"), ca = table.column("a"), cr = table.column("r"),
            cn = table.column("s_next"), ct = table.column("source_tag");
  if (cs < 0 || ca < 0 || cr < 0 || cn < 0 || ct < 0) {
    throw std::runtime_error("dataset csv is missing required columns");
  }
  TransitionDataset out;
  out.provenance = "loaded from " + path.string();
  for (const auto& row : table.rows) {
    out.transitions.push_back({std::stoi(row[cs]), std::stoi(row[ca]), parse_double(row[cr]),
                               std::stoi(row[cn]), SourceTag::parse(row[ct])});
  }
  return out;
}

std::pair<Mat, Mat> feature_rows(const TransitionDataset& data, const FeatureMap& fmap,
                                 const Policy& pi) {
  const int n = data.size();
  Mat phi(n, fmap.dim());
  Mat phi_bar(n, fmap.dim());
  for (int i = 0; i < n; ++i) {
    const auto& t = data.transitions[i];
    phi.row(i) = fmap.row(t.s, t.a);
    phi_bar.row(i) = fmap.row(t.s_next, pi(t.s_next));
  }
  return {std::move(phi), std::move(phi_bar)};
}

Vec reward_column(const TransitionDataset& data) {
  Vec r(data.size());
  for (int i = 0; i < data.size(); ++i) r[i] = data.transitions[i].r;
  return r;
}

CovarianceBundle CovarianceBundle::from_feature_pairs(const Mat& phi, const Mat& phi_bar,
                                                      const Vec& rewards, double lambda_reg,
                                                      double gamma, const Vec* theta_star) {
  if (lambda_reg <= 0.0) throw std::invalid_argument("lambda_reg must be > 0");
  if (phi.rows() != phi_bar.rows() || phi.rows() != rewards.size() || phi.rows() < 1) {
    throw std::invalid_argument("feature pair shapes mismatch");
  }
  const int n = static_cast<int>(phi.rows());
  const int d = static_cast<int>(phi.cols());

  CovarianceBundle b;
  b.lambda_reg = lambda_reg;
  b.gamma = gamma;
  b.n_samples = n;
  b.lambda_hat = (phi.transpose() * phi) / n + lambda_reg * Mat::Identity(d, d);
  b.cross = (phi.transpose() * phi_bar) / n;
  b.phi_t_r = phi.transpose() * rewards / n;
  b.llt_.compute(b.lambda_hat);
  if (b.llt_.info() != Eigen::Success) {
    throw NumericalError("regularized covariance is not positive definite");
  }
  b.lambda_hat_rcond = b.llt_.rcond();
  b.amplifier = b.llt_.solve(b.cross);
  if (theta_star != nullptr) {
    // zeta_i = r_i + gamma * phibar_i . theta* - phi_i . theta*, the realized
    // Bellman noise; identically zero on deterministic realizable instances.
    Vec zeta = rewards + gamma * (phi_bar * *theta_star) - phi * *theta_star;
    b.phi_t_zeta = phi.transpose() * zeta / n;
  }
  return b;
}

CovarianceBundle build_covariance_bundle(const TransitionDataset& data, const FeatureMap& fmap,
                                         const Policy& pi, double lambda_reg, double gamma,
                                         const Vec* theta_star) {
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  auto [phi, phi_bar] = feature_rows(data, fmap, pi);
  return CovarianceBundle::from_feature_pairs(phi, phi_bar, reward_column(data), lambda_reg,
                                              gamma, theta_star);
}

void CovarianceBundle::save_csv(const std::filesystem::path& dir,
                                const std::string& prefix) const {
  auto dump = [&](const Mat& m, const std::string& name) {
    std::vector<std::string> header;
    for (int j = 0; j < m.cols(); ++j) header.push_back("c" + std::to_string(j));
    CsvWriter csv(header);
    for (int i = 0; i < m.rows(); ++i) {
      std::vector<std::string> row;
      for (int j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
      csv.add_row(row);
    }
    csv.write(dir / (prefix + "_" + name + ".csv"));
  };
  dump(lambda_hat, "lambda_hat");
  dump(cross, "cross");
  dump(amplifier, "amplifier");
}

}  // namespace opeval
