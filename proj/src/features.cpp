#include "opeval/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "opeval/text_io.hpp"

namespace opeval {

FeatureMap::FeatureMap(int num_states, int num_actions, Mat matrix, bool norm_bound_enforced,
                       std::string kind)
    : num_states_(num_states),
      num_actions_(num_actions),
      matrix_(std::move(matrix)),
      norm_bound_enforced_(norm_bound_enforced),
      kind_(std::move(kind)) {
  if (num_states_ <= 0 || num_actions_ <= 0 || matrix_.rows() != num_states_ * num_actions_ ||
      matrix_.cols() < 1) {
    throw std::invalid_argument("feature matrix shape mismatch");
  }
  if (norm_bound_enforced_) {
    const double worst = matrix_.rowwise().norm().maxCoeff();
    if (worst > 1.0 + 1e-12) {
      throw std::invalid_argument("norm bound enforced but a feature row has norm " +
                                  format_double(worst));
    }
  }
}

FeatureMap one_hot_features(int num_states, int num_actions) {
  const int n = num_states * num_actions;
  return FeatureMap(num_states, num_actions, Mat::Identity(n, n), true, "one_hot");
}

FeatureMap one_hot_features(const DiscountedMDP& mdp) {
  return one_hot_features(mdp.num_states(), mdp.num_actions());
}

FeatureMap span_features_containing(int num_states, int num_actions,
                                    const std::vector<Vec>& targets, int dim,
                                    std::uint64_t seed) {
  const int n = num_states * num_actions;
  if (dim < static_cast<int>(targets.size()) || dim > n) {
    throw std::invalid_argument("span feature dim must lie in [#targets, S*A]");
  }
  Mat raw(n, dim);
  int col = 0;
  for (const auto& t : targets) {
    if (t.size() != n) throw std::invalid_argument("target vector has wrong length");
    raw.col(col++) = t;
  }
  Rng rng(seed);
  for (; col < dim; ++col) {
    for (int i = 0; i < n; ++i) raw(i, col) = draw_normal(rng);
  }
  Eigen::HouseholderQR<Mat> qr(raw);
  Mat q = qr.householderQ() * Mat::Identity(n, dim);
  return FeatureMap(num_states, num_actions, std::move(q), true, "realizable_span");
}

FeatureMap coverage_truncated_features(int num_states, int num_actions, const Vec& mu_sa, int k) {
  const int n = num_states * num_actions;
  if (mu_sa.size() != n) throw std::invalid_argument("mu has wrong length");
  if (k < 1 || k > n) throw std::invalid_argument("k out of range");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return mu_sa[i] > mu_sa[j]; });
  Mat m = Mat::Zero(n, k);
  for (int c = 0; c < k; ++c) m(order[c], c) = 1.0;
  return FeatureMap(num_states, num_actions, std::move(m), true, "coverage_truncated");
}

Vec RffMap::apply(const Vec& x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("rff input has wrong length");
  Vec z = std::sqrt(2.0 * gamma_rff) * (weight_matrix * x) + offset;
  Vec out = z.array().cos();
  if (rescaled) out /= std::sqrt(static_cast<double>(dim()));
  return out;
}

double median_squared_distance(const std::vector<Vec>& points, int max_pairs,
                               std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  bool distinct = false;
  for (int i = 1; i < n && !distinct; ++i) {
    distinct = (points[i] - points[0]).squaredNorm() > 0.0;
  }
  if (n < 2 || !distinct) {
    throw std::invalid_argument("median heuristic needs at least two distinct points");
  }
  std::vector<double> dists;
  const long long total = static_cast<long long>(n) * (n - 1) / 2;
  if (total <= max_pairs) {
    dists.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) dists.push_back((points[i] - points[j]).squaredNorm());
    }
  } else {
    Rng rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    dists.reserve(max_pairs);
    while (static_cast<int>(dists.size()) < max_pairs) {
      int i = pick(rng);
      int j = pick(rng);
      if (i == j) continue;
      dists.push_back((points[i] - points[j]).squaredNorm());
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  if (m % 2 == 1) return dists[m / 2];
  return 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

RffMap fit_random_fourier_features(const std::vector<Vec>& data_sample, const RffConfig& config,
                                   std::uint64_t seed) {
  if (config.input_dim < 1 || config.dim < 1) {
    throw std::invalid_argument("rff dims must be positive");
  }
  const double d_median = median_squared_distance(data_sample, config.median_pairs,
                                                  derive_seed(seed, 0));
  RffMap map;
  map.gamma_rff = config.bandwidth_scale / d_median;
  map.rescaled = config.rescale_to_unit_norm;
  map.weight_matrix = Mat(config.dim, config.input_dim);
  map.offset = Vec(config.dim);
  Rng rng(derive_seed(seed, 1));
  for (int i = 0; i < config.dim; ++i) {
    for (int j = 0; j < config.input_dim; ++j) map.weight_matrix(i, j) = draw_normal(rng);
  }
  for (int i = 0; i < config.dim; ++i) {
    map.offset[i] = draw_uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return map;
}

Vec state_action_encoding(int num_states, int num_actions, int s, int a) {
  Vec x = Vec::Zero(num_states + num_actions);
  x[s] = 1.0;
  x[num_states + a] = 1.0;
  return x;
}

std::vector<Vec> all_state_action_encodings(int num_states, int num_actions) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(num_states) * num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      out.push_back(state_action_encoding(num_states, num_actions, s, a));
    }
  }
  return out;
}

FeatureMap rff_tabular_features(int num_states, int num_actions, const RffMap& rff) {
  const int n = num_states * num_actions;
  Mat m(n, rff.dim());
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      m.row(sa_index(s, a, num_actions)) =
          rff.apply(state_action_encoding(num_states, num_actions, s, a));
    }
  }
  return FeatureMap(num_states, num_actions, std::move(m), rff.rescaled, "rff");
}

Vec GaussianFeatureStream::next() {
  Vec v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = draw_normal(rng_);
  return v;
}

double realization_residual(const ValueTable& values, const Policy& pi, const FeatureMap& fmap,
                            const Vec& theta) {
  double worst = 0.0;
  for (int s = 0; s < fmap.num_states(); ++s) {
    for (int a = 0; a < fmap.num_actions(); ++a) {
      worst = std::max(worst, std::abs(fmap.row(s, a).dot(theta) - values.q(s, a)));
    }
  }
  (void)pi;
  return worst;
}

static bool theory_norm_ok(const Vec& theta, int dim, double gamma) {
  return theta.norm() <= std::sqrt(static_cast<double>(dim)) / (1.0 - gamma) + 1e-9;
}

RealizableInstance make_onehot_realizable(const DiscountedMDP& mdp, const Policy& pi) {
  const ValueTable values = exact_q_value(mdp, pi);
  FeatureMap fmap = one_hot_features(mdp);
  Vec theta(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s) {
    for (int a = 0; a < mdp.num_actions(); ++a) {
      theta[sa_index(s, a, mdp.num_actions())] = values.q(s, a);
    }
  }
  RealizableInstance inst{std::move(fmap), std::move(theta)};
  inst.realization_residual = realization_residual(values, pi, inst.features, inst.theta_star);
  inst.theory_norm_ok = theory_norm_ok(inst.theta_star, inst.features.dim(), mdp.gamma());
  return inst;
}

RealizableInstance make_span_realizable(const DiscountedMDP& mdp, const Policy& pi, int dim,
                                        std::uint64_t seed) {
  const ValueTable values = exact_q_value(mdp, pi);
  Vec q_flat(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s) {
    for (int a = 0; a < mdp.num_actions(); ++a) {
      q_flat[sa_index(s, a, mdp.num_actions())] = values.q(s, a);
    }
  }
  FeatureMap fmap =
      span_features_containing(mdp.num_states(), mdp.num_actions(), {q_flat}, dim, seed);
  // Columns are orthonormal, so the least-squares weights are just Phi^T q.
  Vec theta = fmap.matrix().transpose() * q_flat;
  RealizableInstance inst{std::move(fmap), std::move(theta)};
  inst.realization_residual = realization_residual(values, pi, inst.features, inst.theta_star);
  inst.theory_norm_ok = theory_norm_ok(inst.theta_star, inst.features.dim(), mdp.gamma());
  return inst;
}

void FeatureMap::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines;
  lines.push_back("feature_kind " + kind_);
  lines.push_back("num_states " + std::to_string(num_states_));
  lines.push_back("num_actions " + std::to_string(num_actions_));
  lines.push_back("dim " + std::to_string(dim()));
  lines.push_back(std::string("norm_enforced ") + (norm_bound_enforced_ ? "1" : "0"));
  for (int s = 0; s < num_states_; ++s) {
    for (int a = 0; a < num_actions_; ++a) {
      std::string row = "row " + std::to_string(s) + " " + std::to_string(a);
      for (int j = 0; j < dim(); ++j) {
        row += " " + format_double(matrix_(sa_index(s, a, num_actions_), j));
      }
      lines.push_back(row);
    }
  }
  write_lines(path, lines);
}

FeatureMap FeatureMap::load(const std::filesystem::path& path) {
  auto lines = read_kv_file(path);
  std::string kind = "table";
  int S = -1, A = -1, d = -1;
  bool enforced = false;
  Mat m;
  for (const auto& kv : lines) {
    if (kv.key == "feature_kind") {
      kind = kv.fields.at(0);
    } else if (kv.key == "num_states") {
      S = std::stoi(kv.fields.at(0));
    } else if (kv.key == "num_actions") {
      A = std::stoi(kv.fields.at(0));
    } else if (kv.key == "dim") {
      d = std::stoi(kv.fields.at(0));
    } else if (kv.key == "norm_enforced") {
      enforced = kv.fields.at(0) == "1";
    } else if (kv.key == "row") {
      if (S < 0 || A < 0 || d < 0) throw std::runtime_error("feature file: dims must come first");
      if (m.size() == 0) m = Mat::Zero(S * A, d);
      int s = std::stoi(kv.fields.at(0));
      int a = std::stoi(kv.fields.at(1));
      for (int j = 0; j < d; ++j) m(sa_index(s, a, A), j) = parse_double(kv.fields.at(2 + j));
    } else {
      throw std::runtime_error("feature file: unknown key '" + kv.key + "'");
    }
  }
  if (m.size() == 0) throw std::runtime_error("feature file: no rows");
  return FeatureMap(S, A, std::move(m), enforced, kind);
}

void RffMap::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines;
  lines.push_back("feature_kind rff");
  lines.push_back("input_dim " + std::to_string(input_dim()));
  lines.push_back("dim " + std::to_string(dim()));
  lines.push_back("gamma_rff " + format_double(gamma_rff));
  lines.push_back(std::string("rescaled ") + (rescaled ? "1" : "0"));
  for (int i = 0; i < dim(); ++i) {
    std::string row = "w_row " + std::to_string(i);
    for (int j = 0; j < input_dim(); ++j) row += " " + format_double(weight_matrix(i, j));
    lines.push_back(row);
  }
  std::string off = "offset";
  for (int i = 0; i < dim(); ++i) off += " " + format_double(offset[i]);
  lines.push_back(off);
  write_lines(path, lines);
}

RffMap RffMap::load(const std::filesystem::path& path) {
  auto lines = read_kv_file(path);
  RffMap map;
  int D = -1, d = -1;
  for (const auto& kv : lines) {
    if (kv.key == "feature_kind") {
      if (kv.fields.at(0) != "rff") throw std::runtime_error("not an rff feature file");
    } else if (kv.key == "input_dim") {
      D = std::stoi(kv.fields.at(0));
    } else if (kv.key == "dim") {
      d = std::stoi(kv.fields.at(0));
      if (D < 0) throw std::runtime_error("rff file: input_dim must come first");
      map.weight_matrix = Mat::Zero(d, D);
      map.offset = Vec::Zero(d);
    } else if (kv.key == "gamma_rff") {
      map.gamma_rff = parse_double(kv.fields.at(0));
    } else if (kv.key == "rescaled") {
      map.rescaled = kv.fields.at(0) == "1";
    } else if (kv.key == "w_row") {
      int i = std::stoi(kv.fields.at(0));
      for (int j = 0; j < D; ++j) map.weight_matrix(i, j) = parse_double(kv.fields.at(1 + j));
    } else if (kv.key == "offset") {
      for (int i = 0; i < d; ++i) map.offset[i] = parse_double(kv.fields.at(i));
    } else {
      throw std::runtime_error("rff file: unknown key '" + kv.key + "'");
    }
  }
  if (d < 0) throw std::runtime_error("rff file: missing dim");
  return map;
}

}  // namespace opeval
