#include "lungmtl/risk.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "lungmtl/parallel.hpp"

namespace lungmtl {

std::string_view to_string(RiskLevel level) {
  switch (level) {
    case RiskLevel::VerySevere: return "VerySevere";
    case RiskLevel::Severe: return "Severe";
    case RiskLevel::Moderate: return "Moderate";
    case RiskLevel::Mild: return "Mild";
  }
  return "?";
}

std::string_view to_string(BmiCategory category) {
  switch (category) {
    case BmiCategory::Underweight: return "Underweight";
    case BmiCategory::Healthy: return "Healthy";
    case BmiCategory::Overweight: return "Overweight";
    case BmiCategory::Obese: return "Obese";
  }
  return "?";
}

std::vector<std::string> risk_class_names() {
  std::vector<std::string> out;
  for (int c = 0; c < kRiskClasses; ++c) out.emplace_back(to_string(static_cast<RiskLevel>(c)));
  return out;
}

BmiCategory bmi_category(double bmi) {
  if (bmi < 18.5) return BmiCategory::Underweight;
  if (bmi <= 24.9) return BmiCategory::Healthy;
  if (bmi <= 29.9) return BmiCategory::Overweight;
  return BmiCategory::Obese;
}

RiskLevel assign_risk(const DemographicRecord& rec) {
  const double age = rec.age_years;
  if (!(age >= 35.0))
    throw Error(ErrorCode::OutOfRubric, "patient " + std::to_string(rec.patient_id) + ": age " +
                                            std::to_string(age) + " is below the rubric's lowest band (35)");
  if (age >= 65.0) {
    if (bmi_category(rec.bmi_kg_m2) == BmiCategory::Underweight && rec.gender == Gender::Female)
      return RiskLevel::VerySevere;
    return RiskLevel::Severe;
  }
  return age >= 50.0 ? RiskLevel::Moderate : RiskLevel::Mild;
}

RiskLabels label_records(std::span<const DemographicRecord> records) {
  RiskLabels out;
  for (const auto& r : records) {
    try {
      out.levels.push_back(static_cast<int>(assign_risk(r)));
      out.records.push_back(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfRubric) throw;
      out.excluded_patients.push_back(r.patient_id);
    }
  }
  if (!out.excluded_patients.empty()) {
    std::string ids;
    for (int id : out.excluded_patients) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    warn("OutOfRubric: " + std::to_string(out.excluded_patients.size()) + " record(s) younger than 35 excluded: " +
         ids);
  }
  return out;
}

std::vector<DemographicRecord> synth_demographics(std::size_t n, std::uint64_t seed, double age_lo, double age_hi,
                                                 double bmi_lo, double bmi_hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> age(age_lo, age_hi), bmi(bmi_lo, bmi_hi);
  std::bernoulli_distribution male(0.5);
  std::vector<DemographicRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].patient_id = static_cast<int>(i);
    out[i].age_years = age(rng);
    out[i].gender = male(rng) ? Gender::Male : Gender::Female;
    out[i].bmi_kg_m2 = bmi(rng);
  }
  return out;
}

void Samples::push(std::span<const double> r) {
  if (d == 0) d = r.size();
  if (r.size() != d) throw Error(ErrorCode::ShapeMismatch, "sample width differs from table width");
  x.insert(x.end(), r.begin(), r.end());
}

Samples risk_features(std::span<const DemographicRecord> records) {
  Samples s{kRiskFeatures, {}};
  s.x.reserve(records.size() * kRiskFeatures);
  for (const auto& r : records) s.push(std::array<double, 3>{r.age_years, static_cast<double>(r.gender), r.bmi_kg_m2});
  return s;
}

namespace {

void check_training_set(const Samples& X, std::span<const int> y, int n_classes, std::size_t min_n) {
  if (X.n() < min_n || X.n() != y.size())
    throw Error(ErrorCode::EmptyTrainingSet, "need at least " + std::to_string(min_n) +
                                                 " labeled samples with matching label count, got " +
                                                 std::to_string(X.n()) + " samples / " +
                                                 std::to_string(y.size()) + " labels");
  if (n_classes < 1) throw Error(ErrorCode::InvalidArgument, "class count must be >= 1");
  for (int v : y)
    if (v < 0 || v >= n_classes) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(v));
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---- trees ----------------------------------------------------------------------

double gini(std::span<const double> counts) {
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (n <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

SplitChoice best_split(const Samples& X, std::span<const int> y, int n_classes, std::span<const std::size_t> idx,
                       std::span<const std::size_t> features) {
  SplitChoice best;
  best.weighted_gini = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(idx.size());
  std::vector<std::size_t> order(idx.begin(), idx.end());
  std::vector<double> left(n_classes), right(n_classes);
  for (std::size_t f : features) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return X.row(a)[f] < X.row(b)[f]; });
    std::fill(left.begin(), left.end(), 0.0);
    std::fill(right.begin(), right.end(), 0.0);
    for (std::size_t i : order) right[y[i]] += 1.0;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      left[y[order[k]]] += 1.0;
      right[y[order[k]]] -= 1.0;
      const double v = X.row(order[k])[f], next = X.row(order[k + 1])[f];
      if (!(v < next)) continue;
      const double nl = static_cast<double>(k + 1);
      const double score = (nl * gini(left) + (n - nl) * gini(right)) / n;
      if (score < best.weighted_gini) {
        best.weighted_gini = score;
        best.feature = static_cast<int>(f);
        best.threshold = v + (next - v) / 2.0;
      }
    }
  }
  if (best.feature < 0) best.weighted_gini = 0.0;
  return best;
}

const TreeNode& DecisionTree::leaf_for(const double* x) const {
  if (nodes.empty()) throw Error(ErrorCode::UnfittedModel, "decision tree has no nodes");
  const TreeNode* node = &nodes[0];
  while (node->feature >= 0) node = &nodes[x[node->feature] <= node->threshold ? node->left : node->right];
  return *node;
}

int DecisionTree::predict(const double* x) const { return argmax(leaf_for(x).distribution); }

namespace {

struct TreeBuilder {
  const Samples& X;
  std::span<const int> y;
  int n_classes;
  const TreeOptions& opt;
  std::mt19937_64& rng;
  DecisionTree tree;

  int grow(std::vector<std::size_t> idx, int depth) {
    TreeNode node;
    node.distribution.assign(n_classes, 0.0);
    for (std::size_t i : idx) node.distribution[y[i]] += 1.0;
    for (auto& c : node.distribution) c /= static_cast<double>(idx.size());
    const int at = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);

    const bool pure = gini(node.distribution) <= 0.0;
    const bool depth_ok = opt.max_depth < 0 || depth < opt.max_depth;
    if (pure || !depth_ok || idx.size() < 2 * std::max<std::size_t>(opt.min_samples_leaf, 1)) return at;

    std::vector<std::size_t> features(X.d);
    std::iota(features.begin(), features.end(), 0);
    if (opt.max_features > 0 && opt.max_features < X.d) {
      std::shuffle(features.begin(), features.end(), rng);
      features.resize(opt.max_features);
      std::sort(features.begin(), features.end());
    }
    const SplitChoice s = best_split(X, y, n_classes, idx, features);
    if (s.feature < 0) return at;

    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (X.row(i)[s.feature] <= s.threshold ? l : r).push_back(i);
    if (l.size() < opt.min_samples_leaf || r.size() < opt.min_samples_leaf) return at;
    idx.clear();
    idx.shrink_to_fit();
    const int left = grow(std::move(l), depth + 1);
    const int right = grow(std::move(r), depth + 1);
    tree.nodes[at].feature = s.feature;
    tree.nodes[at].threshold = s.threshold;
    tree.nodes[at].left = left;
    tree.nodes[at].right = right;
    return at;
  }
};

}  // namespace

DecisionTree fit_tree(const Samples& X, std::span<const int> y, int n_classes, std::span<const std::size_t> idx,
                      const TreeOptions& opt, std::mt19937_64& rng) {
  check_training_set(X, y, n_classes, 1);
  if (idx.empty()) throw Error(ErrorCode::EmptyTrainingSet, "tree needs at least one sample");
  TreeBuilder b{X, y, n_classes, opt, rng, {}};
  b.grow({idx.begin(), idx.end()}, 0);
  return std::move(b.tree);
}

ForestModel fit_forest(const Samples& X, std::span<const int> y, int n_classes, const ForestOptions& opt) {
  check_training_set(X, y, n_classes, 2);
  if (opt.n_estimators == 0) throw Error(ErrorCode::InvalidArgument, "forest needs at least one tree");
  ForestModel model;
  model.n_classes = n_classes;
  model.n_features = X.d;
  model.seed = opt.seed;
  model.trees.resize(opt.n_estimators);
  const std::size_t n = X.n();
  // Each tree owns an RNG derived from (seed, tree index), so the result does not depend on
  // how trees are scheduled across workers.
  parallel_for(opt.n_estimators, opt.workers, [&](std::size_t t) {
    std::mt19937_64 rng(mix(opt.seed, t));
    std::vector<std::size_t> idx(n);
    if (opt.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : idx) i = pick(rng);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    model.trees[t] = fit_tree(X, y, n_classes, idx, opt.tree, rng);
  });
  return model;
}

// ---- softmax regression ------------------------------------------------------------

namespace {

Samples standardize(const Samples& X, std::span<const double> mean, std::span<const double> scale) {
  Samples z{X.d, std::vector<double>(X.x.size())};
  for (std::size_t i = 0; i < X.n(); ++i)
    for (std::size_t f = 0; f < X.d; ++f) z.x[i * X.d + f] = (X.row(i)[f] - mean[f]) / scale[f];
  return z;
}

void class_scores(std::span<const double> w, const double* z, std::size_t d, int k, double* out) {
  for (int c = 0; c < k; ++c) {
    const double* wc = w.data() + static_cast<std::size_t>(c) * (d + 1);
    double s = wc[d];
    for (std::size_t f = 0; f < d; ++f) s += wc[f] * z[f];
    out[c] = s;
  }
}

void softmax_inplace(double* v, int k) {
  const double mx = *std::max_element(v, v + k);
  double sum = 0.0;
  for (int c = 0; c < k; ++c) sum += v[c] = std::exp(v[c] - mx);
  for (int c = 0; c < k; ++c) v[c] /= sum;
}

}  // namespace

double softmax_regression_loss_grad(std::span<const double> weights, const Samples& Z, std::span<const int> y,
                                    int n_classes, std::vector<double>* grad) {
  const std::size_t n = Z.n(), d = Z.d;
  if (weights.size() != static_cast<std::size_t>(n_classes) * (d + 1))
    throw Error(ErrorCode::ShapeMismatch, "weights must be K x (D + 1)");
  if (grad) grad->assign(weights.size(), 0.0);
  std::vector<double> p(n_classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    class_scores(weights, Z.row(i), d, n_classes, p.data());
    softmax_inplace(p.data(), n_classes);
    loss -= std::log(p[y[i]] + 1e-300);
    if (!grad) continue;
    for (int c = 0; c < n_classes; ++c) {
      const double r = (p[c] - (y[i] == c ? 1.0 : 0.0)) / static_cast<double>(n);
      double* g = grad->data() + static_cast<std::size_t>(c) * (d + 1);
      for (std::size_t f = 0; f < d; ++f) g[f] += r * Z.row(i)[f];
      g[d] += r;
    }
  }
  return loss / static_cast<double>(n);
}

SoftmaxRegressionModel fit_softmax_regression(const Samples& X, std::span<const int> y, int n_classes,
                                              const SoftmaxRegressionOptions& opt) {
  check_training_set(X, y, n_classes, 1);
  if (opt.max_iter < 1 || opt.lr <= 0.0 || opt.tol < 0.0)
    throw Error(ErrorCode::InvalidArgument, "softmax regression needs max_iter >= 1, lr > 0, tol >= 0");
  SoftmaxRegressionModel m;
  m.n_classes = n_classes;
  m.n_features = X.d;
  m.mean.assign(X.d, 0.0);
  m.scale.assign(X.d, 0.0);
  const double n = static_cast<double>(X.n());
  for (std::size_t i = 0; i < X.n(); ++i)
    for (std::size_t f = 0; f < X.d; ++f) m.mean[f] += X.row(i)[f] / n;
  for (std::size_t i = 0; i < X.n(); ++i)
    for (std::size_t f = 0; f < X.d; ++f) m.scale[f] += (X.row(i)[f] - m.mean[f]) * (X.row(i)[f] - m.mean[f]) / n;
  for (auto& s : m.scale) s = s > 0.0 ? std::sqrt(s) : 1.0;  // constant feature: leave unscaled
  const Samples Z = standardize(X, m.mean, m.scale);

  m.weights.assign(static_cast<std::size_t>(n_classes) * (X.d + 1), 0.0);
  std::vector<double> grad;
  for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
    m.loss_history.push_back(softmax_regression_loss_grad(m.weights, Z, y, n_classes, &grad));
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < opt.tol) {
      m.converged = true;
      break;
    }
    for (std::size_t j = 0; j < grad.size(); ++j) m.weights[j] -= opt.lr * grad[j];
  }
  return m;
}

// ---- SVM ------------------------------------------------------------------------------

double rbf_kernel(const double* a, const double* b, std::size_t d, double gamma) {
  double s = 0.0;
  for (std::size_t f = 0; f < d; ++f) s += (a[f] - b[f]) * (a[f] - b[f]);
  return std::exp(-gamma * s);
}

double svm_decision(const BinarySvm& m, const double* x, double gamma) {
  double f = m.bias;
  for (std::size_t i = 0; i < m.coef.size(); ++i) f += m.coef[i] * rbf_kernel(m.support.row(i), x, m.support.d, gamma);
  return f;
}

double svm_dual_objective(std::span<const double> alpha, std::span<const int> y_pm, const Samples& X, double gamma) {
  const std::size_t n = X.n();
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (alpha[j] != 0.0) quad += alpha[i] * alpha[j] * y_pm[i] * y_pm[j] * rbf_kernel(X.row(i), X.row(j), X.d, gamma);
  }
  return lin - 0.5 * quad;
}

namespace {

// Largest violation of alpha=0 => yf >= 1, 0<alpha<C => yf = 1, alpha=C => yf <= 1.
double kkt_residual(double alpha, double C, double yf) {
  if (alpha <= 0.0) return std::max(0.0, 1.0 - yf);
  if (alpha >= C) return std::max(0.0, yf - 1.0);
  return std::abs(yf - 1.0);
}

}  // namespace

// Dual: min 1/2 a^T Q a - e^T a, 0 <= a <= C, y^T a = 0, Q_ij = y_i y_j k(x_i, x_j). Working
// pairs are the maximal violating pair; the loop stops once the violation gap is <= tol, which
// bounds every KKT residual by tol.
BinarySvmFit fit_binary_svm(const Samples& X, std::span<const int> y_pm, double C, double gamma, double tol,
                            std::size_t max_iter) {
  const std::size_t n = X.n();
  if (n < 2 || y_pm.size() != n) throw Error(ErrorCode::EmptyTrainingSet, "SVM needs at least two samples");
  if (!(C > 0.0) || !(gamma > 0.0) || !(tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "SVM needs C > 0, gamma > 0, tol > 0");
  for (int v : y_pm)
    if (v != 1 && v != -1) throw Error(ErrorCode::LabelOutOfRange, "binary SVM labels must be +1/-1");
  if (max_iter == 0) max_iter = std::max<std::size_t>(10'000'000, 100 * n);

  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = rbf_kernel(X.row(i), X.row(j), X.d, gamma);
  auto Q = [&](std::size_t i, std::size_t j) { return y_pm[i] * y_pm[j] * K[i * n + j]; };

  std::vector<double> alpha(n, 0.0), G(n, -1.0);
  auto in_up = [&](std::size_t t) { return (y_pm[t] == 1 && alpha[t] < C) || (y_pm[t] == -1 && alpha[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y_pm[t] == 1 && alpha[t] > 0.0) || (y_pm[t] == -1 && alpha[t] < C); };
  constexpr double kTau = 1e-12;

  std::size_t iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y_pm[t] * G[t];
      if (in_up(t) && v > gmax) gmax = v, i = t;
      if (in_low(t) && v < gmin) gmin = v, j = t;
    }
    gap = gmax - gmin;
    if (i == n || j == n || gap <= tol) break;
    if (iter >= max_iter)
      throw Error(ErrorCode::NoConvergence, "SMO hit the iteration cap (" + std::to_string(max_iter) +
                                                ") with violation gap " + std::to_string(gap));

    const double old_i = alpha[i], old_j = alpha[j];
    if (y_pm[i] != y_pm[j]) {
      const double quad = std::max(Q(i, i) + Q(j, j) + 2.0 * Q(i, j), kTau);
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = diff;
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0, alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
      } else if (alpha[j] > C) {
        alpha[j] = C, alpha[i] = C + diff;
      }
    } else {
      const double quad = std::max(Q(i, i) + Q(j, j) - 2.0 * Q(i, j), kTau);
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0, alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0, alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
  }

  // Offset: average over free vectors, or the middle of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y_pm[t] * G[t];
    if (alpha[t] > 0.0 && alpha[t] < C) {
      sum_free += yg;
      ++n_free;
    } else if ((alpha[t] >= C && y_pm[t] == -1) || (alpha[t] <= 0.0 && y_pm[t] == 1)) {
      ub = std::min(ub, yg);
    } else {
      lb = std::max(lb, yg);
    }
  }
  const double rho = n_free ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

  BinarySvmFit fit;
  fit.alpha = alpha;
  BinarySvm& m = fit.machine;
  m.bias = -rho;
  m.iterations = iter;
  m.support.d = X.d;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    m.support.x.insert(m.support.x.end(), X.row(t), X.row(t) + X.d);
    m.coef.push_back(alpha[t] * y_pm[t]);
  }
  double obj = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    obj += alpha[t] - 0.5 * alpha[t] * (G[t] + 1.0);  // (Q a)_t = G_t + 1
    m.max_kkt_residual = std::max(m.max_kkt_residual, kkt_residual(alpha[t], C, G[t] + 1.0 + y_pm[t] * m.bias));
  }
  m.dual_objective = obj;
  return fit;
}

double RbfSvmModel::max_kkt_residual() const {
  double r = 0.0;
  for (const auto& m : machines) r = std::max(r, m.max_kkt_residual);
  return r;
}

RbfSvmModel fit_rbf_svm(const Samples& X, std::span<const int> y, int n_classes, const SvmOptions& opt) {
  check_training_set(X, y, n_classes, 2);
  RbfSvmModel m;
  m.n_classes = n_classes;
  m.n_features = X.d;
  m.C = opt.C;
  m.gamma = opt.gamma > 0.0 ? opt.gamma : 1.0 / static_cast<double>(X.d);
  m.tol = opt.tol;
  std::vector<int> ypm(y.size());
  for (int c = 0; c < n_classes; ++c) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < y.size(); ++i) {
      ypm[i] = y[i] == c ? 1 : -1;
      (ypm[i] == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) {
      // Degenerate one-vs-rest problem: constant decision value.
      BinarySvm constant;
      constant.support.d = X.d;
      constant.bias = pos ? 1.0 : -1.0;
      m.machines.push_back(std::move(constant));
      continue;
    }
    m.machines.push_back(fit_binary_svm(X, ypm, m.C, m.gamma, m.tol, opt.max_iter).machine);
  }
  return m;
}

// ---- prediction -----------------------------------------------------------------

std::string_view risk_model_kind(const RiskModel& model) {
  switch (model.index()) {
    case 0: return "forest";
    case 1: return "logreg";
    default: return "svm";
  }
}

namespace {

void require_width(std::size_t have, std::size_t want) {
  if (have != want)
    throw Error(ErrorCode::ShapeMismatch, "model expects " + std::to_string(want) + " features, got " +
                                              std::to_string(have));
}

std::vector<int> predict_one(const ForestModel& m, const Samples& X) {
  if (!m.fitted()) throw Error(ErrorCode::UnfittedModel, "random forest has not been fitted");
  require_width(X.d, m.n_features);
  std::vector<int> out(X.n());
  std::vector<double> votes(m.n_classes);
  for (std::size_t i = 0; i < X.n(); ++i) {
    std::fill(votes.begin(), votes.end(), 0.0);
    for (const auto& t : m.trees) votes[t.predict(X.row(i))] += 1.0;
    out[i] = argmax(votes);
  }
  return out;
}

std::vector<int> predict_one(const SoftmaxRegressionModel& m, const Samples& X) {
  if (!m.fitted()) throw Error(ErrorCode::UnfittedModel, "softmax regression has not been fitted");
  require_width(X.d, m.n_features);
  const Samples Z = standardize(X, m.mean, m.scale);
  std::vector<int> out(X.n());
  std::vector<double> s(m.n_classes);
  for (std::size_t i = 0; i < X.n(); ++i) {
    class_scores(m.weights, Z.row(i), X.d, m.n_classes, s.data());
    out[i] = argmax(s);
  }
  return out;
}

std::vector<int> predict_one(const RbfSvmModel& m, const Samples& X) {
  if (!m.fitted()) throw Error(ErrorCode::UnfittedModel, "SVM has not been fitted");
  require_width(X.d, m.n_features);
  std::vector<int> out(X.n());
  std::vector<double> s(m.n_classes);
  for (std::size_t i = 0; i < X.n(); ++i) {
    for (int c = 0; c < m.n_classes; ++c) s[c] = svm_decision(m.machines[c], X.row(i), m.gamma);
    out[i] = argmax(s);
  }
  return out;
}

}  // namespace

std::vector<int> predict_classes(const RiskModel& model, const Samples& X) {
  return std::visit([&](const auto& m) { return predict_one(m, X); }, model);
}

RiskPrediction predict_risk(const RiskModel& model, const Samples& X, std::span<const int> truth) {
  RiskPrediction out;
  const auto t0 = std::chrono::steady_clock::now();
  out.levels = predict_classes(model, X);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const int k = std::visit([](const auto& m) { return m.n_classes; }, model);
  out.report = report(confusion(truth, out.levels, k), elapsed,
                      k == kRiskClasses ? risk_class_names() : std::vector<std::string>{});
  return out;
}

}  // namespace lungmtl
