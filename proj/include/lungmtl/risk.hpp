#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lungmtl/corpus.hpp"
#include "lungmtl/metrics.hpp"

namespace lungmtl {

enum class RiskLevel : int { VerySevere = 0, Severe = 1, Moderate = 2, Mild = 3 };
enum class BmiCategory : int { Underweight, Healthy, Overweight, Obese };

inline constexpr int kRiskClasses = 4;

std::string_view to_string(RiskLevel level);
std::string_view to_string(BmiCategory category);
std::vector<std::string> risk_class_names();

// Underweight < 18.5; Healthy [18.5, 24.9]; Overweight (24.9, 29.9]; Obese > 29.9.
BmiCategory bmi_category(double bmi);

// Age band dominates; underweight women aged 65+ escalate to VerySevere. Below 35 there is no
// rubric row and OutOfRubric is thrown.
RiskLevel assign_risk(const DemographicRecord& rec);

struct RiskLabels {
  std::vector<DemographicRecord> records;  // rubric-covered records, input order
  std::vector<int> levels;
  std::vector<int> excluded_patients;  // OutOfRubric, reported through the warning sink
};
RiskLabels label_records(std::span<const DemographicRecord> records);

// Uniform age in [age_lo, age_hi), BMI in [bmi_lo, bmi_hi), fair-coin gender; patient ids 0..n-1.
std::vector<DemographicRecord> synth_demographics(std::size_t n, std::uint64_t seed, double age_lo = 35.0,
                                                 double age_hi = 90.0, double bmi_lo = 15.0, double bmi_hi = 40.0);

// Dense row-major sample table.
struct Samples {
  std::size_t d = 0;
  std::vector<double> x;

  std::size_t n() const { return d ? x.size() / d : 0; }
  const double* row(std::size_t i) const { return x.data() + i * d; }
  void push(std::span<const double> r);
};

// (age, gender as 0/1, BMI)
inline constexpr std::size_t kRiskFeatures = 3;
Samples risk_features(std::span<const DemographicRecord> records);

// ---- random forest --------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> distribution;  // class frequencies of the training samples reaching the node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  const TreeNode& leaf_for(const double* x) const;
  int predict(const double* x) const;  // majority class of the leaf, ties to the lower index
};

struct TreeOptions {
  std::size_t max_features = 0;  // features examined per split; 0 means all
  std::size_t min_samples_leaf = 1;
  int max_depth = -1;  // -1: grow until pure
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double weighted_gini = 0.0;  // size-weighted mean impurity of the two children
};

double gini(std::span<const double> counts);
// Exhaustive search over features and midpoints between consecutive distinct values; the first
// minimum in (feature, threshold) order wins. feature = -1 when no split separates the samples.
SplitChoice best_split(const Samples& X, std::span<const int> y, int n_classes, std::span<const std::size_t> idx,
                       std::span<const std::size_t> features);

DecisionTree fit_tree(const Samples& X, std::span<const int> y, int n_classes, std::span<const std::size_t> idx,
                      const TreeOptions& opt, std::mt19937_64& rng);

struct ForestOptions {
  std::size_t n_estimators = 100;
  std::uint64_t seed = 42;
  bool bootstrap = true;
  TreeOptions tree;
  unsigned workers = 0;
};

struct ForestModel {
  int n_classes = 0;
  std::size_t n_features = 0;
  std::uint64_t seed = 42;
  std::vector<DecisionTree> trees;

  bool fitted() const { return !trees.empty(); }
};

ForestModel fit_forest(const Samples& X, std::span<const int> y, int n_classes, const ForestOptions& opt = {});

// ---- multinomial logistic regression ------------------------------------------

struct SoftmaxRegressionOptions {
  int max_iter = 1000;
  double tol = 1e-5;  // on the max-abs gradient entry
  double lr = 1e-2;
};

struct SoftmaxRegressionModel {
  int n_classes = 0;
  std::size_t n_features = 0;
  std::vector<double> mean;   // z-score statistics of the training set
  std::vector<double> scale;
  std::vector<double> weights;  // n_classes x (n_features + 1), bias in the last column
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_history;  // not serialized

  bool fitted() const { return !weights.empty(); }
};

SoftmaxRegressionModel fit_softmax_regression(const Samples& X, std::span<const int> y, int n_classes,
                                              const SoftmaxRegressionOptions& opt = {});

// Mean cross-entropy and its gradient with respect to `weights` on already standardized inputs.
double softmax_regression_loss_grad(std::span<const double> weights, const Samples& Z, std::span<const int> y,
                                    int n_classes, std::vector<double>* grad);

// ---- RBF support vector machine ----------------------------------------------

struct BinarySvm {
  Samples support;            // support vectors (alpha > 0)
  std::vector<double> coef;   // alpha_i * y_i per support vector
  double bias = 0.0;          // f(x) = sum coef_i k(sv_i, x) + bias
  double max_kkt_residual = 0.0;
  double dual_objective = 0.0;  // sum(alpha) - 1/2 alpha^T Q alpha
  std::size_t iterations = 0;
};

struct SvmOptions {
  double C = 1.0;
  double gamma = 0.0;  // 0 selects 1 / n_features
  double tol = 1e-3;
  std::size_t max_iter = 0;  // 0 selects max(10^7, 100 n)
};

struct BinarySvmFit {
  BinarySvm machine;
  std::vector<double> alpha;  // full dual vector over the training set
};

double rbf_kernel(const double* a, const double* b, std::size_t d, double gamma);
double svm_decision(const BinarySvm& m, const double* x, double gamma);
// Labels are +1/-1. Throws NoConvergence with the largest KKT violation when the cap is hit.
BinarySvmFit fit_binary_svm(const Samples& X, std::span<const int> y_pm, double C, double gamma, double tol,
                            std::size_t max_iter);
double svm_dual_objective(std::span<const double> alpha, std::span<const int> y_pm, const Samples& X, double gamma);

struct RbfSvmModel {
  int n_classes = 0;
  std::size_t n_features = 0;
  double C = 1.0;
  double gamma = 0.0;
  double tol = 1e-3;
  std::vector<BinarySvm> machines;  // one-vs-rest, one per class

  bool fitted() const { return !machines.empty(); }
  double max_kkt_residual() const;
};

RbfSvmModel fit_rbf_svm(const Samples& X, std::span<const int> y, int n_classes, const SvmOptions& opt = {});

// ---- prediction ---------------------------------------------------------------

using RiskModel = std::variant<ForestModel, SoftmaxRegressionModel, RbfSvmModel>;

std::string_view risk_model_kind(const RiskModel& model);  // "forest", "logreg", "svm"

// Throws UnfittedModel for a default-constructed model.
std::vector<int> predict_classes(const RiskModel& model, const Samples& X);

struct RiskPrediction {
  std::vector<int> levels;
  EvalReport report;
};

RiskPrediction predict_risk(const RiskModel& model, const Samples& X, std::span<const int> truth);

}  // namespace lungmtl
