#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungmtl/model.hpp"

namespace lungmtl {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::size_t> counts;

  std::size_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * k + pred]; }
  std::size_t total() const;
  std::size_t row_sum(int truth) const;
  std::size_t col_sum(int pred) const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int k);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  ClassMetrics macro;     // unweighted mean over classes
  ClassMetrics weighted;  // support-weighted mean
  std::size_t total = 0;
  double wall_time_s = 0.0;
};

// Zero denominators score 0. Throws EmptyMatrix when the matrix holds no examples.
EvalReport report(const ConfusionMatrix& cm, double wall_time_s, std::vector<std::string> class_names = {});

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ClassRoc {
  std::vector<RocPoint> points;  // (0,0) ... (1,1), grouped by distinct score
  std::optional<double> auc;     // absent when the class has no positives or no negatives
};

struct RocCurve {
  std::vector<ClassRoc> classes;
  std::optional<double> macro_auc;  // mean over classes whose AUC is defined
};

// One-vs-rest ROC per class over a row-major [N, K] score matrix.
RocCurve roc_auc(std::span<const int> truth, std::span<const double> scores, int k);

template <typename T>
RocCurve roc_auc(std::span<const int> truth, const Tensor<T>& probs) {
  std::vector<double> s(probs.data.begin(), probs.data.end());
  return roc_auc(truth, s, static_cast<int>(probs.dim(1)));
}

std::vector<std::string> sound_class_names();
std::vector<std::string> disease_class_names();

// classification-report style text block
std::string format_report(const EvalReport& r, const std::string& title = {});
std::string report_csv(const EvalReport& r);
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names = {});
std::string roc_csv(const RocCurve& roc, const std::vector<std::string>& names = {});

// CSV with columns epoch,train_loss,val_loss,sound_acc,disease_acc. Accuracies are validation
// accuracies when a validation set was used, training accuracies otherwise. `comments` are
// emitted first as "# key=value" lines.
std::string history_dump(std::span<const EpochRecord> history,
                         const std::vector<std::pair<std::string, std::string>>& comments = {});

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double sound_acc = 0.0;
  double disease_acc = 0.0;
};
std::vector<HistoryRow> parse_history_csv(const std::string& text);

}  // namespace lungmtl
