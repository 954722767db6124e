#include "lungmtl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace lungmtl {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(int truth) const {
  std::size_t s = 0;
  for (int p = 0; p < k; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(int pred) const {
  std::size_t s = 0;
  for (int t = 0; t < k; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "class count must be >= 1");
  if (truth.size() != pred.size()) throw Error(ErrorCode::ShapeMismatch, "truth and prediction lengths differ");
  ConfusionMatrix cm{k, std::vector<std::size_t>(static_cast<std::size_t>(k) * k, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k)
      throw Error(ErrorCode::LabelOutOfRange, "example " + std::to_string(i) + ": label outside [0, " +
                                                  std::to_string(k) + ")");
    ++cm.counts[static_cast<std::size_t>(truth[i]) * k + pred[i]];
  }
  return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int width, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%*.*f", width, prec, v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

EvalReport report(const ConfusionMatrix& cm, double wall_time_s, std::vector<std::string> class_names) {
  EvalReport r;
  r.total = cm.total();
  if (r.total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix holds no examples");
  r.wall_time_s = wall_time_s;
  if (class_names.empty())
    for (int c = 0; c < cm.k; ++c) class_names.push_back(std::to_string(c));
  r.class_names = std::move(class_names);

  std::size_t trace = 0;
  for (int c = 0; c < cm.k; ++c) {
    ClassMetrics m;
    const std::size_t tp = cm.at(c, c);
    trace += tp;
    m.support = cm.row_sum(c);
    m.precision = ratio(tp, cm.col_sum(c));
    m.recall = ratio(tp, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class.push_back(m);
  }
  r.accuracy = ratio(trace, r.total);
  const double n = static_cast<double>(r.total);
  for (const auto& m : r.per_class) {
    r.macro.precision += m.precision / cm.k;
    r.macro.recall += m.recall / cm.k;
    r.macro.f1 += m.f1 / cm.k;
    const double w = static_cast<double>(m.support) / n;
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  r.macro.support = r.weighted.support = r.total;
  return r;
}

RocCurve roc_auc(std::span<const int> truth, std::span<const double> scores, int k) {
  const std::size_t n = truth.size();
  if (k < 1 || scores.size() != n * static_cast<std::size_t>(k))
    throw Error(ErrorCode::ShapeMismatch, "score matrix must be [N, K]");
  for (int t : truth)
    if (t < 0 || t >= k) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(t));

  RocCurve roc;
  double auc_sum = 0.0;
  int auc_count = 0;
  std::vector<std::size_t> order(n);
  for (int c = 0; c < k; ++c) {
    ClassRoc cr;
    std::size_t pos = 0;
    for (int t : truth) pos += t == c;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
      roc.classes.push_back(cr);
      continue;
    }
    auto score = [&](std::size_t i) { return scores[i * k + c]; };
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });

    cr.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double auc = 0.0;
    for (std::size_t i = 0; i < n;) {
      const double s = score(order[i]);
      std::size_t j = i;
      for (; j < n && score(order[j]) == s; ++j) (truth[order[j]] == c ? tp : fp)++;
      const RocPoint next{static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
      auc += (next.fpr - cr.points.back().fpr) * (next.tpr + cr.points.back().tpr) / 2.0;
      cr.points.push_back(next);
      i = j;
    }
    cr.auc = auc;
    auc_sum += auc;
    ++auc_count;
    roc.classes.push_back(std::move(cr));
  }
  if (auc_count) roc.macro_auc = auc_sum / auc_count;
  return roc;
}

std::vector<std::string> sound_class_names() {
  std::vector<std::string> out;
  for (int c = 0; c < kSoundClasses; ++c) out.emplace_back(to_string(static_cast<SoundLabel>(c)));
  return out;
}

std::vector<std::string> disease_class_names() {
  std::vector<std::string> out;
  for (int c = 0; c < kDiseaseClasses; ++c) out.emplace_back(to_string(static_cast<DiseaseLabel>(c)));
  return out;
}

std::string format_report(const EvalReport& r, const std::string& title) {
  std::size_t label_w = 12;
  for (const auto& name : r.class_names) label_w = std::max(label_w, name.size());
  std::ostringstream out;
  if (!title.empty()) out << title << "\n\n";
  out << std::string(label_w, ' ') << "  precision    recall  f1-score   support\n\n";
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    out << pad_left(name, label_w) << fixed(m.precision, 11, 2) << fixed(m.recall, 10, 2) << fixed(m.f1, 10, 2)
        << pad_left(std::to_string(m.support), 10) << '\n';
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) row(r.class_names[c], r.per_class[c]);
  out << '\n'
      << pad_left("accuracy", label_w) << std::string(21, ' ') << fixed(r.accuracy, 10, 2)
      << pad_left(std::to_string(r.total), 10) << '\n';
  row("macro avg", r.macro);
  row("weighted avg", r.weighted);
  out << "\nwall time: " << fixed(r.wall_time_s, 0, 3) << " s\n";
  return out.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "class,precision,recall,f1,support\n";
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    out << name << ',' << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ',' << fmt_double(m.f1) << ','
        << m.support << '\n';
  };
  for (std::size_t c = 0; c < r.per_class.size(); ++c) row(r.class_names[c], r.per_class[c]);
  out << "accuracy,,," << fmt_double(r.accuracy) << ',' << r.total << '\n';
  row("macro avg", r.macro);
  row("weighted avg", r.weighted);
  return out.str();
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  auto name = [&](int c) { return c < static_cast<int>(names.size()) ? names[c] : std::to_string(c); };
  std::ostringstream out;
  out << "true\\pred";
  for (int p = 0; p < cm.k; ++p) out << ',' << name(p);
  out << '\n';
  for (int t = 0; t < cm.k; ++t) {
    out << name(t);
    for (int p = 0; p < cm.k; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  return out.str();
}

std::string roc_csv(const RocCurve& roc, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "class,fpr,tpr\n";
  for (std::size_t c = 0; c < roc.classes.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    for (const auto& p : roc.classes[c].points) out << name << ',' << fmt_double(p.fpr) << ',' << fmt_double(p.tpr) << '\n';
  }
  out << "\nclass,auc\n";
  for (std::size_t c = 0; c < roc.classes.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    out << name << ',' << (roc.classes[c].auc ? fmt_double(*roc.classes[c].auc) : "") << '\n';
  }
  out << "macro," << (roc.macro_auc ? fmt_double(*roc.macro_auc) : "") << '\n';
  return out.str();
}

std::string history_dump(std::span<const EpochRecord> history,
                         const std::vector<std::pair<std::string, std::string>>& comments) {
  if (history.empty()) throw Error(ErrorCode::InvalidArgument, "empty training history");
  std::ostringstream out;
  for (const auto& [k, v] : comments) out << "# " << k << '=' << v << '\n';
  out << "epoch,train_loss,val_loss,sound_acc,disease_acc\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt_double(r.train_loss) << ',' << (r.val_loss ? fmt_double(*r.val_loss) : "") << ','
        << fmt_double(r.val_sound_acc.value_or(r.train_sound_acc)) << ','
        << fmt_double(r.val_disease_acc.value_or(r.train_disease_acc)) << '\n';
  }
  return out.str();
}

std::vector<HistoryRow> parse_history_csv(const std::string& text) {
  std::vector<HistoryRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "epoch,train_loss,val_loss,sound_acc,disease_acc")
        throw Error(ErrorCode::MalformedHeader, "unexpected history header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() == 4) f.emplace_back();
    if (f.size() != 5) throw Error(ErrorCode::MalformedRow, "history row '" + line + "'");
    try {
      HistoryRow r;
      r.epoch = std::stoi(f[0]);
      r.train_loss = std::stod(f[1]);
      if (!f[2].empty()) r.val_loss = std::stod(f[2]);
      r.sound_acc = std::stod(f[3]);
      r.disease_acc = std::stod(f[4]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRow, "history row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace lungmtl
