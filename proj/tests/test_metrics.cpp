#include <doctest.h>

#include "lungmtl/error.hpp"
#include "lungmtl/metrics.hpp"
#include "lungmtl/model.hpp"
#include "support.hpp"

using namespace lungmtl;

namespace {

// Probability that a random positive outscores a random negative, ties counted as one half.
std::optional<double> mann_whitney(const std::vector<int>& truth, const std::vector<double>& scores, int k, int cls) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < truth.size(); ++i) (truth[i] == cls ? pos : neg).push_back(scores[i * k + cls]);
  if (pos.empty() || neg.empty()) return std::nullopt;
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * neg.size());
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("confusion hand counts") {
    std::vector<int> t{0, 0, 1}, p{0, 1, 1};
    auto cm = confusion(t, p, 2);
    CHECK(cm.counts == std::vector<std::size_t>{1, 1, 0, 1});
    CHECK(cm.total() == 3);
    CHECK(cm.row_sum(0) == 2);
    CHECK(cm.col_sum(1) == 2);

    std::vector<int> same{2, 0, 1, 2, 2};
    auto diag = confusion(same, same, 3);
    CHECK(diag.at(0, 0) == 1);
    CHECK(diag.at(1, 1) == 1);
    CHECK(diag.at(2, 2) == 3);
    auto r = report(diag, 0.0);
    CHECK(r.accuracy == 1.0);
    for (auto& c : r.per_class) {
      CHECK(c.precision == 1.0);
      CHECK(c.recall == 1.0);
      CHECK(c.f1 == 1.0);
    }
    std::vector<int> bad{0, 3};
    try {
      confusion(bad, bad, 3);
      FAIL("expected LabelOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::LabelOutOfRange);
    }
    std::vector<int> longer{0, 0, 0};
    CHECK_THROWS_AS(confusion(t, std::vector<int>{0}, 2), Error);
    (void)longer;
  }

  TEST_CASE("confusion equals a brute-force tally") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 2 + trial % 5;
      std::vector<int> t(1000), p(1000);
      for (int i = 0; i < 1000; ++i) {
        t[i] = static_cast<int>(rng() % k);
        p[i] = static_cast<int>(rng() % k);
      }
      auto cm = confusion(t, p, k);
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
          std::size_t n = 0;
          for (int i = 0; i < 1000; ++i) n += t[i] == a && p[i] == b;
          CHECK(cm.at(a, b) == n);
        }
    }
  }

  TEST_CASE("report conventions") {
    std::vector<int> t{0, 0, 1, 1, 2}, p{0, 1, 1, 1, 1};
    auto r = report(confusion(t, p, 3), 1.5, {"a", "b", "c"});
    CHECK(r.per_class[2].precision == 0.0);  // never predicted
    CHECK(r.per_class[2].recall == 0.0);
    CHECK(r.per_class[1].precision == doctest::Approx(0.5));
    CHECK(r.per_class[1].recall == 1.0);
    CHECK(r.per_class[0].f1 == doctest::Approx(2 * 1.0 * 0.5 / 1.5));
    CHECK(r.total == 5);
    CHECK(r.wall_time_s == 1.5);
    double recall_w = 0;
    std::size_t support = 0;
    for (auto& c : r.per_class) {
      recall_w += c.recall * c.support;
      support += c.support;
    }
    CHECK(support == 5);
    CHECK(r.accuracy == doctest::Approx(recall_w / 5));
    CHECK(r.weighted.recall == doctest::Approx(r.accuracy));
    CHECK(r.macro.precision == doctest::Approx((1.0 + 0.5 + 0.0) / 3));
    ConfusionMatrix empty{3, std::vector<std::size_t>(9, 0)};
    try {
      report(empty, 0.0);
      FAIL("expected EmptyMatrix");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyMatrix);
    }
    auto text = format_report(r, "demo");
    CHECK(text.find("precision") != std::string::npos);
    CHECK(text.find("wall time") != std::string::npos);
    CHECK(report_csv(r).rfind("class,precision,recall,f1,support\n", 0) == 0);
  }

  TEST_CASE("accuracy equals support-weighted recall on random cases") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + trial % 4;
      std::vector<int> t(60), p(60);
      for (int i = 0; i < 60; ++i) {
        t[i] = static_cast<int>(rng() % k);
        p[i] = static_cast<int>(rng() % k);
      }
      auto r = report(confusion(t, p, k), 0);
      CHECK(r.weighted.recall == doctest::Approx(r.accuracy).epsilon(1e-12));
      for (auto& c : r.per_class) {
        CHECK(c.precision >= 0.0);
        CHECK(c.precision <= 1.0);
        CHECK(c.f1 <= 1.0);
      }
    }
  }

  TEST_CASE("roc closed forms") {
    std::vector<int> t{1, 1, 0, 0};
    std::vector<double> ordered{0.1, 0.9, 0.2, 0.8, 0.7, 0.3, 0.6, 0.4};
    auto roc = roc_auc(t, ordered, 2);
    CHECK(*roc.classes[1].auc == 1.0);
    CHECK(*roc.classes[0].auc == 1.0);
    auto& pts = roc.classes[1].points;
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);

    std::vector<double> flat(8, 0.5);
    CHECK(*roc_auc(t, flat, 2).classes[0].auc == 0.5);

    std::vector<int> single{0, 0, 0, 0};
    auto absent = roc_auc(single, ordered, 2);
    CHECK_FALSE(absent.classes[0].auc.has_value());
    CHECK_FALSE(absent.classes[1].auc.has_value());
    CHECK_FALSE(absent.macro_auc.has_value());
  }

  TEST_CASE("roc equals the Mann-Whitney count and is monotone-invariant") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 200, k = 4;
      std::vector<int> t(n);
      std::vector<double> s(n * k);
      for (auto& v : t) v = static_cast<int>(rng() % k);
      for (auto& v : s) v = static_cast<double>(rng() % 50) / 50.0;  // coarse grid forces ties
      auto roc = roc_auc(t, s, k);
      std::vector<double> warped(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3 * s[i]) - 7;
      auto roc2 = roc_auc(t, warped, k);
      for (int c = 0; c < k; ++c) {
        auto ref = mann_whitney(t, s, k, c);
        REQUIRE(ref.has_value());
        CHECK(std::abs(*roc.classes[c].auc - *ref) <= 1e-9);
        CHECK(*roc2.classes[c].auc == doctest::Approx(*roc.classes[c].auc).epsilon(1e-12));
        auto& pts = roc.classes[c].points;
        for (std::size_t i = 1; i < pts.size(); ++i) {
          CHECK(pts[i].fpr >= pts[i - 1].fpr);
          CHECK(pts[i].tpr >= pts[i - 1].tpr);
        }
      }
    }
  }

  TEST_CASE("macro AUC of uninformative scores is near one half") {
    std::mt19937_64 rng(4);
    const int n = 2000, k = 4;
    std::vector<int> t(n);
    for (auto& v : t) v = static_cast<int>(rng() % k);
    auto s = testing::random_vector(n * k, rng, 0, 1);
    auto roc = roc_auc(t, s, k);
    REQUIRE(roc.macro_auc.has_value());
    CHECK(std::abs(*roc.macro_auc - 0.5) <= 0.1);
  }

  TEST_CASE("history csv round trip") {
    std::vector<EpochRecord> h;
    for (int e = 1; e <= 20; ++e) {
      EpochRecord r;
      r.epoch = e;
      r.train_loss = 1.0 / (e + 0.37);
      r.val_loss = 2.0 / (e + 0.11);
      r.val_sound_acc = 0.05 * e;
      r.val_disease_acc = 0.01 * e + 1.0 / 3.0;
      r.train_sound_acc = 0.9;
      h.push_back(r);
    }
    auto text = history_dump(h, {{"seed", "42"}});
    CHECK(text.rfind("# seed=42\n", 0) == 0);
    auto rows = parse_history_csv(text);
    REQUIRE(rows.size() == 20);
    std::size_t lines = std::count(text.begin(), text.end(), '\n');
    CHECK(lines == 22);
    for (int i = 0; i < 20; ++i) {
      CHECK(rows[i].epoch == i + 1);
      CHECK(std::abs(rows[i].train_loss - h[i].train_loss) <= 1e-6);
      CHECK(std::abs(*rows[i].val_loss - *h[i].val_loss) <= 1e-6);
      CHECK(std::abs(rows[i].sound_acc - *h[i].val_sound_acc) <= 1e-6);
      CHECK(std::abs(rows[i].disease_acc - *h[i].val_disease_acc) <= 1e-6);
    }
    CHECK_THROWS_AS(history_dump({}), Error);
  }

  TEST_CASE("csv renderings carry headers") {
    std::vector<int> t{0, 1, 1}, p{0, 1, 0};
    auto cm = confusion(t, p, 2);
    CHECK(confusion_csv(cm, {"x", "y"}).rfind("true\\pred,x,y\n", 0) == 0);
    std::vector<double> s{0.9, 0.1, 0.2, 0.8, 0.6, 0.4};
    auto csv = roc_csv(roc_auc(t, s, 2), {"x", "y"});
    CHECK(csv.rfind("class,fpr,tpr\n", 0) == 0);
    CHECK(csv.find("class,auc") != std::string::npos);
  }
}
