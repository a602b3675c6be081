#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <vector>

#include "echomil/errors.hpp"
#include "echomil/evaluation.hpp"
#include "echomil/metrics.hpp"
#include "echomil/training.hpp"
#include "support.hpp"

using namespace echomil;

namespace {

constexpr Label P = Label::positive;
constexpr Label N = Label::negative;

double brute_force_auc(const std::vector<double>& scores, const std::vector<Label>& truths) {
  double wins = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truths[i] != P) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truths[j] != N) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("confusion matrix counts") {
  const std::vector<Label> a{P, N};
  CHECK(confusion_matrix(a, a) == ConfusionMatrix{1, 1, 0, 0});

  const std::vector<Label> pp{P, P}, nn{N, N};
  CHECK(confusion_matrix(pp, nn) == ConfusionMatrix{0, 0, 2, 0});

  const std::vector<Label> preds{P, N, P, N}, truths{P, P, N, N};
  CHECK(confusion_matrix(preds, truths) == ConfusionMatrix{1, 1, 1, 1});
}

TEST_CASE("confusion matrix rejects bad input") {
  const std::vector<Label> one{P}, two{P, N}, none;
  CHECK_THROWS_AS(confusion_matrix(one, two), ArgumentError);
  CHECK_THROWS_AS(confusion_matrix(none, none), ArgumentError);
}

TEST_CASE("derived metrics for a worked example") {
  const auto m = derive_metrics({10, 5, 3, 2});
  CHECK(*m.accuracy == doctest::Approx(0.75));
  CHECK(*m.sensitivity == doctest::Approx(10.0 / 12.0));
  CHECK(*m.specificity == doctest::Approx(0.625));
  CHECK(*m.f1 == doctest::Approx(0.8));
  CHECK(*m.ppv == doctest::Approx(10.0 / 13.0));
  CHECK(*m.npv == doctest::Approx(5.0 / 7.0));
  CHECK(m.n == 20);
}

TEST_CASE("undefined metrics stay empty") {
  const auto m = derive_metrics({7, 0, 0, 0});
  CHECK(*m.accuracy == 1.0);
  CHECK(*m.sensitivity == 1.0);
  CHECK(*m.f1 == 1.0);
  CHECK(*m.ppv == 1.0);
  CHECK_FALSE(m.specificity.has_value());
  CHECK_FALSE(m.npv.has_value());
  CHECK(format_percent(m.specificity) == "—");
  CHECK_THROWS_AS(derive_metrics({0, 0, 0, 0}), ArgumentError);
}

TEST_CASE("accuracy and F1 identities over random matrices") {
  testing::Gen gen(11);
  for (int trial = 0; trial < 2000; ++trial) {
    ConfusionMatrix cm{gen.integer(0, 50), gen.integer(0, 50), gen.integer(0, 50),
                       gen.integer(0, 50)};
    if (cm.total() == 0) continue;
    const auto m = derive_metrics(cm);
    const double pos = static_cast<double>(cm.positives());
    const double neg = static_cast<double>(cm.negatives());
    const double weighted = (m.sensitivity.value_or(0.0) * pos + m.specificity.value_or(0.0) * neg) /
                            (pos + neg);
    CHECK(std::abs(*m.accuracy - weighted) < 1e-12);
    if (m.ppv && m.sensitivity && (*m.ppv + *m.sensitivity) > 0) {
      const double harmonic = 2.0 * *m.ppv * *m.sensitivity / (*m.ppv + *m.sensitivity);
      CHECK(std::abs(*m.f1 - harmonic) < 1e-12);
    }
  }
}

TEST_CASE("AUC examples") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<Label>{P, P, N, N}) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<Label>{P, N, P, N}) == 0.5);
  CHECK(auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, std::vector<Label>{P, P, N, N}) == 0.75);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{P, P}), UndefinedMetricError);
}

TEST_CASE("AUC equals pairwise counting and ignores monotone transforms") {
  testing::Gen gen(5);
  for (int trial = 0; trial < 3000; ++trial) {
    const int n = gen.integer(2, 20);
    std::vector<double> scores(n);
    std::vector<Label> truths(n);
    for (int i = 0; i < n; ++i) {
      // Coarse grid so ties are common.
      scores[i] = gen.integer(0, 6) / 6.0;
      truths[i] = gen.label();
    }
    truths[0] = P;
    truths[1] = N;
    const double a = auc(scores, truths);
    CHECK(std::abs(a - brute_force_auc(scores, truths)) < 1e-12);
    std::vector<double> warped(n);
    for (int i = 0; i < n; ++i) warped[i] = std::exp(3.0 * scores[i]) - 7.0;
    CHECK(std::abs(auc(warped, truths) - a) < 1e-12);
  }
}

TEST_CASE("mean and population std over folds") {
  const std::vector<std::optional<double>> acc{0.80, 0.82, 0.84, 0.86, 0.88};
  const auto ms = mean_std(acc);
  CHECK(*ms.mean == doctest::Approx(0.84));
  CHECK(*ms.stddev == doctest::Approx(std::sqrt(0.0008)));
  CHECK(format_mean_std(ms) == "84.00±2.83");

  const std::vector<std::optional<double>> gap{0.5, std::nullopt};
  CHECK(format_mean_std(mean_std(gap)) == "—");
}

TEST_CASE("cross-validation table renders every column") {
  CVReport report;
  report.k = 2;
  for (int f = 0; f < 2; ++f) {
    FoldResult fold;
    fold.fold = f;
    fold.metrics = derive_metrics({3, 3 - f, f, 0});
    fold.metrics.auc = 0.9;
    report.folds.push_back(fold);
  }
  for (const auto& name : metric_names()) report.aggregate[name] = aggregate_metric(report.folds, name);
  const std::string text = render_cv_table(report);
  for (const char* title : {"AUC(%)", "Accuracy(%)", "Sensitivity(%)", "Specificity(%)", "F1(%)"}) {
    CHECK(text.find(title) != std::string::npos);
  }
  CHECK(text.find("90.00±0.00") != std::string::npos);
  CHECK(text.find("population") != std::string::npos);
}

TEST_CASE("per-patient aggregation takes the OR of video decisions") {
  std::vector<SampleRecord> videos{
      {"a1", P, 0.2, N, {}, {}}, {"a2", P, 0.7, P, {}, {}},  // patient A: one positive video
      {"b1", N, 0.1, N, {}, {}}, {"b2", N, 0.3, N, {}, {}},  // patient B: all negative
      {"c1", N, 0.6, P, {}, {}},                              // patient C: false alarm
      {"solo", P, 0.4, N, {}, {}},                            // not in the map
  };
  const std::map<std::string, std::string> patient_of{
      {"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}, {"c1", "C"}};
  const auto patients = aggregate_by_patient(videos, patient_of);
  REQUIRE(patients.size() == 4);
  CHECK(patients[0].id == "A");
  CHECK(patients[0].label == P);
  CHECK(patients[0].score == 0.7);
  CHECK(patients[0].votes.size() == 2);
  CHECK(patients[1].id == "B");
  CHECK(patients[1].label == N);
  CHECK(patients[2].label == P);
  CHECK(patients[2].truth == N);
  CHECK(patients[3].id == "solo");
  const auto m = metrics_from_records(patients);
  CHECK(m.counts == ConfusionMatrix{1, 1, 1, 1});

  testing::TempDir dir("patients");
  std::ofstream(dir / "p.csv") << "id,patient\na1,A\na2,A\n";
  CHECK(read_patient_map(dir / "p.csv").at("a2") == "A");
  std::ofstream(dir / "bad.csv") << "video,who\n";
  CHECK_THROWS_AS(read_patient_map(dir / "bad.csv"), ArgumentError);
}
