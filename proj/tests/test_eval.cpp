#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mamaf/errors.hpp"
#include "mamaf/eval.hpp"
#include "oracles.hpp"

using namespace mamaf;
using nlohmann::json;

namespace {

std::vector<ScoredPrediction> scored(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<ScoredPrediction> out;
  for (double s : pos) out.push_back({"p" + std::to_string(out.size()), s, 1});
  for (double s : neg) out.push_back({"n" + std::to_string(out.size()), s, 0});
  return out;
}

double pct(const std::optional<double>& v) { return percent(*v); }

}  // namespace

TEST_CASE("metrics reproduce the published confusion-matrix rows") {
  const Metrics a = metrics({88, 6, 11, 43});
  CHECK(pct(a.sensitivity) == 93.62);
  CHECK(pct(a.specificity) == 79.63);
  CHECK(pct(a.precision) == 88.89);
  CHECK(pct(a.f1) == 91.19);
  CHECK(pct(a.accuracy) == 88.51);

  const Metrics b = metrics({84, 10, 14, 40});
  CHECK(pct(b.sensitivity) == 89.36);
  CHECK(pct(b.accuracy) == 83.78);
}

TEST_CASE("metric definitions and undefined cases") {
  const Metrics m = metrics({3, 1, 2, 4});
  CHECK(*m.sensitivity == doctest::Approx(0.75));
  CHECK(*m.specificity == doctest::Approx(4.0 / 6));
  CHECK(*m.precision == doctest::Approx(0.6));
  CHECK(*m.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK(*m.accuracy == doctest::Approx(0.7));

  const Metrics perfect = metrics({5, 0, 0, 7});
  for (const auto& v : {perfect.sensitivity, perfect.specificity, perfect.precision, perfect.f1, perfect.accuracy})
    CHECK(*v == 1.0);

  const Metrics zero = metrics({});
  CHECK_FALSE(zero.sensitivity);
  CHECK_FALSE(zero.accuracy);
  CHECK_FALSE(zero.f1);
  const Metrics no_pos = metrics({0, 0, 2, 3});
  CHECK_FALSE(no_pos.sensitivity);
  CHECK(no_pos.specificity.has_value());
  CHECK(format_percent(std::nullopt) == "undefined");
  CHECK(format_percent(0.936170) == "93.62");
  CHECK_THROWS_AS(metrics({-1, 0, 0, 0}), Error);
}

TEST_CASE("metrics are scale free") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(1, 50);
  for (int i = 0; i < 100; ++i) {
    const ConfusionMatrix cm{d(rng), d(rng), d(rng), d(rng)};
    const std::int64_t k = d(rng);
    const Metrics a = metrics(cm), b = metrics({cm.tp * k, cm.fn * k, cm.fp * k, cm.tn * k});
    CHECK(*a.sensitivity == doctest::Approx(*b.sensitivity).epsilon(1e-14));
    CHECK(*a.specificity == doctest::Approx(*b.specificity).epsilon(1e-14));
    CHECK(*a.precision == doctest::Approx(*b.precision).epsilon(1e-14));
    CHECK(*a.f1 == doctest::Approx(*b.f1).epsilon(1e-14));
    CHECK(*a.accuracy == doctest::Approx(*b.accuracy).epsilon(1e-14));
  }
}

TEST_CASE("thresholding and cumulative confusion") {
  const auto preds = scored({0.9, 0.5, 0.51}, {0.2, 0.7, 0.5});
  const ConfusionMatrix cm = confusion_from_predictions(preds);
  CHECK(cm == ConfusionMatrix{2, 1, 1, 2});
  std::int64_t correct = 0;
  for (const auto& p : preds) correct += (p.score > 0.5) == (p.label == 1);
  CHECK(*metrics(cm).accuracy == static_cast<double>(correct) / 6.0);

  const std::vector<ConfusionMatrix> folds{{18, 1, 2, 9}, {17, 2, 3, 8}, {18, 1, 2, 9}, {17, 1, 2, 9}, {18, 1, 2, 8}};
  const ConfusionMatrix total = cumulative_confusion(folds);
  CHECK(total == ConfusionMatrix{88, 6, 11, 43});
  CHECK(total.total() == 148);
  CHECK(cumulative_confusion({cm}) == cm);
}

TEST_CASE("roc_auc examples") {
  CHECK(roc_auc(scored({0.9, 0.8}, {0.1, 0.2, 0.3})).auc == 1.0);
  CHECK(roc_auc(scored({0.4, 0.4}, {0.4, 0.4, 0.4})).auc == 0.5);
  const RocCurve c = roc_auc(scored({0.9, 0.6, 0.4}, {0.5, 0.3}));
  CHECK(c.auc == doctest::Approx(5.0 / 6).epsilon(1e-12));
  CHECK(std::isinf(c.points.front().threshold));
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  CHECK_THROWS_AS(roc_auc(scored({0.2, 0.3}, {})), Error);
  CHECK_THROWS_AS(roc_auc(scored({1.2}, {0.1})), Error);
}

TEST_CASE("roc_auc equals the pair-count oracle on random small instances with ties") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 30)(rng);
    // Coarse score grid forces frequent ties.
    const int levels = std::uniform_int_distribution<int>(2, 12)(rng);
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<ScoredPrediction> preds;
    for (int i = 0; i < n; ++i) {
      const double s = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      const int y = i == 0 ? 1 : i == 1 ? 0 : std::uniform_int_distribution<int>(0, 1)(rng);
      scores.push_back(s);
      labels.push_back(y);
      preds.push_back({std::to_string(i), s, y});
    }
    const RocCurve c = roc_auc(preds);
    CHECK(std::abs(c.auc - oracle::auc_pairs(scores, labels)) < 1e-9);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
}

TEST_CASE("metrics JSON round-trips and marks undefined values") {
  const json j = json::parse(metrics_json({88, 6, 11, 43}, 0.9321));
  CHECK(j["sensitivity"].get<double>() == 93.62);
  CHECK(j["specificity"].get<double>() == 79.63);
  CHECK(j["f1"].get<double>() == 91.19);
  CHECK(j["auc"].get<double>() == 93.21);
  CHECK(j["counts"]["tp"] == 88);
  CHECK(j["counts"]["total"] == 148);

  const json u = json::parse(metrics_json({0, 0, 3, 4}, std::nullopt));
  CHECK(u["sensitivity"] == "undefined");
  CHECK(u["auc"] == "undefined");
  CHECK(u["specificity"].get<double>() == 57.14);

  Report r;
  r.counts = {5, 1, 1, 5};
  r.auc = 0.9;
  r.fold_counts = {{3, 0, 1, 2}, {2, 1, 0, 3}};
  r.fold_aucs = {0.8, 1.0};
  const json rj = json::parse(report_json(r));
  CHECK(rj["folds"].size() == 2);
  CHECK(rj["folds"][1]["fold"] == 1);
  CHECK(rj["auc_mean_of_folds"].get<double>() == 90.0);
  CHECK(report_json(r) == report_json(r));
}

TEST_CASE("ROC CSV, SVG and emitted files") {
  const RocCurve c = roc_auc(scored({0.9, 0.6, 0.4, 0.8}, {0.5, 0.3, 0.65}));
  std::istringstream csv(roc_csv(c));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "fpr,tpr,threshold");
  double last = -1;
  int rows = 0;
  while (std::getline(csv, line)) {
    const double fpr = std::stod(line.substr(0, line.find(',')));
    CHECK(fpr >= last);
    last = fpr;
    ++rows;
  }
  CHECK(rows == static_cast<int>(c.points.size()));

  const std::string svg = roc_svg({{"pooled", c}});
  CHECK(svg.find("viewBox=\"0 0 1000 800\"") != std::string::npos);
  CHECK(svg.find("<script") == std::string::npos);
  char auc[32];
  std::snprintf(auc, sizeof auc, "AUC = %.2f", c.auc);
  CHECK(svg.find(auc) != std::string::npos);

  const std::string loss = loss_svg({{"fold 0", {1.0, 0.7, 0.5}, {1.1, 0.9, 0.8}}});
  CHECK(loss.find("<polyline") != std::string::npos);
  CHECK(loss.find("<script") == std::string::npos);
  CHECK(loss == loss_svg({{"fold 0", {1.0, 0.7, 0.5}, {1.1, 0.9, 0.8}}}));

  const auto dir = std::filesystem::temp_directory_path() / ("mamaf_eval_" + std::to_string(std::random_device{}()));
  Report r;
  r.counts = {3, 1, 1, 2};
  r.auc = c.auc;
  emit_report(r, c, {{"fold 0", c}}, {{"fold 0", {1.0, 0.5}, {1.0, 0.6}}}, dir);
  for (const char* f : {"metrics.json", "roc.csv", "roc.svg", "loss_curve.svg"}) CHECK(std::filesystem::exists(dir / f));
  CHECK(read_text(dir / "roc.csv") == roc_csv(c));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(write_text("/proc/definitely/not/writable.json", "{}"), DataError);
}
