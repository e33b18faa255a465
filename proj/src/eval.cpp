#include "mamaf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mamaf/errors.hpp"

namespace mamaf {

using nlohmann::json;

namespace {
std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den <= 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}
}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fn < 0 || cm.fp < 0 || cm.tn < 0) throw Error("confusion matrix counts must be nonnegative");
  Metrics m;
  m.sensitivity = ratio(cm.tp, cm.tp + cm.fn);
  m.specificity = ratio(cm.tn, cm.tn + cm.fp);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  if (m.sensitivity && m.precision && *m.sensitivity + *m.precision > 0) {
    m.f1 = 2 * *m.sensitivity * *m.precision / (*m.sensitivity + *m.precision);
  }
  return m;
}

double percent(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

std::string format_percent(const std::optional<double>& fraction) {
  return fraction ? fixed(percent(*fraction), 2) : "undefined";
}

ConfusionMatrix confusion_from_predictions(const std::vector<ScoredPrediction>& preds) {
  ConfusionMatrix cm;
  for (const auto& p : preds) {
    const bool predicted = p.score > 0.5;
    if (p.label) predicted ? ++cm.tp : ++cm.fn;
    else predicted ? ++cm.fp : ++cm.tn;
  }
  return cm;
}

ConfusionMatrix cumulative_confusion(const std::vector<ConfusionMatrix>& folds) {
  ConfusionMatrix total;
  for (const auto& f : folds) total += f;
  return total;
}

RocCurve roc_auc(const std::vector<ScoredPrediction>& preds) {
  std::int64_t positives = 0, negatives = 0;
  for (const auto& p : preds) {
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw Error("roc_auc: score outside [0,1] for " + p.subject_id);
    p.label ? ++positives : ++negatives;
  }
  if (positives == 0 || negatives == 0) throw Error("roc_auc: both classes must be present");

  std::vector<const ScoredPrediction*> order;
  for (const auto& p : preds) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->score > b->score; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = order[i]->score;
    for (; i < order.size() && order[i]->score == threshold; ++i) order[i]->label ? ++tp : ++fp;
    const RocPoint pt{static_cast<double>(fp) / static_cast<double>(negatives),
                      static_cast<double>(tp) / static_cast<double>(positives), threshold};
    const RocPoint& prev = curve.points.back();
    curve.auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2;
    curve.points.push_back(pt);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace {
json percent_or_undefined(const std::optional<double>& v) {
  if (!v) return "undefined";
  return percent(*v);
}

json metrics_object(const ConfusionMatrix& cm, const std::optional<double>& auc) {
  const Metrics m = metrics(cm);
  json j;
  j["sensitivity"] = percent_or_undefined(m.sensitivity);
  j["specificity"] = percent_or_undefined(m.specificity);
  j["precision"] = percent_or_undefined(m.precision);
  j["f1"] = percent_or_undefined(m.f1);
  j["accuracy"] = percent_or_undefined(m.accuracy);
  j["auc"] = percent_or_undefined(auc);
  j["counts"] = {{"tp", cm.tp}, {"fn", cm.fn}, {"fp", cm.fp}, {"tn", cm.tn}, {"total", cm.total()}};
  return j;
}

struct Frame {
  // Plot area inside the 1000x800 canvas.
  double left = 110, top = 60, width = 820, height = 620;
  double x(double v) const { return left + v * width; }
  double y(double v) const { return top + (1 - v) * height; }
};

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"800\" viewBox=\"0 0 1000 800\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"1000\" height=\"800\" fill=\"white\"/>\n"
     << "<text x=\"500\" y=\"35\" font-family=\"sans-serif\" font-size=\"22\" text-anchor=\"middle\">" << title
     << "</text>\n";
  return os.str();
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, double ymax) {
  std::ostringstream os;
  os << "<rect x=\"" << fixed(f.left, 1) << "\" y=\"" << fixed(f.top, 1) << "\" width=\"" << fixed(f.width, 1)
     << "\" height=\"" << fixed(f.height, 1) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    os << "<text x=\"" << fixed(f.x(v), 1) << "\" y=\"" << fixed(f.top + f.height + 22, 1)
       << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">" << fixed(v, 1) << "</text>\n";
    os << "<text x=\"" << fixed(f.left - 10, 1) << "\" y=\"" << fixed(f.y(v) + 5, 1)
       << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"end\">" << fixed(v * ymax, 2) << "</text>\n";
  }
  os << "<text x=\"" << fixed(f.x(0.5), 1) << "\" y=\"" << fixed(f.top + f.height + 55, 1)
     << "\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"30\" y=\"" << fixed(f.y(0.5), 1)
     << "\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\" transform=\"rotate(-90 30 "
     << fixed(f.y(0.5), 1) << ")\">" << ylabel << "</text>\n";
  return os.str();
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* color, const char* dash) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
  if (dash) os << " stroke-dasharray=\"" << dash << "\"";
  os << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << fixed(pts[i].first, 2) << ',' << fixed(pts[i].second, 2);
  os << "\"/>\n";
  return os.str();
}

std::string legend_entry(const Frame& f, std::size_t row, const char* color, const std::string& text) {
  std::ostringstream os;
  const double y = f.top + f.height - 20 - 24.0 * static_cast<double>(row);
  os << "<line x1=\"" << fixed(f.left + f.width - 300, 1) << "\" y1=\"" << fixed(y - 5, 1) << "\" x2=\""
     << fixed(f.left + f.width - 270, 1) << "\" y2=\"" << fixed(y - 5, 1) << "\" stroke=\"" << color
     << "\" stroke-width=\"3\"/>\n"
     << "<text x=\"" << fixed(f.left + f.width - 262, 1) << "\" y=\"" << fixed(y, 1)
     << "\" font-family=\"sans-serif\" font-size=\"15\">" << text << "</text>\n";
  return os.str();
}
}  // namespace

std::string metrics_json(const ConfusionMatrix& cm, const std::optional<double>& auc) {
  return metrics_object(cm, auc).dump(2);
}

std::string report_json(const Report& report) {
  json j = metrics_object(report.counts, report.auc);
  j["folds"] = json::array();
  for (std::size_t f = 0; f < report.fold_counts.size(); ++f) {
    std::optional<double> auc;
    if (f < report.fold_aucs.size() && std::isfinite(report.fold_aucs[f])) auc = report.fold_aucs[f];
    json fj = metrics_object(report.fold_counts[f], auc);
    fj["fold"] = f;
    j["folds"].push_back(std::move(fj));
  }
  double sum = 0;
  std::size_t n = 0;
  for (double a : report.fold_aucs) {
    if (std::isfinite(a)) sum += a, ++n;
  }
  j["auc_mean_of_folds"] = n ? json(percent(sum / static_cast<double>(n))) : json("undefined");
  return j.dump(2);
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os << "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    os << fixed(p.fpr, 6) << ',' << fixed(p.tpr, 6) << ',' << (std::isinf(p.threshold) ? "inf" : fixed(p.threshold, 6))
       << '\n';
  }
  return os.str();
}

std::string roc_svg(const std::vector<std::pair<std::string, RocCurve>>& curves) {
  const Frame f;
  std::string s = svg_open("ROC curve") + axes(f, "False positive rate", "True positive rate", 1.0);
  s += polyline({{f.x(0), f.y(0)}, {f.x(1), f.y(1)}}, "#999999", "6,6");
  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curves[c].second.points) pts.emplace_back(f.x(p.fpr), f.y(p.tpr));
    const char* color = kPalette[c % kPalette.size()];
    s += polyline(pts, color, c == 0 ? nullptr : "4,3");
    s += legend_entry(f, curves.size() - 1 - c, color, curves[c].first + " (AUC = " + fixed(curves[c].second.auc, 2) + ")");
  }
  return s + "</svg>\n";
}

std::string loss_svg(const std::vector<LossCurve>& curves) {
  const Frame f;
  double ymax = 0;
  std::size_t epochs = 1;
  for (const auto& c : curves) {
    for (double v : c.train) ymax = std::max(ymax, v);
    for (double v : c.validation) ymax = std::max(ymax, v);
    epochs = std::max({epochs, c.train.size(), c.validation.size()});
  }
  if (!(ymax > 0) || !std::isfinite(ymax)) ymax = 1;
  std::string s = svg_open("Training curves") + axes(f, "Epoch (fraction of run, " + std::to_string(epochs) + " epochs)", "Loss", ymax);
  std::size_t row = 0;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % kPalette.size()];
    auto trace = [&](const std::vector<double>& v, const char* dash) {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t e = 0; e < v.size(); ++e) {
        const double x = epochs > 1 ? static_cast<double>(e) / static_cast<double>(epochs - 1) : 0.0;
        pts.emplace_back(f.x(x), f.y(std::min(v[e], ymax) / ymax));
      }
      return polyline(pts, color, dash);
    };
    s += trace(curves[c].train, nullptr);
    s += trace(curves[c].validation, "6,4");
    s += legend_entry(f, row++, color, curves[c].label + " train (solid) / validation (dashed)");
  }
  return s + "</svg>\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), {}};
}

void emit_report(const Report& report, const RocCurve& pooled,
                 const std::vector<std::pair<std::string, RocCurve>>& fold_curves, const std::vector<LossCurve>& losses,
                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create report directory " + dir.string() + ": " + ec.message());
  write_text(dir / "metrics.json", report_json(report) + "\n");
  write_text(dir / "roc.csv", roc_csv(pooled));
  std::vector<std::pair<std::string, RocCurve>> curves{{"pooled", pooled}};
  curves.insert(curves.end(), fold_curves.begin(), fold_curves.end());
  write_text(dir / "roc.svg", roc_svg(curves));
  write_text(dir / "loss_curve.svg", loss_svg(losses));
}

}  // namespace mamaf
