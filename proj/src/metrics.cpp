#include "nlos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlos/error.hpp"
#include "nlos/io.hpp"

namespace nlos::metrics {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t m, const char* what) {
  if (a != b || a != m)
    throw UsageError(std::string(what) + ": size mismatch (" + std::to_string(a) + ", " + std::to_string(b) + ", " +
                     std::to_string(m) + ")");
}

ClassMetrics rates(const ConfusionCounts& c) {
  ClassMetrics m;
  m.counts = c;
  m.support = c.tp + c.fn;
  const std::size_t pred_pos = c.tp + c.fp;
  if (pred_pos == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(pred_pos);
  }
  if (m.support == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(m.support);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

}  // namespace

MetricReport classification_metrics(std::span<const double> probs, std::span<const double> labels,
                                    std::span<const std::uint8_t> mask, double threshold) {
  check_sizes(probs.size(), labels.size(), mask.size(), "classification_metrics");
  ConfusionCounts los;
  std::size_t n = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    if (!std::isfinite(probs[i])) throw NumericError("classification_metrics: non-finite probability at " + std::to_string(i));
    const bool label_los = labels[i] >= 0.5;
    const bool pred_los = probs[i] >= threshold;
    ++n;
    if (label_los && pred_los) ++los.tp;
    if (!label_los && pred_los) ++los.fp;
    if (!label_los && !pred_los) ++los.tn;
    if (label_los && !pred_los) ++los.fn;
  }
  if (n == 0) throw DataError("classification_metrics: no valid samples");
  MetricReport r;
  r.samples = n;
  r.los = rates(los);
  r.nlos = rates({los.tn, los.fn, los.tp, los.fp});
  r.accuracy = static_cast<double>(los.tp + los.tn) / static_cast<double>(n);
  return r;
}

double regression_metrics(std::span<const double> error_pred_m, std::span<const double> label_error_m,
                          std::span<const std::uint8_t> mask) {
  check_sizes(error_pred_m.size(), label_error_m.size(), mask.size(), "regression_metrics");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < error_pred_m.size(); ++i) {
    if (!mask[i]) continue;
    sum += std::abs(error_pred_m[i] - label_error_m[i]);
    ++n;
  }
  if (n == 0) throw DataError("regression_metrics: no valid samples");
  return sum / static_cast<double>(n);
}

Predictions predict(std::span<const dataset::FeatureWindow> windows, const network::ModelParams& params,
                    const network::ModelConfig& config) {
  Predictions p;
  p.N_max = config.N_max;
  const std::size_t total = windows.size() * config.N_max;
  p.probs.reserve(total);
  p.error_pred_m.reserve(total);
  p.labels_visibility.reserve(total);
  p.labels_error_m.reserve(total);
  p.mask.reserve(total);
  for (const auto& w : windows) {
    const network::ModelOutput out = network::forward(w, params, config);
    p.probs.insert(p.probs.end(), out.visibility_prob.begin(), out.visibility_prob.end());
    p.error_pred_m.insert(p.error_pred_m.end(), out.error_pred_m.begin(), out.error_pred_m.end());
    p.mask.insert(p.mask.end(), out.valid.begin(), out.valid.end());
    if (w.labeled) {
      p.labels_visibility.insert(p.labels_visibility.end(), w.labels_visibility.begin(), w.labels_visibility.end());
      p.labels_error_m.insert(p.labels_error_m.end(), w.labels_error.begin(), w.labels_error.end());
    } else {
      p.labels_visibility.insert(p.labels_visibility.end(), config.N_max, 0.0);
      p.labels_error_m.insert(p.labels_error_m.end(), config.N_max, 0.0);
    }
  }
  return p;
}

MetricReport evaluate(const Predictions& predictions, double threshold) {
  MetricReport r = classification_metrics(predictions.probs, predictions.labels_visibility, predictions.mask, threshold);
  r.mae_m = regression_metrics(predictions.error_pred_m, predictions.labels_error_m, predictions.mask);
  r.has_regression = true;
  return r;
}

std::string format_table(const MetricReport& report, const std::string& title) {
  std::ostringstream out;
  if (!title.empty()) out << title << "\n";
  auto pad = [](std::string v, std::size_t w) {
    v.resize(std::max(v.size(), w), ' ');
    return v;
  };
  auto cell = [](double v, bool undefined) { return io::format_fixed(v, 2) + (undefined ? "*" : ""); };
  out << "Class Precision  Recall  F1-Score  Acc.\n";
  auto row = [&](const char* name, const ClassMetrics& m) {
    out << pad(name, 6) << pad(cell(m.precision, m.precision_undefined), 11) << pad(cell(m.recall, m.recall_undefined), 8)
        << pad(cell(m.f1, m.f1_undefined), 10) << io::format_fixed(report.accuracy, 2) << "\n";
  };
  row("LOS", report.los);
  row("NLOS", report.nlos);
  if (report.los.precision_undefined || report.los.recall_undefined || report.los.f1_undefined ||
      report.nlos.precision_undefined || report.nlos.recall_undefined || report.nlos.f1_undefined)
    out << "* zero denominator, reported as 0\n";
  if (report.has_regression) out << "Regression MAE: " << io::format_fixed(report.mae_m, 2) << " m\n";
  out << "Samples: " << report.samples << "\n";
  return out.str();
}

std::string to_csv(const MetricReport& report) {
  std::string out = "class,precision,recall,f1,accuracy,support,tp,fp,tn,fn,mae_m\n";
  auto row = [&](const char* name, const ClassMetrics& m) {
    out += std::string(name) + "," + io::format_double(m.precision) + "," + io::format_double(m.recall) + "," +
           io::format_double(m.f1) + "," + io::format_double(report.accuracy) + "," + std::to_string(m.support) + "," +
           std::to_string(m.counts.tp) + "," + std::to_string(m.counts.fp) + "," + std::to_string(m.counts.tn) + "," +
           std::to_string(m.counts.fn) + "," + (report.has_regression ? io::format_double(report.mae_m) : "") + "\n";
  };
  row("LOS", report.los);
  row("NLOS", report.nlos);
  return out;
}

}  // namespace nlos::metrics
