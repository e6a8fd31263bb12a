#pragma once

// Classification and regression metrics over flattened (window, slot)
// predictions. LOS and NLOS are each scored as their own positive class.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/network.hpp"

namespace nlos::metrics {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ClassMetrics {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the rate had a zero denominator and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  std::size_t support = 0;  // samples whose label is this class
};

struct MetricReport {
  ClassMetrics los;
  ClassMetrics nlos;
  double accuracy = 0.0;
  std::size_t samples = 0;
  bool has_regression = false;
  double mae_m = 0.0;
};

/// A sample is predicted LOS iff prob >= threshold. Labels are 1 (LOS) or 0
/// (NLOS); only entries with a nonzero mask byte count.
MetricReport classification_metrics(std::span<const double> probs, std::span<const double> labels,
                                    std::span<const std::uint8_t> mask, double threshold = 0.5);

/// Mean |pred - label| in meters over masked-in entries.
double regression_metrics(std::span<const double> error_pred_m, std::span<const double> label_error_m,
                          std::span<const std::uint8_t> mask);

/// Model outputs and labels for a window set, flattened to [windows][N_max].
struct Predictions {
  std::size_t N_max = 0;
  std::vector<double> probs;
  std::vector<double> error_pred_m;
  std::vector<double> labels_visibility;
  std::vector<double> labels_error_m;
  std::vector<std::uint8_t> mask;
};

/// Windows must already be normalized.
Predictions predict(std::span<const dataset::FeatureWindow> windows, const network::ModelParams& params,
                    const network::ModelConfig& config);

/// Classification plus MAE for labeled predictions.
MetricReport evaluate(const Predictions& predictions, double threshold = 0.5);

/// Two rows (LOS, NLOS) with Precision/Recall/F1-Score/Acc columns.
std::string format_table(const MetricReport& report, const std::string& title = "");
/// CSV: class,precision,recall,f1,accuracy,support,tp,fp,tn,fn,mae_m
std::string to_csv(const MetricReport& report);

}  // namespace nlos::metrics
