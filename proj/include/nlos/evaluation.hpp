#pragma once

// Permutation feature importance and the component ablation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/metrics.hpp"
#include "nlos/network.hpp"
#include "nlos/random.hpp"
#include "nlos/training.hpp"

namespace nlos::evaluation {

struct ImportanceEntry {
  std::string feature;
  double importance = 0.0;  // mean over repeats of baseline - permuted accuracy
  double stddev = 0.0;      // sample standard deviation over repeats
  std::vector<double> per_repeat;
};

struct ImportanceReport {
  double baseline_accuracy = 0.0;
  std::size_t repeats = 0;
  std::vector<ImportanceEntry> entries;  // one per feature channel, in channel order

  std::string to_csv() const;
  std::string to_svg(const std::string& title = "Feature permutation importance") const;
};

/// Permutes the given channels: every valid (window, slot) keeps its T-step
/// sequence intact but receives the sequence of another (window, slot),
/// drawn by one shuffle per channel.
void permute_channels(std::span<dataset::FeatureWindow> windows, std::span<const std::size_t> channels, Rng& rng);

/// Windows must be labeled and normalized. Throws UsageError for repeats < 1.
ImportanceReport permutation_importance(const network::ModelParams& params, const network::ModelConfig& config,
                                        std::span<const dataset::FeatureWindow> windows, std::size_t repeats,
                                        std::uint64_t seed);

/// Accuracy after permuting `channels` once with `rng`.
double permuted_accuracy(const network::ModelParams& params, const network::ModelConfig& config,
                         std::span<const dataset::FeatureWindow> windows, std::span<const std::size_t> channels,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  network::Variant variant = network::Variant::kFull;
  metrics::MetricReport metrics;
  training::TrainReport report;
  std::uint64_t split_hash = 0;
  network::Checkpoint checkpoint;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::uint64_t split_hash = 0;

  std::string to_csv() const;
  std::string format_table() const;
};

/// Trains every variant on the same split of `windows` with the same seeds and
/// evaluates each on `test_windows` (raw; normalized with each model's own
/// normalizer), or on the validation split when `test_windows` is empty.
/// Throws if the split hashes of the runs differ.
AblationReport run_ablation(std::span<const dataset::FeatureWindow> windows,
                            std::span<const dataset::FeatureWindow> test_windows,
                            const network::ModelConfig& model_config, const training::TrainConfig& train_config,
                            std::uint64_t init_seed,
                            std::span<const network::Variant> variants = std::span<const network::Variant>());

// ---------------------------------------------------------------------------
// Charts

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;  // half-width of an error bar, 0 for none
};

/// Minimal horizontal-axis bar chart as a standalone SVG document.
std::string bar_chart_svg(const std::string& title, const std::string& y_label, std::span<const Bar> bars);

}  // namespace nlos::evaluation
