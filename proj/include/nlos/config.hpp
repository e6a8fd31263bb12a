#pragma once

// Run configuration: one key-value file per run plus overrides. Keys are
// namespaced (scenario.*, model.*, train.*, label.*, ...); `preset` picks the
// scenario defaults before any scenario key is applied.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/network.hpp"
#include "nlos/training.hpp"

namespace nlos::config {

struct RunConfig {
  std::string preset = "standard";
  std::uint64_t seed = 1;  // every random stream of a run derives from it
  dataset::ScenarioConfig scenario = dataset::scenario_preset("standard");
  network::ModelConfig model;
  training::TrainConfig train;
  double threshold = 0.5;  // LOS iff probability >= threshold
  dataset::ResidualSource residual_source = dataset::ResidualSource::kLeastSquares;
  std::size_t importance_repeats = 10;
  std::vector<network::Variant> ablation_variants = {network::Variant::kFull, network::Variant::kNoAttention,
                                                     network::Variant::kNoBiLstm};

  /// Throws UsageError for any invariant violation.
  void validate() const;
};

/// Ordered key -> raw value assignments.
using Assignments = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines, `#` comments, blank lines ignored. Duplicate keys and
/// malformed lines are usage errors.
Assignments parse_text(const std::string& text, const std::string& source = "<memory>");
Assignments parse_file(const std::filesystem::path& path);

/// Splits "key=value"; throws UsageError when there is no '='.
std::pair<std::string, std::string> parse_override(const std::string& assignment);

/// Applies file assignments, then overrides (later wins), on top of the
/// defaults. A `preset` from either source is applied first. Unknown keys and
/// unparsable values are usage errors. The result is validated unless
/// `validate` is false.
RunConfig build(const Assignments& file, const Assignments& overrides = {}, bool validate = true);

/// Every key with its effective value, sorted, one `key = value` per line.
/// Parsing the dump back yields an identical config.
std::string dump(const RunConfig& config);
std::uint64_t hash(const RunConfig& config);

std::vector<std::string> known_keys();

/// Independent stream seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose);

}  // namespace nlos::config
