#pragma once

// NLOS exclusion: flag observations with a trained model, drop them, and
// compare per-epoch least-squares positioning with and without them.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/geodesy.hpp"
#include "nlos/network.hpp"

namespace nlos::exclusion {

struct EpochFlags {
  std::size_t epoch_pos = 0;
  bool classified = false;          // a window ended at this epoch
  std::map<int, bool> nlos;         // sat_id -> flagged NLOS, for satellites with a window slot
  std::map<int, double> prob_los;   // sat_id -> model probability
};

struct RatioSummary {
  std::size_t classified_epochs = 0;
  std::size_t unclassified_epochs = 0;
  std::size_t observations = 0;  // classified observations
  std::size_t los = 0;
  std::size_t nlos = 0;
  double r_los_percent = 0.0;
  double r_nlos_percent = 0.0;
};

struct Classification {
  std::vector<EpochFlags> epochs;  // parallel to the input epochs
  RatioSummary summary;
};

/// Epochs must carry LS residuals (see dataset::solve_epochs). Epochs without
/// a full window of history are reported unclassified.
Classification classify_epochs(const network::Checkpoint& model, std::span<const dataset::Epoch> epochs,
                               double threshold = 0.5);

/// Ratio table in the R_LOS / R_NLOS layout.
std::string format_ratio_table(const RatioSummary& summary, const std::string& name = "model");

enum class SolveStatus { kOk, kInfeasible, kFailed };
const char* status_name(SolveStatus s);

struct SolveOutcome {
  SolveStatus status = SolveStatus::kFailed;
  geodesy::EcefPosition position;
  double clock_bias_m = 0.0;
  std::size_t satellites = 0;
  double error_m = 0.0;  // horizontal-plus-vertical distance to the truth, when solved
};

struct ExclusionSolve {
  SolveOutcome all;
  SolveOutcome excluded;
};

/// Solves with every satellite and again without the flagged ones. Fewer
/// than four remaining satellites marks the excluded solve infeasible.
ExclusionSolve solve_with_exclusion(const dataset::Epoch& epoch, const std::map<int, bool>& nlos_flags,
                                    const geodesy::EcefPosition& initial_guess,
                                    const geodesy::LsOptions& options = {});

struct EpochResult {
  std::size_t epoch_pos = 0;
  std::size_t epoch_index = 0;
  ExclusionSolve solve;
  std::size_t flagged = 0;
  bool fallback = false;  // excluded solve unusable, all-satellite solution used in the aggregates
};

struct ExclusionResult {
  std::vector<EpochResult> epochs;  // classified epochs with a feasible all-satellite solve
  double median_all_m = 0.0;
  double p95_all_m = 0.0;
  double median_excluded_m = 0.0;
  double p95_excluded_m = 0.0;
  std::size_t infeasible = 0;
  std::size_t failed = 0;
  double infeasible_fraction = 0.0;
  RatioSummary ratios;

  std::string to_csv() const;
  std::string summary_text() const;
};

/// Aggregates per-epoch comparisons for classified epochs. Epochs whose
/// excluded solve is infeasible or fails fall back to the all-satellite
/// solution in the medians and are counted.
ExclusionResult evaluate_exclusion(std::span<const dataset::Epoch> epochs, const Classification& classification,
                                   const geodesy::LsOptions& options = {});

/// classify_epochs followed by evaluate_exclusion.
ExclusionResult trajectory_report(std::span<const dataset::Epoch> epochs, const network::Checkpoint& model,
                                  double threshold = 0.5);

/// Flags from the observations' own visibility labels (oracle flags).
Classification label_flags(std::span<const dataset::Epoch> epochs);

/// East-north overlay of truth, all-satellite and excluded solutions, in the
/// tangent frame at the first epoch's true position.
std::string trajectory_svg(std::span<const dataset::Epoch> epochs, const ExclusionResult& result,
                           const std::string& title = "Trajectory with NLOS exclusion");

/// Linear-interpolated percentile (q in [0, 100]) of a non-empty sample.
double percentile(std::vector<double> values, double q);

}  // namespace nlos::exclusion
