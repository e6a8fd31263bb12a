#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlos/geodesy.hpp"

namespace nlos::dataset {

using geodesy::EcefPosition;

enum class Visibility : std::uint8_t { NLOS = 0, LOS = 1 };

inline constexpr std::size_t kNumFeatures = 5;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {"El", "Az", "C/N0", "sigma_LS", "RSS"};
enum Feature : std::size_t { kElevation = 0, kAzimuth = 1, kCn0 = 2, kResidual = 3, kRss = 4 };

struct SatObservation {
  int sat_id = 0;
  std::size_t epoch_index = 0;
  EcefPosition sat_pos;
  double pseudorange = 0.0;  // corrected pseudorange, meters
  double cn0 = 0.0;          // dB-Hz
  // Labels: generator ground truth, a labeler's output, or read from file.
  std::optional<Visibility> visibility;
  std::optional<double> range_error;  // multipath plus noise, meters
  // Filled by solve_epochs; not persisted.
  std::optional<double> ls_residual;
};

struct Epoch {
  std::size_t epoch_index = 0;
  EcefPosition receiver_truth;
  std::optional<EcefPosition> receiver_ls;
  std::optional<double> clock_bias_ls;
  std::vector<SatObservation> observations;
};

void validate(const SatObservation& obs);
void validate(const Epoch& epoch, std::size_t n_max);

/// Runs ls_position_solve on every epoch with at least four satellites and
/// stores the solution and per-observation residuals. Each solve starts from
/// the previous epoch's solution (or the geocenter). Returns the indices of
/// epochs that could not be solved.
std::vector<std::size_t> solve_epochs(std::vector<Epoch>& epochs, const geodesy::LsOptions& options = {});

// ---------------------------------------------------------------------------
// Sky-plot mask

class SkyMask {
 public:
  struct Sample {
    double azimuth_deg;
    double min_open_elevation_deg;
  };

  SkyMask() = default;
  explicit SkyMask(std::vector<Sample> boundary);

  static SkyMask uniform(double elevation_deg);

  /// Piecewise-linear boundary at `azimuth_deg`, wrapping across 360.
  double boundary_at(double azimuth_deg) const;
  /// True when a direction lies strictly below the boundary (blocked).
  bool blocks(double azimuth_deg, double elevation_deg) const { return elevation_deg < boundary_at(azimuth_deg); }

  const std::vector<Sample>& boundary() const { return boundary_; }

 private:
  std::vector<Sample> boundary_;
};

SkyMask read_mask_csv(const std::filesystem::path& path);
std::string mask_to_csv(const SkyMask& mask);

// ---------------------------------------------------------------------------
// Scenario generation

struct ScenarioConfig {
  double duration_s = 900.0;
  double epoch_rate_hz = 1.0;
  int n_satellites = 10;
  std::size_t T_window = 5;
  std::size_t N_max = 25;
  double elevation_cutoff_deg = 10.0;
  double max_elevation_deg = 85.0;

  double origin_lat_deg = 50.7753;
  double origin_lon_deg = 6.0839;
  double origin_height_m = 180.0;

  // Trajectory: constant-velocity segments, each a new street (scene).
  double segment_duration_s = 20.0;
  double speed_min_mps = 0.0;
  double speed_max_mps = 12.0;

  // Sky mask per scene: two walls perpendicular to the street heading.
  // When `fixed_mask` is set every scene uses it instead.
  double wall_elevation_min_deg = 25.0;
  double wall_elevation_max_deg = 37.0;
  double canyon_half_width_min_deg = 55.0;
  double canyon_half_width_max_deg = 70.0;
  double open_elevation_deg = 5.0;
  double open_scene_fraction = 0.05;
  std::optional<SkyMask> fixed_mask;

  // Satellite motion across the sky.
  double sat_az_drift_deg_per_s = 0.02;
  double sat_el_drift_deg_per_s = 0.005;

  // Signal model.
  double nlos_bias_min_m = 20.0;
  double nlos_bias_max_m = 100.0;
  double nlos_cn0_penalty_db = 8.0;
  double cn0_horizon_db = 38.0;
  double cn0_zenith_db = 50.0;
  double cn0_jitter_db = 2.5;
  double noise_sigma_los_m = 1.5;
  double noise_sigma_nlos_m = 4.0;
  double clock_bias_initial_m = 300.0;
  double clock_drift_mps = 0.05;

  double label_residual_threshold_m = 10.0;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// Named presets: "standard", "ac-like", "hk-like", "open-sky", "blocked".
ScenarioConfig scenario_preset(const std::string& name);

struct Scenario {
  std::vector<Epoch> epochs;
  // Sky mask in force at each epoch (parallel to `epochs`).
  std::vector<SkyMask> scene_masks;
  std::vector<std::size_t> scene_of_epoch;

  const SkyMask& mask_for(std::size_t epoch_pos) const { return scene_masks[scene_of_epoch[epoch_pos]]; }
};

/// Deterministic given the config (including its seed).
Scenario generate_scenario(const ScenarioConfig& config);

struct ClassBalance {
  std::size_t observations = 0;
  std::size_t los = 0;
  std::size_t nlos = 0;
  double r_los_percent = 0.0;
  double r_nlos_percent = 0.0;
  double n_avg_sat = 0.0;
  std::size_t n_max_sat = 0;
  double max_abs_error_m = 0.0;
  double cn0_min = 0.0, cn0_max = 0.0, cn0_avg = 0.0;
};

/// Dataset statistics over labeled observations (unlabeled ones are skipped
/// for the ratios).
ClassBalance class_balance(std::span<const Epoch> epochs);

// ---------------------------------------------------------------------------
// Labeling

struct LabelResult {
  std::vector<Epoch> epochs;
  std::vector<std::size_t> skipped_epochs;  // positions with fewer than 4 satellites
};

using MaskLookup = std::function<const SkyMask&(std::size_t epoch_pos)>;

/// Where the residual compared against the threshold comes from.
enum class ResidualSource {
  kLeastSquares,  // standalone LS solution of the epoch
  kReference,     // true receiver position, clock taken as the median offset
};

ResidualSource parse_residual_source(const std::string& name);  // "ls" or "reference"
const char* residual_source_name(ResidualSource source);

/// NLOS iff the satellite lies below the mask at its azimuth AND its residual
/// exceeds the threshold. The mask is queried from the true receiver position.
/// Label error is the stored range error when present, otherwise the residual.
LabelResult label_observations(std::vector<Epoch> epochs, const SkyMask& mask, double residual_threshold_m,
                               ResidualSource source = ResidualSource::kLeastSquares);
LabelResult label_observations(std::vector<Epoch> epochs, const MaskLookup& mask, double residual_threshold_m,
                               ResidualSource source = ResidualSource::kLeastSquares);

/// Residuals against the true receiver position with the clock offset set to
/// the median of (pseudorange - geometric range) over the epoch.
std::vector<double> reference_residuals(const Epoch& epoch);

// ---------------------------------------------------------------------------
// Feature windows

struct FeatureWindow {
  std::size_t N_max = 0;
  std::size_t T = 0;
  // Row-major [N_max][T][kNumFeatures].
  std::vector<double> features;
  std::vector<std::uint8_t> sat_mask;  // [N_max]
  bool labeled = false;
  std::vector<double> labels_visibility;  // [N_max], LOS = 1, NLOS = 0, 0 when masked
  std::vector<double> labels_error;       // [N_max], meters, 0 when masked
  std::vector<int> slot_to_sat_id;        // [N_max], -1 when masked
  std::size_t final_epoch_pos = 0;        // position of the last epoch in the source list

  double& at(std::size_t slot, std::size_t t, std::size_t f) {
    return features[(slot * T + t) * kNumFeatures + f];
  }
  double at(std::size_t slot, std::size_t t, std::size_t f) const {
    return features[(slot * T + t) * kNumFeatures + f];
  }
  std::size_t valid_count() const;
};

FeatureWindow empty_window(std::size_t n_max, std::size_t t);

/// Sliding windows of length T, stride 1. A satellite gets a slot (ordered by
/// sat_id) only if it is present with an LS residual in all T epochs. Windows
/// containing an unsolved epoch, or with no full-presence satellite, are
/// skipped. Features use the LS receiver position. RSS is taken over the
/// window's own residuals; labels come from the final epoch.
std::vector<FeatureWindow> build_windows(std::span<const Epoch> epochs, std::size_t T, std::size_t n_max);

struct Normalizer {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> stddev{1, 1, 1, 1, 1};
};

Normalizer fit_normalizer(std::span<const FeatureWindow> windows);
void apply_normalizer(std::span<FeatureWindow> windows, const Normalizer& normalizer);
FeatureWindow normalized(FeatureWindow window, const Normalizer& normalizer);

// ---------------------------------------------------------------------------
// CSV I/O

std::string epochs_to_csv(std::span<const Epoch> epochs);
std::vector<Epoch> epochs_from_csv(const std::string& text, const std::string& source = "<memory>");
std::vector<Epoch> read_csv(const std::filesystem::path& path);
void write_csv(std::span<const Epoch> epochs, const std::filesystem::path& path);

}  // namespace nlos::dataset
