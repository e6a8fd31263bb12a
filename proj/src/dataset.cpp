#include "nlos/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "nlos/error.hpp"
#include "nlos/io.hpp"
#include "nlos/random.hpp"

namespace nlos::dataset {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kOrbitRadius = 26'560'000.0;

std::string obs_context(const SatObservation& o) {
  return "epoch " + std::to_string(o.epoch_index) + " sat " + std::to_string(o.sat_id);
}

// Position of a satellite seen from `origin` at the given azimuth/elevation,
// placed on a GPS-like orbit radius.
EcefPosition satellite_from_sky(const EcefPosition& origin, double az_deg, double el_deg) {
  const double az = az_deg * kDegToRad;
  const double el = el_deg * kDegToRad;
  const geodesy::EnuVector dir{std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
  const EcefPosition tip = geodesy::enu_to_ecef(dir, origin);
  const double ux = tip.x - origin.x, uy = tip.y - origin.y, uz = tip.z - origin.z;
  const double b = origin.x * ux + origin.y * uy + origin.z * uz;
  const double c = origin.x * origin.x + origin.y * origin.y + origin.z * origin.z - kOrbitRadius * kOrbitRadius;
  const double range = -b + std::sqrt(b * b - c);
  return {origin.x + range * ux, origin.y + range * uy, origin.z + range * uz};
}

double wrap360(double az) {
  az = std::fmod(az, 360.0);
  if (az < 0.0) az += 360.0;
  return az >= 360.0 ? 0.0 : az;
}

double angular_distance(double a, double b) {
  const double d = std::abs(wrap360(a) - wrap360(b));
  return std::min(d, 360.0 - d);
}

struct Wall {
  double center_az;
  double half_width;
  double elevation;
};

SkyMask canyon_mask(const std::vector<Wall>& walls, double open_elevation) {
  constexpr double kStep = 2.0;
  constexpr double kRamp = 6.0;
  std::vector<SkyMask::Sample> samples;
  for (double az = 0.0; az < 360.0; az += kStep) {
    double el = open_elevation;
    for (const Wall& w : walls) {
      const double d = angular_distance(az, w.center_az);
      double e = open_elevation;
      if (d <= w.half_width) {
        e = w.elevation;
      } else if (d < w.half_width + kRamp) {
        e = w.elevation + (open_elevation - w.elevation) * (d - w.half_width) / kRamp;
      }
      el = std::max(el, e);
    }
    samples.push_back({az, std::clamp(el, 0.0, 90.0)});
  }
  return SkyMask(std::move(samples));
}

struct SkyTrack {
  int sat_id;
  double az0, az_rate;
  // Elevation oscillates around its stratum centre, so the constellation keeps
  // its layout over long runs.
  double el_center, el_amplitude, el_omega, el_phase;

  double az(double t) const { return wrap360(az0 + az_rate * t); }
  double el(double t) const { return el_center + el_amplitude * std::sin(el_omega * t + el_phase); }
};

}  // namespace

void validate(const SatObservation& o) {
  if (!(o.cn0 >= 0.0 && o.cn0 <= 65.0)) {
    throw DataError(obs_context(o) + ": C/N0 " + io::format_double(o.cn0) + " outside [0, 65] dB-Hz");
  }
  if (!(o.pseudorange > 0.0) || !std::isfinite(o.pseudorange)) {
    throw DataError(obs_context(o) + ": pseudorange must be positive");
  }
  if (!std::isfinite(o.sat_pos.x) || !std::isfinite(o.sat_pos.y) || !std::isfinite(o.sat_pos.z)) {
    throw DataError(obs_context(o) + ": non-finite satellite position");
  }
}

void validate(const Epoch& epoch, std::size_t n_max) {
  std::set<int> ids;
  for (const auto& o : epoch.observations) {
    validate(o);
    if (!ids.insert(o.sat_id).second) throw DataError(obs_context(o) + ": duplicate satellite in epoch");
  }
  if (epoch.observations.size() > n_max) {
    throw DataError("epoch " + std::to_string(epoch.epoch_index) + ": " +
                    std::to_string(epoch.observations.size()) + " observations exceed N_max " +
                    std::to_string(n_max));
  }
}

std::vector<std::size_t> solve_epochs(std::vector<Epoch>& epochs, const geodesy::LsOptions& options) {
  std::vector<std::size_t> failed;
  EcefPosition guess{0.0, 0.0, 0.0};
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    Epoch& ep = epochs[e];
    ep.receiver_ls.reset();
    ep.clock_bias_ls.reset();
    for (auto& o : ep.observations) o.ls_residual.reset();
    if (ep.observations.size() < 4) {
      failed.push_back(e);
      continue;
    }
    std::vector<double> rho;
    std::vector<EcefPosition> sats;
    for (const auto& o : ep.observations) {
      rho.push_back(o.pseudorange);
      sats.push_back(o.sat_pos);
    }
    try {
      const geodesy::LsSolution sol = geodesy::ls_position_solve(rho, sats, guess, options);
      ep.receiver_ls = sol.position;
      ep.clock_bias_ls = sol.clock_bias_m;
      for (std::size_t k = 0; k < sol.residuals.size(); ++k) ep.observations[k].ls_residual = sol.residuals[k];
      guess = sol.position;
    } catch (const NumericError&) {
      failed.push_back(e);
    }
  }
  return failed;
}

// ---------------------------------------------------------------------------

SkyMask::SkyMask(std::vector<Sample> boundary) : boundary_(std::move(boundary)) {
  if (boundary_.empty()) throw DataError("sky mask: no boundary samples");
  for (std::size_t i = 0; i < boundary_.size(); ++i) {
    const Sample& s = boundary_[i];
    if (!(s.azimuth_deg >= 0.0 && s.azimuth_deg < 360.0)) {
      throw DataError("sky mask: azimuth " + io::format_double(s.azimuth_deg) + " outside [0, 360)");
    }
    if (!(s.min_open_elevation_deg >= 0.0 && s.min_open_elevation_deg <= 90.0)) {
      throw DataError("sky mask: elevation " + io::format_double(s.min_open_elevation_deg) + " outside [0, 90]");
    }
    if (i > 0 && !(s.azimuth_deg > boundary_[i - 1].azimuth_deg)) {
      throw DataError("sky mask: azimuth samples must be strictly increasing");
    }
  }
}

SkyMask SkyMask::uniform(double elevation_deg) { return SkyMask({{0.0, elevation_deg}}); }

double SkyMask::boundary_at(double azimuth_deg) const {
  if (boundary_.empty()) return 0.0;
  if (boundary_.size() == 1) return boundary_[0].min_open_elevation_deg;
  const double az = wrap360(azimuth_deg);
  // First sample with azimuth > az.
  const auto it = std::upper_bound(boundary_.begin(), boundary_.end(), az,
                                   [](double a, const Sample& s) { return a < s.azimuth_deg; });
  const Sample& hi = it == boundary_.end() ? boundary_.front() : *it;
  const Sample& lo = it == boundary_.begin() ? boundary_.back() : *(it - 1);
  double a0 = lo.azimuth_deg, a1 = hi.azimuth_deg, x = az;
  if (a1 <= a0) a1 += 360.0;  // wrap segment
  if (x < a0) x += 360.0;
  const double w = (x - a0) / (a1 - a0);
  return lo.min_open_elevation_deg + w * (hi.min_open_elevation_deg - lo.min_open_elevation_deg);
}

SkyMask read_mask_csv(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<SkyMask::Sample> samples;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = io::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = io::split(t, ',');
    if (fields.size() != 2) throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected 2 columns");
    if (line_no == 1 && io::trim(fields[0]) == "azimuth_deg") continue;
    const std::string ctx = path.string() + " line " + std::to_string(line_no);
    samples.push_back({io::parse_double(fields[0], ctx), io::parse_double(fields[1], ctx)});
  }
  return SkyMask(std::move(samples));
}

std::string mask_to_csv(const SkyMask& mask) {
  std::string out = "azimuth_deg,min_open_elevation_deg\n";
  for (const auto& s : mask.boundary()) {
    out += io::format_double(s.azimuth_deg) + "," + io::format_double(s.min_open_elevation_deg) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("scenario config: " + what);
  };
  require(duration_s > 0.0, "duration_s must be positive");
  require(epoch_rate_hz > 0.0, "epoch_rate_hz must be positive");
  require(n_satellites >= 4, "n_satellites must be at least 4");
  require(T_window >= 1, "T_window must be at least 1");
  require(N_max >= static_cast<std::size_t>(n_satellites), "N_max must be >= n_satellites");
  require(elevation_cutoff_deg >= 0.0 && elevation_cutoff_deg + 2.0 < max_elevation_deg && max_elevation_deg < 90.0,
          "elevation limits must satisfy 0 <= cutoff < max < 90");
  require(segment_duration_s > 0.0, "segment_duration_s must be positive");
  require(speed_min_mps >= 0.0 && speed_max_mps >= speed_min_mps, "speed range invalid");
  require(wall_elevation_min_deg >= 0.0 && wall_elevation_max_deg >= wall_elevation_min_deg &&
              wall_elevation_max_deg <= 90.0,
          "wall elevation range invalid");
  require(canyon_half_width_min_deg >= 0.0 && canyon_half_width_max_deg >= canyon_half_width_min_deg &&
              canyon_half_width_max_deg <= 180.0,
          "canyon half-width range invalid");
  require(open_elevation_deg >= 0.0 && open_elevation_deg <= 90.0, "open_elevation_deg outside [0, 90]");
  require(open_scene_fraction >= 0.0 && open_scene_fraction <= 1.0, "open_scene_fraction outside [0, 1]");
  require(nlos_bias_min_m > 0.0 && nlos_bias_max_m >= nlos_bias_min_m, "nlos bias range must be positive");
  require(nlos_cn0_penalty_db >= 0.0, "nlos_cn0_penalty_db must be non-negative");
  require(cn0_jitter_db >= 0.0, "cn0_jitter_db must be non-negative");
  require(cn0_horizon_db > 0.0 && cn0_zenith_db > 0.0 && cn0_zenith_db <= 65.0 && cn0_horizon_db <= 65.0,
          "C/N0 model must lie in (0, 65] dB-Hz");
  require(noise_sigma_los_m > 0.0 && noise_sigma_nlos_m > 0.0, "noise sigmas must be positive");
  require(label_residual_threshold_m > 0.0, "label_residual_threshold_m must be positive");
  require(sat_az_drift_deg_per_s >= 0.0 && sat_el_drift_deg_per_s >= 0.0, "drift rates must be non-negative");
}

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig c;
  if (name == "standard") return c;
  if (name == "ac-like") {
    // Aachen-like: few satellites, strong signals, ~19% NLOS.
    c.n_satellites = 8;
    c.duration_s = 2366.0;
    c.cn0_horizon_db = 42.0;
    c.cn0_zenith_db = 54.0;
    c.cn0_jitter_db = 2.0;
    c.nlos_cn0_penalty_db = 10.0;
    return c;
  }
  if (name == "hk-like") {
    // Hong Kong-like: dense constellation, deep canyons, weak signals.
    c.n_satellites = 17;
    c.wall_elevation_min_deg = 30.0;
    c.wall_elevation_max_deg = 65.0;
    c.canyon_half_width_min_deg = 55.0;
    c.canyon_half_width_max_deg = 80.0;
    c.cn0_horizon_db = 28.0;
    c.cn0_zenith_db = 44.0;
    c.cn0_jitter_db = 3.0;
    c.nlos_cn0_penalty_db = 9.0;
    return c;
  }
  if (name == "open-sky") {
    c.fixed_mask = SkyMask::uniform(0.0);
    return c;
  }
  if (name == "blocked") {
    c.fixed_mask = SkyMask::uniform(90.0);
    return c;
  }
  throw UsageError("unknown scenario preset '" + name + "' (standard, ac-like, hk-like, open-sky, blocked)");
}

Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Rng rng(config.rng_seed);
  const EcefPosition origin = geodesy::geodetic_to_ecef(
      {config.origin_lat_deg * kDegToRad, config.origin_lon_deg * kDegToRad, config.origin_height_m});
  const double dt = 1.0 / config.epoch_rate_hz;
  const auto n_epochs = static_cast<std::size_t>(std::floor(config.duration_s * config.epoch_rate_hz));

  // Satellite ids drawn from a 1..32 PRN range. Azimuths and elevations are
  // stratified so geometry and class balance do not hinge on lucky draws.
  std::vector<int> prns(32);
  for (int i = 0; i < 32; ++i) prns[static_cast<std::size_t>(i)] = i + 1;
  rng.shuffle(prns);
  std::vector<int> ids(prns.begin(), prns.begin() + std::min(config.n_satellites, 32));
  for (int i = 32; i < config.n_satellites; ++i) ids.push_back(i + 1);
  std::sort(ids.begin(), ids.end());

  const double el_lo = config.elevation_cutoff_deg + 1.0;
  const double el_hi = config.max_elevation_deg - 1.0;
  std::vector<int> strata(static_cast<std::size_t>(config.n_satellites));
  for (int i = 0; i < config.n_satellites; ++i) strata[static_cast<std::size_t>(i)] = i;
  rng.shuffle(strata);
  const double az_base = rng.uniform(0.0, 360.0);
  std::vector<SkyTrack> tracks;
  for (int i = 0; i < config.n_satellites; ++i) {
    const auto si = static_cast<std::size_t>(i);
    SkyTrack tr;
    tr.sat_id = ids[si];
    const double width = (el_hi - el_lo) / config.n_satellites;
    tr.el_center = el_lo + (strata[si] + 0.5) * width;
    tr.el_amplitude = 0.25 * width;
    tr.el_omega = config.sat_el_drift_deg_per_s / tr.el_amplitude * rng.uniform(0.5, 1.0);
    tr.el_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    tr.az0 = wrap360(az_base + (i + rng.uniform(-0.3, 0.3)) * 360.0 / config.n_satellites);
    const double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
    tr.az_rate = dir * config.sat_az_drift_deg_per_s * rng.uniform(0.5, 1.0);
    tracks.push_back(tr);
  }

  Scenario scenario;
  const auto n_scenes = static_cast<std::size_t>(
      std::max(1.0, std::ceil(static_cast<double>(n_epochs) * dt / config.segment_duration_s)));
  struct Scene {
    double heading_deg, speed;
  };
  std::vector<Scene> scenes;
  for (std::size_t s = 0; s < n_scenes; ++s) {
    Scene sc{rng.uniform(0.0, 360.0), rng.uniform(config.speed_min_mps, config.speed_max_mps)};
    const bool open = rng.uniform() < config.open_scene_fraction;
    std::vector<Wall> walls;
    for (double side : {90.0, 270.0}) {
      walls.push_back({wrap360(sc.heading_deg + side),
                       rng.uniform(config.canyon_half_width_min_deg, config.canyon_half_width_max_deg),
                       rng.uniform(config.wall_elevation_min_deg, config.wall_elevation_max_deg)});
    }
    if (config.fixed_mask) {
      scenario.scene_masks.push_back(*config.fixed_mask);
    } else if (open) {
      scenario.scene_masks.push_back(SkyMask::uniform(config.open_elevation_deg));
    } else {
      scenario.scene_masks.push_back(canyon_mask(walls, config.open_elevation_deg));
    }
    scenes.push_back(sc);
  }

  struct NlosState {
    bool active = false;
    std::size_t scene = 0;
    double bias = 0.0;
  };
  std::vector<NlosState> nlos(tracks.size());

  geodesy::EnuVector rx_enu{0.0, 0.0, 0.0};
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const double t = static_cast<double>(e) * dt;
    const std::size_t scene = std::min(n_scenes - 1, static_cast<std::size_t>(t / config.segment_duration_s));
    const SkyMask& mask = scenario.scene_masks[scene];
    if (e > 0) {
      const Scene& sc = scenes[scene];
      rx_enu.east += sc.speed * dt * std::sin(sc.heading_deg * kDegToRad);
      rx_enu.north += sc.speed * dt * std::cos(sc.heading_deg * kDegToRad);
    }
    Epoch ep;
    ep.epoch_index = e;
    ep.receiver_truth = geodesy::enu_to_ecef(rx_enu, origin);
    const double clock = config.clock_bias_initial_m + config.clock_drift_mps * t;

    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const SkyTrack& tr = tracks[k];
      SatObservation o;
      o.sat_id = tr.sat_id;
      o.epoch_index = e;
      o.sat_pos = satellite_from_sky(origin, tr.az(t), tr.el(t));
      const geodesy::EnuVector los = geodesy::ecef_to_enu(o.sat_pos, ep.receiver_truth);
      const double el = geodesy::elevation_deg(los);
      const double az = geodesy::azimuth_deg(los);
      const bool blocked = mask.blocks(az, el);

      const double cn0_los = config.cn0_horizon_db +
                             (config.cn0_zenith_db - config.cn0_horizon_db) * std::sin(std::max(el, 0.0) * kDegToRad);
      double multipath = 0.0;
      double noise = 0.0;
      double cn0 = 0.0;
      if (blocked) {
        NlosState& st = nlos[k];
        if (!st.active || st.scene != scene) {
          st.active = true;
          st.scene = scene;
          st.bias = rng.uniform(config.nlos_bias_min_m, config.nlos_bias_max_m);
        }
        multipath = st.bias;
        noise = rng.normal(0.0, config.noise_sigma_nlos_m);
        cn0 = cn0_los - config.nlos_cn0_penalty_db + rng.normal(0.0, config.cn0_jitter_db);
      } else {
        nlos[k].active = false;
        noise = rng.normal(0.0, config.noise_sigma_los_m);
        cn0 = cn0_los + rng.normal(0.0, config.cn0_jitter_db);
      }
      o.cn0 = std::clamp(cn0, 0.0, 65.0);
      o.pseudorange = geodesy::model_pseudorange(ep.receiver_truth, o.sat_pos, clock, multipath, noise);
      o.visibility = blocked ? Visibility::NLOS : Visibility::LOS;
      o.range_error = multipath + noise;
      ep.observations.push_back(o);
    }
    validate(ep, config.N_max);
    scenario.epochs.push_back(std::move(ep));
    scenario.scene_of_epoch.push_back(scene);
  }
  solve_epochs(scenario.epochs);
  return scenario;
}

ClassBalance class_balance(std::span<const Epoch> epochs) {
  ClassBalance b;
  double cn0_sum = 0.0;
  std::size_t sat_sum = 0;
  b.cn0_min = 1e300;
  b.cn0_max = -1e300;
  std::size_t all = 0;
  for (const auto& ep : epochs) {
    sat_sum += ep.observations.size();
    b.n_max_sat = std::max(b.n_max_sat, ep.observations.size());
    for (const auto& o : ep.observations) {
      ++all;
      cn0_sum += o.cn0;
      b.cn0_min = std::min(b.cn0_min, o.cn0);
      b.cn0_max = std::max(b.cn0_max, o.cn0);
      if (o.range_error) b.max_abs_error_m = std::max(b.max_abs_error_m, std::abs(*o.range_error));
      if (!o.visibility) continue;
      ++b.observations;
      (*o.visibility == Visibility::LOS ? b.los : b.nlos) += 1;
    }
  }
  if (all == 0) {
    b.cn0_min = b.cn0_max = 0.0;
  } else {
    b.cn0_avg = cn0_sum / static_cast<double>(all);
  }
  if (!epochs.empty()) b.n_avg_sat = static_cast<double>(sat_sum) / static_cast<double>(epochs.size());
  if (b.observations > 0) {
    b.r_los_percent = 100.0 * static_cast<double>(b.los) / static_cast<double>(b.observations);
    b.r_nlos_percent = 100.0 - b.r_los_percent;
  }
  return b;
}

// ---------------------------------------------------------------------------

ResidualSource parse_residual_source(const std::string& name) {
  if (name == "ls") return ResidualSource::kLeastSquares;
  if (name == "reference") return ResidualSource::kReference;
  throw UsageError("unknown residual source '" + name + "' (ls, reference)");
}

const char* residual_source_name(ResidualSource source) {
  return source == ResidualSource::kLeastSquares ? "ls" : "reference";
}

std::vector<double> reference_residuals(const Epoch& epoch) {
  std::vector<double> offsets;
  for (const auto& o : epoch.observations) {
    offsets.push_back(o.pseudorange - geodesy::distance(o.sat_pos, epoch.receiver_truth));
  }
  if (offsets.empty()) return offsets;
  std::vector<double> sorted = offsets;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double clock = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (double& v : offsets) v -= clock;
  return offsets;
}

LabelResult label_observations(std::vector<Epoch> epochs, const SkyMask& mask, double residual_threshold_m,
                               ResidualSource source) {
  return label_observations(std::move(epochs), [&mask](std::size_t) -> const SkyMask& { return mask; },
                            residual_threshold_m, source);
}

LabelResult label_observations(std::vector<Epoch> epochs, const MaskLookup& mask, double residual_threshold_m,
                               ResidualSource source) {
  LabelResult result;
  const bool need_solve = std::any_of(epochs.begin(), epochs.end(), [](const Epoch& ep) {
    return !ep.receiver_ls || std::any_of(ep.observations.begin(), ep.observations.end(),
                                          [](const SatObservation& o) { return !o.ls_residual; });
  });
  if (need_solve) solve_epochs(epochs);
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    Epoch& ep = epochs[e];
    if (ep.observations.size() < 4 || !ep.receiver_ls) {
      result.skipped_epochs.push_back(e);
      continue;
    }
    const SkyMask& m = mask(e);
    const std::vector<double> reference =
        source == ResidualSource::kReference ? reference_residuals(ep) : std::vector<double>{};
    for (std::size_t k = 0; k < ep.observations.size(); ++k) {
      SatObservation& o = ep.observations[k];
      const geodesy::EnuVector los = geodesy::ecef_to_enu(o.sat_pos, ep.receiver_truth);
      const bool below = m.blocks(geodesy::azimuth_deg(los), geodesy::elevation_deg(los));
      const double residual = source == ResidualSource::kReference ? reference[k] : o.ls_residual.value_or(0.0);
      o.visibility = (below && residual > residual_threshold_m) ? Visibility::NLOS : Visibility::LOS;
      if (!o.range_error) o.range_error = residual;
    }
  }
  result.epochs = std::move(epochs);
  return result;
}

// ---------------------------------------------------------------------------

std::size_t FeatureWindow::valid_count() const {
  return static_cast<std::size_t>(std::count(sat_mask.begin(), sat_mask.end(), std::uint8_t{1}));
}

FeatureWindow empty_window(std::size_t n_max, std::size_t t) {
  FeatureWindow w;
  w.N_max = n_max;
  w.T = t;
  w.features.assign(n_max * t * kNumFeatures, 0.0);
  w.sat_mask.assign(n_max, 0);
  w.labels_visibility.assign(n_max, 0.0);
  w.labels_error.assign(n_max, 0.0);
  w.slot_to_sat_id.assign(n_max, -1);
  return w;
}

std::vector<FeatureWindow> build_windows(std::span<const Epoch> epochs, std::size_t T, std::size_t n_max) {
  if (T == 0) throw UsageError("build_windows: T must be at least 1");
  if (n_max == 0) throw UsageError("build_windows: N_max must be at least 1");
  std::vector<FeatureWindow> windows;
  if (epochs.size() < T) return windows;

  auto find_obs = [](const Epoch& ep, int sat_id) -> const SatObservation* {
    for (const auto& o : ep.observations)
      if (o.sat_id == sat_id) return &o;
    return nullptr;
  };

  for (std::size_t end = T - 1; end < epochs.size(); ++end) {
    const std::size_t start = end + 1 - T;
    bool usable = true;
    for (std::size_t e = start; e <= end && usable; ++e) {
      if (!epochs[e].receiver_ls) usable = false;
      if (e > start && epochs[e].epoch_index != epochs[e - 1].epoch_index + 1) usable = false;
    }
    if (!usable) continue;

    std::vector<int> present;
    for (const auto& o : epochs[end].observations) {
      bool all = true;
      for (std::size_t e = start; e <= end && all; ++e) {
        const SatObservation* p = find_obs(epochs[e], o.sat_id);
        all = p != nullptr && p->ls_residual.has_value();
      }
      if (all) present.push_back(o.sat_id);
    }
    if (present.empty()) continue;
    std::sort(present.begin(), present.end());
    if (present.size() > n_max) {
      throw DataError("build_windows: " + std::to_string(present.size()) + " satellites in window ending at epoch " +
                      std::to_string(epochs[end].epoch_index) + " exceed N_max " + std::to_string(n_max));
    }

    FeatureWindow w = empty_window(n_max, T);
    w.final_epoch_pos = end;
    w.labeled = true;
    for (std::size_t slot = 0; slot < present.size(); ++slot) {
      const int id = present[slot];
      w.sat_mask[slot] = 1;
      w.slot_to_sat_id[slot] = id;
      std::vector<double> residuals;
      for (std::size_t t = 0; t < T; ++t) {
        const Epoch& ep = epochs[start + t];
        const SatObservation& o = *find_obs(ep, id);
        const geodesy::EnuVector los = geodesy::ecef_to_enu(o.sat_pos, *ep.receiver_ls);
        w.at(slot, t, kElevation) = geodesy::elevation_deg(los);
        w.at(slot, t, kAzimuth) = geodesy::azimuth_deg(los);
        w.at(slot, t, kCn0) = o.cn0;
        w.at(slot, t, kResidual) = *o.ls_residual;
        residuals.push_back(*o.ls_residual);
      }
      const double r = geodesy::rss(residuals);
      for (std::size_t t = 0; t < T; ++t) w.at(slot, t, kRss) = r;

      const SatObservation& last = *find_obs(epochs[end], id);
      if (last.visibility && last.range_error) {
        w.labels_visibility[slot] = *last.visibility == Visibility::LOS ? 1.0 : 0.0;
        w.labels_error[slot] = *last.range_error;
      } else {
        w.labeled = false;
      }
    }
    if (!w.labeled) {
      std::fill(w.labels_visibility.begin(), w.labels_visibility.end(), 0.0);
      std::fill(w.labels_error.begin(), w.labels_error.end(), 0.0);
    }
    for (double v : w.features) {
      if (!std::isfinite(v)) throw NumericError("build_windows: non-finite feature value");
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

Normalizer fit_normalizer(std::span<const FeatureWindow> windows) {
  std::array<double, kNumFeatures> sum{}, sq{};
  std::size_t count = 0;
  for (const auto& w : windows) {
    for (std::size_t s = 0; s < w.N_max; ++s) {
      if (!w.sat_mask[s]) continue;
      for (std::size_t t = 0; t < w.T; ++t) {
        ++count;
        for (std::size_t f = 0; f < kNumFeatures; ++f) sum[f] += w.at(s, t, f);
      }
    }
  }
  if (count == 0) throw DataError("fit_normalizer: no valid entries in the fitting split");
  Normalizer n;
  for (std::size_t f = 0; f < kNumFeatures; ++f) n.mean[f] = sum[f] / static_cast<double>(count);
  for (const auto& w : windows) {
    for (std::size_t s = 0; s < w.N_max; ++s) {
      if (!w.sat_mask[s]) continue;
      for (std::size_t t = 0; t < w.T; ++t)
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          const double d = w.at(s, t, f) - n.mean[f];
          sq[f] += d * d;
        }
    }
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const double sd = std::sqrt(sq[f] / static_cast<double>(count));
    n.stddev[f] = sd > 1e-12 ? sd : 1.0;
  }
  return n;
}

FeatureWindow normalized(FeatureWindow w, const Normalizer& n) {
  for (std::size_t s = 0; s < w.N_max; ++s) {
    if (!w.sat_mask[s]) continue;
    for (std::size_t t = 0; t < w.T; ++t)
      for (std::size_t f = 0; f < kNumFeatures; ++f) w.at(s, t, f) = (w.at(s, t, f) - n.mean[f]) / n.stddev[f];
  }
  return w;
}

void apply_normalizer(std::span<FeatureWindow> windows, const Normalizer& n) {
  for (auto& w : windows) w = normalized(std::move(w), n);
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCsvHeader =
    "epoch_index,sat_id,sat_x,sat_y,sat_z,pseudorange,cn0,rx_truth_x,rx_truth_y,rx_truth_z,label_visibility,label_error_m";
}

std::string epochs_to_csv(std::span<const Epoch> epochs) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& ep : epochs) {
    for (const auto& o : ep.observations) {
      out += std::to_string(ep.epoch_index) + ',' + std::to_string(o.sat_id) + ',' + io::format_double(o.sat_pos.x) +
             ',' + io::format_double(o.sat_pos.y) + ',' + io::format_double(o.sat_pos.z) + ',' +
             io::format_double(o.pseudorange) + ',' + io::format_double(o.cn0) + ',' +
             io::format_double(ep.receiver_truth.x) + ',' + io::format_double(ep.receiver_truth.y) + ',' +
             io::format_double(ep.receiver_truth.z) + ',';
      if (o.visibility) out += *o.visibility == Visibility::LOS ? "1" : "0";
      out += ',';
      if (o.range_error) out += io::format_double(*o.range_error);
      out += '\n';
    }
  }
  return out;
}

std::vector<Epoch> epochs_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t columns = 0;
  std::map<std::size_t, Epoch> by_index;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = io::trim(line);
    if (t.empty()) continue;
    const std::string ctx = source + " line " + std::to_string(line_no);
    const auto fields = io::split(t, ',');
    if (!header_seen) {
      static const std::vector<std::string> expected = [] {
        std::vector<std::string> v;
        for (auto f : io::split(kCsvHeader, ',')) v.emplace_back(f);
        return v;
      }();
      if (fields.size() != 10 && fields.size() != 12) {
        throw DataError(ctx + ": header must have 10 or 12 columns, found " + std::to_string(fields.size()));
      }
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (io::trim(fields[i]) != expected[i]) {
          throw DataError(ctx + ": header column " + std::to_string(i + 1) + " should be '" + expected[i] + "'");
        }
      }
      columns = fields.size();
      header_seen = true;
      continue;
    }
    if (fields.size() != columns) {
      throw DataError(ctx + ": expected " + std::to_string(columns) + " columns, found " + std::to_string(fields.size()));
    }
    const long long idx = io::parse_int(fields[0], ctx);
    if (idx < 0) throw DataError(ctx + ": negative epoch_index");
    SatObservation o;
    o.epoch_index = static_cast<std::size_t>(idx);
    o.sat_id = static_cast<int>(io::parse_int(fields[1], ctx));
    o.sat_pos = {io::parse_double(fields[2], ctx), io::parse_double(fields[3], ctx), io::parse_double(fields[4], ctx)};
    o.pseudorange = io::parse_double(fields[5], ctx);
    o.cn0 = io::parse_double(fields[6], ctx);
    const EcefPosition rx{io::parse_double(fields[7], ctx), io::parse_double(fields[8], ctx),
                          io::parse_double(fields[9], ctx)};
    if (columns == 12) {
      const auto vis = io::trim(fields[10]);
      if (!vis.empty()) {
        if (vis == "1") {
          o.visibility = Visibility::LOS;
        } else if (vis == "0") {
          o.visibility = Visibility::NLOS;
        } else {
          throw DataError(ctx + ": label_visibility must be 0, 1 or empty");
        }
      }
      if (!io::trim(fields[11]).empty()) o.range_error = io::parse_double(fields[11], ctx);
    }
    try {
      validate(o);
    } catch (const DataError& e) {
      throw DataError(ctx + ": " + e.what());
    }
    auto [it, inserted] = by_index.try_emplace(o.epoch_index);
    Epoch& ep = it->second;
    if (inserted) {
      ep.epoch_index = o.epoch_index;
      ep.receiver_truth = rx;
    } else if (!(ep.receiver_truth == rx)) {
      throw DataError(ctx + ": receiver position differs from earlier rows of epoch " + std::to_string(o.epoch_index));
    }
    for (const auto& prev : ep.observations) {
      if (prev.sat_id == o.sat_id) throw DataError(ctx + ": duplicate satellite " + std::to_string(o.sat_id));
    }
    ep.observations.push_back(o);
  }
  if (!header_seen) throw DataError(source + ": missing header row");
  std::vector<Epoch> epochs;
  epochs.reserve(by_index.size());
  for (auto& [idx, ep] : by_index) epochs.push_back(std::move(ep));
  return epochs;
}

std::vector<Epoch> read_csv(const std::filesystem::path& path) {
  return epochs_from_csv(io::read_file(path), path.string());
}

void write_csv(std::span<const Epoch> epochs, const std::filesystem::path& path) {
  io::write_file_atomic(path, epochs_to_csv(epochs));
}

}  // namespace nlos::dataset
