#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cmath>
#include <numbers>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/geodesy.hpp"
#include "nlos/random.hpp"

namespace nlos::testing {

inline geodesy::EcefPosition random_receiver(Rng& rng) {
  geodesy::Geodetic g;
  g.latitude_rad = rng.uniform(-1.3, 1.3);
  g.longitude_rad = rng.uniform(-std::numbers::pi, std::numbers::pi);
  g.height_m = rng.uniform(-50.0, 2000.0);
  return geodesy::geodetic_to_ecef(g);
}

// Satellite on a ~26,560 km orbit radius seen from `receiver` at the given
// azimuth/elevation (degrees).
inline geodesy::EcefPosition satellite_at(const geodesy::EcefPosition& receiver, double az_deg,
                                          double el_deg) {
  constexpr double kOrbitRadius = 26'560'000.0;
  const double az = az_deg * std::numbers::pi / 180.0;
  const double el = el_deg * std::numbers::pi / 180.0;
  const geodesy::EnuVector dir{std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
  const geodesy::EcefPosition tip = geodesy::enu_to_ecef(dir, receiver);
  const double ux = tip.x - receiver.x, uy = tip.y - receiver.y, uz = tip.z - receiver.z;
  const double b = receiver.x * ux + receiver.y * uy + receiver.z * uz;
  const double c = receiver.x * receiver.x + receiver.y * receiver.y + receiver.z * receiver.z -
                   kOrbitRadius * kOrbitRadius;
  const double range = -b + std::sqrt(b * b - c);
  return {receiver.x + range * ux, receiver.y + range * uy, receiver.z + range * uz};
}

inline std::vector<geodesy::EcefPosition> spread_satellites(const geodesy::EcefPosition& receiver,
                                                            int n, Rng& rng) {
  std::vector<geodesy::EcefPosition> sats;
  const double az0 = rng.uniform(0.0, 360.0);
  for (int i = 0; i < n; ++i) {
    const double az = az0 + 360.0 * i / n + rng.uniform(-10.0, 10.0);
    const double el = 10.0 + 75.0 * (i + rng.uniform()) / n;
    sats.push_back(satellite_at(receiver, std::fmod(az, 360.0), el));
  }
  return sats;
}

// Labeled window with uniform features in [-range, range] on the given slots.
inline dataset::FeatureWindow random_window(std::size_t n_max, std::size_t t_len, const std::vector<std::size_t>& valid,
                                            Rng& rng, double range = 2.0) {
  dataset::FeatureWindow w = dataset::empty_window(n_max, t_len);
  for (std::size_t s : valid) {
    w.sat_mask[s] = 1;
    w.slot_to_sat_id[s] = static_cast<int>(s) + 1;
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t f = 0; f < dataset::kNumFeatures; ++f) w.at(s, t, f) = rng.uniform(-range, range);
    w.labels_visibility[s] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    w.labels_error[s] = rng.uniform(-5.0, 60.0);
  }
  w.labeled = true;
  return w;
}

}  // namespace nlos::testing
