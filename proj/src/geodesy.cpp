#include "nlos/geodesy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nlos/error.hpp"

namespace nlos::geodesy {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Rotation {
  double sin_lat, cos_lat, sin_lon, cos_lon;
};

Rotation enu_rotation(const EcefPosition& reference) {
  if (std::hypot(reference.x, reference.y, reference.z) < 1.0) {
    throw NumericError("ecef_to_enu: reference point is at the geocenter");
  }
  const Geodetic g = ecef_to_geodetic(reference);
  return {std::sin(g.latitude_rad), std::cos(g.latitude_rad), std::sin(g.longitude_rad),
          std::cos(g.longitude_rad)};
}

// Range evaluated in extended precision; pseudoranges are ~2e7 m and the
// solver tolerance is 1e-8 m, which is below double rounding at that scale.
long double precise_range(const EcefPosition& a, const EcefPosition& b) {
  const long double dx = static_cast<long double>(a.x) - b.x;
  const long double dy = static_cast<long double>(a.y) - b.y;
  const long double dz = static_cast<long double>(a.z) - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double distance(const EcefPosition& a, const EcefPosition& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

double norm(const EnuVector& v) { return std::hypot(v.east, v.north, v.up); }

Geodetic ecef_to_geodetic(const EcefPosition& p) {
  using namespace wgs84;
  const double rho = std::hypot(p.x, p.y);
  Geodetic g;
  g.longitude_rad = std::atan2(p.y, p.x);
  if (rho < 1e-9) {
    g.latitude_rad = p.z >= 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
    g.height_m = std::abs(p.z) - kSemiMajorAxis * (1.0 - kFlattening);
    return g;
  }
  // Fixed-point iteration on latitude; converges to machine precision in a
  // handful of steps for terrestrial and orbital altitudes.
  double lat = std::atan2(p.z, rho * (1.0 - kEccentricitySq));
  double height = 0.0;
  for (int i = 0; i < 30; ++i) {
    const double s = std::sin(lat);
    const double n = kSemiMajorAxis / std::sqrt(1.0 - kEccentricitySq * s * s);
    height = rho / std::cos(lat) - n;
    const double next = std::atan2(p.z, rho * (1.0 - kEccentricitySq * n / (n + height)));
    const double delta = std::abs(next - lat);
    lat = next;
    if (delta < 1e-15) break;
  }
  const double s = std::sin(lat);
  const double n = kSemiMajorAxis / std::sqrt(1.0 - kEccentricitySq * s * s);
  // Height from the better-conditioned projection for either latitude band.
  height = std::abs(lat) < std::numbers::pi / 4 ? rho / std::cos(lat) - n
                                                : p.z / s - n * (1.0 - kEccentricitySq);
  g.latitude_rad = lat;
  g.height_m = height;
  return g;
}

EcefPosition geodetic_to_ecef(const Geodetic& g) {
  using namespace wgs84;
  const double s = std::sin(g.latitude_rad);
  const double c = std::cos(g.latitude_rad);
  const double n = kSemiMajorAxis / std::sqrt(1.0 - kEccentricitySq * s * s);
  return {(n + g.height_m) * c * std::cos(g.longitude_rad),
          (n + g.height_m) * c * std::sin(g.longitude_rad),
          (n * (1.0 - kEccentricitySq) + g.height_m) * s};
}

EnuVector ecef_to_enu(const EcefPosition& point, const EcefPosition& reference) {
  const Rotation r = enu_rotation(reference);
  const double dx = point.x - reference.x;
  const double dy = point.y - reference.y;
  const double dz = point.z - reference.z;
  return {-r.sin_lon * dx + r.cos_lon * dy,
          -r.sin_lat * r.cos_lon * dx - r.sin_lat * r.sin_lon * dy + r.cos_lat * dz,
          r.cos_lat * r.cos_lon * dx + r.cos_lat * r.sin_lon * dy + r.sin_lat * dz};
}

EcefPosition enu_to_ecef(const EnuVector& enu, const EcefPosition& reference) {
  const Rotation r = enu_rotation(reference);
  const double dx = -r.sin_lon * enu.east - r.sin_lat * r.cos_lon * enu.north +
                    r.cos_lat * r.cos_lon * enu.up;
  const double dy = r.cos_lon * enu.east - r.sin_lat * r.sin_lon * enu.north +
                    r.cos_lat * r.sin_lon * enu.up;
  const double dz = r.cos_lat * enu.north + r.sin_lat * enu.up;
  return {reference.x + dx, reference.y + dy, reference.z + dz};
}

double elevation_deg(const EnuVector& sat_enu) {
  if (!(norm(sat_enu) > 0.0)) throw NumericError("elevation_deg: zero-length direction vector");
  // arcsin(up / range), evaluated through atan2 to stay well conditioned near the zenith.
  return std::atan2(sat_enu.up, std::hypot(sat_enu.east, sat_enu.north)) * kRadToDeg;
}

double azimuth_deg(const EnuVector& sat_enu) {
  if (!(std::hypot(sat_enu.east, sat_enu.north) > 0.0)) {
    throw NumericError("azimuth_deg: undefined azimuth, zero horizontal component");
  }
  double az = std::atan2(sat_enu.east, sat_enu.north) * kRadToDeg;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az = 0.0;
  return az;
}

double model_pseudorange(const EcefPosition& receiver, const EcefPosition& sat,
                         double clock_bias_m, double multipath_m, double noise_m) {
  const double range = distance(receiver, sat);
  if (!(range > 0.0)) throw NumericError("model_pseudorange: receiver and satellite coincide");
  return range + clock_bias_m + multipath_m + noise_m;
}

double design_condition_number(std::span<const EcefPosition> sat_positions,
                               const EcefPosition& receiver) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(sat_positions.size()), 4);
  for (std::size_t k = 0; k < sat_positions.size(); ++k) {
    const double r = distance(receiver, sat_positions[k]);
    const auto i = static_cast<Eigen::Index>(k);
    h(i, 0) = (receiver.x - sat_positions[k].x) / r;
    h(i, 1) = (receiver.y - sat_positions[k].y) / r;
    h(i, 2) = (receiver.z - sat_positions[k].z) / r;
    h(i, 3) = 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

LsSolution ls_position_solve(std::span<const double> pseudoranges,
                             std::span<const EcefPosition> sat_positions,
                             const EcefPosition& initial_guess, const LsOptions& options) {
  if (pseudoranges.size() != sat_positions.size()) {
    throw UsageError("ls_position_solve: " + std::to_string(pseudoranges.size()) +
                     " pseudoranges but " + std::to_string(sat_positions.size()) +
                     " satellite positions");
  }
  const std::size_t m = pseudoranges.size();
  if (m < 4) {
    throw DataError("ls_position_solve: insufficient observations (" + std::to_string(m) +
                    " satellites, need at least 4)");
  }

  LsSolution sol;
  sol.position = initial_guess;
  sol.clock_bias_m = 0.0;

  Eigen::MatrixXd h(static_cast<Eigen::Index>(m), 4);
  Eigen::VectorXd y(static_cast<Eigen::Index>(m));
  for (int iter = 0; iter < options.max_iter; ++iter) {
    for (std::size_t k = 0; k < m; ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const long double r = precise_range(sol.position, sat_positions[k]);
      if (!(r > 0.0L)) throw NumericError("ls_position_solve: estimate coincides with satellite");
      const double rd = static_cast<double>(r);
      h(i, 0) = (sol.position.x - sat_positions[k].x) / rd;
      h(i, 1) = (sol.position.y - sat_positions[k].y) / rd;
      h(i, 2) = (sol.position.z - sat_positions[k].z) / rd;
      h(i, 3) = 1.0;
      y(i) = static_cast<double>(static_cast<long double>(pseudoranges[k]) - r -
                                 static_cast<long double>(sol.clock_bias_m));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv(3) > sv(0) * 1e-12)) {
      throw NumericError("ls_position_solve: singular satellite geometry");
    }
    const Eigen::Vector4d dx = svd.solve(y);
    if (!dx.allFinite()) throw NumericError("ls_position_solve: non-finite update");
    sol.position.x += dx(0);
    sol.position.y += dx(1);
    sol.position.z += dx(2);
    sol.clock_bias_m += dx(3);
    sol.iterations = iter + 1;
    if (dx.head<3>().norm() < options.tol_m) {
      sol.converged = true;
      break;
    }
  }

  sol.residuals.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    sol.residuals[k] = static_cast<double>(static_cast<long double>(pseudoranges[k]) -
                                           precise_range(sol.position, sat_positions[k]) -
                                           static_cast<long double>(sol.clock_bias_m));
  }
  return sol;
}

double rss(std::span<const double> residual_history) {
  if (residual_history.empty()) throw DataError("rss: empty residual window");
  double sum = 0.0;
  for (double r : residual_history) sum += r * r;
  return std::sqrt(sum);
}

}  // namespace nlos::geodesy
