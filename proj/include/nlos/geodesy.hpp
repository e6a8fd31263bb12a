#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nlos::geodesy {

namespace wgs84 {
inline constexpr double kSemiMajorAxis = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

struct EcefPosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const EcefPosition&, const EcefPosition&) = default;
};

struct EnuVector {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;

  friend bool operator==(const EnuVector&, const EnuVector&) = default;
};

struct Geodetic {
  double latitude_rad = 0.0;
  double longitude_rad = 0.0;
  double height_m = 0.0;
};

double distance(const EcefPosition& a, const EcefPosition& b);
double norm(const EnuVector& v);

Geodetic ecef_to_geodetic(const EcefPosition& p);
EcefPosition geodetic_to_ecef(const Geodetic& g);

/// Local East-North-Up coordinates of `point` in the tangent frame at
/// `reference`. The rotation uses the geodetic latitude/longitude of the
/// reference on the WGS-84 ellipsoid. Throws NumericError if the reference is
/// at the geocenter.
EnuVector ecef_to_enu(const EcefPosition& point, const EcefPosition& reference);

/// Inverse of ecef_to_enu.
EcefPosition enu_to_ecef(const EnuVector& enu, const EcefPosition& reference);

/// arcsin(up / slant range) in degrees, in [-90, 90].
double elevation_deg(const EnuVector& sat_enu);

/// Clockwise from north, in [0, 360). Throws when the horizontal component
/// vanishes (satellite at zenith or nadir).
double azimuth_deg(const EnuVector& sat_enu);

/// Corrected pseudorange: geometric range plus receiver clock bias, multipath
/// delay and noise, all in meters.
double model_pseudorange(const EcefPosition& receiver, const EcefPosition& sat,
                         double clock_bias_m, double multipath_m, double noise_m);

struct LsOptions {
  int max_iter = 20;
  double tol_m = 1e-8;
};

struct LsSolution {
  EcefPosition position;
  double clock_bias_m = 0.0;
  // Measured minus predicted, one per satellite in input order.
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;
};

/// Gauss-Newton over (x, y, z, clock bias). Throws DataError with fewer than
/// four satellites and NumericError when the geometry is rank deficient.
/// Non-convergence is reported through `converged`, not thrown.
LsSolution ls_position_solve(std::span<const double> pseudoranges,
                             std::span<const EcefPosition> sat_positions,
                             const EcefPosition& initial_guess, const LsOptions& options = {});

/// Condition number of the LS design matrix (unit line-of-sight rows plus a
/// clock column) evaluated at `receiver`.
double design_condition_number(std::span<const EcefPosition> sat_positions,
                               const EcefPosition& receiver);

/// Root-sum-square of a residual history.
double rss(std::span<const double> residual_history);

}  // namespace nlos::geodesy
