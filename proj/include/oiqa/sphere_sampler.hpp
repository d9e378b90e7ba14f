#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace oiqa {

/// A viewport center on the unit sphere.
///
/// `theta` is the polar angle from +z and `psi` the azimuth. Geographic
/// coordinates follow the sampler's linear maps lat = theta - 90 deg and
/// lon = psi - 180 deg, so the +z pole sits at lat = -90 deg. Every
/// downstream consumer uses the same convention.
struct SpherePoint {
  std::size_t index = 0;
  double z = 0.0;
  double theta = 0.0;  // radians, [0, pi]
  double psi = 0.0;    // radians, [0, 2 pi)
  double lat = 0.0;    // degrees, [-90, 90]
  double lon = 0.0;    // degrees, [-180, 180)
  std::array<double, 3> xyz{};

  double lat_rad() const;
  double lon_rad() const;
};

struct Geographic {
  double lat;  // degrees
  double lon;  // degrees
};

inline constexpr std::size_t kDefaultViewportCount = 20;

/// Golden-ratio spiral: z_k = 1 - 2k/(n-1), theta_k = acos z_k,
/// psi_k = 2 pi frac(k / phi). Throws DomainError for n < 2.
std::vector<SpherePoint> fibonacci_sample(std::size_t n);

Geographic to_geographic(double theta, double psi);
inline Geographic to_geographic(const SpherePoint& p) { return to_geographic(p.theta, p.psi); }

/// Builds a fully populated point from polar/azimuth angles.
SpherePoint make_sphere_point(std::size_t index, double theta, double psi);

/// Equiangular latitude-longitude grid with cell-centered latitudes, used as
/// the uniformity baseline. `rows * cols` points.
std::vector<SpherePoint> latlong_grid(std::size_t rows, std::size_t cols);

/// Nearest-neighbor geodesic distance statistics of a point set.
struct UniformityStats {
  std::size_t count = 0;
  double min_nn = 0.0;
  double max_nn = 0.0;
  double mean_nn = 0.0;
  double cv_nn = 0.0;     // population std / mean
  double ratio_nn = 0.0;  // max / min
  std::vector<double> nn;
};

UniformityStats uniformity_stats(const std::vector<SpherePoint>& points);

}  // namespace oiqa
