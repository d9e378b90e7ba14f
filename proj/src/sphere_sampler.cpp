#include "oiqa/sphere_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "oiqa/error.hpp"
#include "oiqa/spherical_geometry.hpp"

namespace oiqa {

namespace {
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}

double SpherePoint::lat_rad() const { return lat / kRadToDeg; }
double SpherePoint::lon_rad() const { return lon / kRadToDeg; }

Geographic to_geographic(double theta, double psi) {
  return {theta * kRadToDeg - 90.0, psi * kRadToDeg - 180.0};
}

SpherePoint make_sphere_point(std::size_t index, double theta, double psi) {
  SpherePoint p;
  p.index = index;
  p.theta = theta;
  p.psi = psi;
  p.z = std::cos(theta);
  const Geographic g = to_geographic(theta, psi);
  p.lat = g.lat;
  p.lon = g.lon;
  const double s = std::sin(theta);
  p.xyz = {s * std::cos(psi), s * std::sin(psi), std::cos(theta)};
  return p;
}

std::vector<SpherePoint> fibonacci_sample(std::size_t n) {
  if (n < 2) {
    throw DomainError("fibonacci_sample: n must be >= 2 (the z_k = 1 - 2k/(n-1) denominator is " +
                      std::to_string(static_cast<long>(n) - 1) + ")");
  }
  const double golden = std::numbers::phi;
  std::vector<SpherePoint> points;
  points.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double kd = static_cast<double>(k);
    const double z = 1.0 - 2.0 * kd / static_cast<double>(n - 1);
    const double turns = kd / golden;
    const double psi = 2.0 * std::numbers::pi * (turns - std::floor(turns));
    SpherePoint p = make_sphere_point(k, std::acos(z), psi);
    // acos/cos round trip is not exact; keep the generating z.
    p.z = z;
    points.push_back(p);
  }
  return points;
}

std::vector<SpherePoint> latlong_grid(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw DomainError("latlong_grid: empty grid");
  std::vector<SpherePoint> points;
  points.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double theta = (static_cast<double>(r) + 0.5) * std::numbers::pi / static_cast<double>(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      const double psi = static_cast<double>(c) * 2.0 * std::numbers::pi / static_cast<double>(cols);
      points.push_back(make_sphere_point(points.size(), theta, psi));
    }
  }
  return points;
}

UniformityStats uniformity_stats(const std::vector<SpherePoint>& points) {
  const Tensor d = distance_matrix(points);
  UniformityStats s;
  s.count = points.size();
  s.nn.assign(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) s.nn[i] = std::min(s.nn[i], d(i, j));
  s.min_nn = *std::min_element(s.nn.begin(), s.nn.end());
  s.max_nn = *std::max_element(s.nn.begin(), s.nn.end());
  double sum = 0.0;
  for (double v : s.nn) sum += v;
  s.mean_nn = sum / static_cast<double>(s.nn.size());
  double var = 0.0;
  for (double v : s.nn) var += (v - s.mean_nn) * (v - s.mean_nn);
  var /= static_cast<double>(s.nn.size());
  s.cv_nn = std::sqrt(var) / s.mean_nn;
  s.ratio_nn = s.max_nn / s.min_nn;
  return s;
}

}  // namespace oiqa
