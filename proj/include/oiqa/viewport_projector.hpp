#pragma once

#include <cstddef>
#include <vector>

#include "oiqa/image.hpp"
#include "oiqa/sphere_sampler.hpp"

namespace oiqa {

enum class Interpolation { Bilinear, Nearest };

struct Viewport {
  std::size_t size = 0;   // square side in pixels
  double fov = 0.0;       // degrees
  Geographic center{};    // degrees
  Tensor pixels;          // [3 x size x size], values in [0, 1]
};

inline constexpr double kDefaultFovDegrees = 90.0;
inline constexpr std::size_t kDefaultViewportSize = 224;

struct PlanePoint {
  double x;
  double y;
};

/// Inverse gnomonic map: tangent-plane point at `center` to lat/lon (degrees).
Geographic tangent_plane_to_sphere(Geographic center, PlanePoint p);
/// Forward gnomonic map. Only valid for points in the hemisphere facing `center`.
PlanePoint sphere_to_tangent_plane(Geographic center, Geographic point);

/// Plane coordinates of (possibly fractional) pixel position (px, py);
/// (size-1)/2 in both axes is the tangent point.
PlanePoint viewport_pixel_to_plane(double fov_deg, std::size_t size, double px, double py);
/// Inverse of viewport_pixel_to_plane.
PlanePoint viewport_plane_to_pixel(double fov_deg, std::size_t size, PlanePoint p);

/// Renders the rectilinear view of `erp` centered at `center`.
Viewport gnomonic_extract(const ErpImage& erp, Geographic center, double fov_deg, std::size_t size,
                          Interpolation interp = Interpolation::Bilinear);

std::vector<Viewport> extract_all(const ErpImage& erp, const std::vector<SpherePoint>& points,
                                  double fov_deg, std::size_t size,
                                  Interpolation interp = Interpolation::Bilinear);

namespace reference {
Viewport gnomonic_extract(const ErpImage& erp, Geographic center, double fov_deg, std::size_t size,
                          Interpolation interp = Interpolation::Bilinear);
}

}  // namespace oiqa
