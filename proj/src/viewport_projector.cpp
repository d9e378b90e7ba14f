#include "oiqa/viewport_projector.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "oiqa/error.hpp"

namespace oiqa {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void validate(const ErpImage& erp, double fov_deg, std::size_t size) {
  if (erp.pixels.empty() || erp.width() == 0 || erp.height() == 0) {
    throw InputError("gnomonic_extract: empty ERP image");
  }
  if (erp.channels() != 3) throw InputError("gnomonic_extract: ERP image must have 3 channels");
  if (!(fov_deg > 0.0 && fov_deg <= 120.0)) {
    throw DomainError("gnomonic_extract: fov must lie in (0, 120] degrees, got " +
                      std::to_string(fov_deg));
  }
  if (size == 0) throw DomainError("gnomonic_extract: viewport size must be positive");
}

// Tangent frame at a center: forward, east, north.
struct Frame {
  double sin_lat, cos_lat, sin_lon, cos_lon, lon;
};

Frame make_frame(Geographic c) {
  const double lat = c.lat * kDegToRad, lon = c.lon * kDegToRad;
  return {std::sin(lat), std::cos(lat), std::sin(lon), std::cos(lon), lon};
}

// Returns (lat, lon) in radians. Latitude depends on the plane point and the
// center latitude only, so equal-latitude centers see identical rows.
inline void plane_to_sphere(const Frame& f, double x, double y, double& lat, double& lon) {
  const double norm = std::sqrt(1.0 + x * x + y * y);
  lat = std::asin(std::clamp((f.sin_lat + y * f.cos_lat) / norm, -1.0, 1.0));
  const double rx = f.cos_lat * f.cos_lon - x * f.sin_lon - y * f.sin_lat * f.cos_lon;
  const double ry = f.cos_lat * f.sin_lon + x * f.cos_lon - y * f.sin_lat * f.sin_lon;
  lon = std::atan2(ry, rx);
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

struct Sampler {
  const Tensor& px;
  std::size_t w, h;

  // Continuous ERP coordinates with pixel centers at integer + 0.5.
  void sample(double lat, double lon, Interpolation interp, double out[3]) const {
    const double u = (lon + std::numbers::pi) / (2.0 * std::numbers::pi) * static_cast<double>(w) - 0.5;
    const double v = (0.5 * std::numbers::pi - lat) / std::numbers::pi * static_cast<double>(h) - 0.5;
    const long wl = static_cast<long>(w), hl = static_cast<long>(h);
    auto wrap = [wl](long c) { return static_cast<std::size_t>(((c % wl) + wl) % wl); };
    auto clamp_row = [hl](long r) { return static_cast<std::size_t>(std::clamp(r, 0L, hl - 1)); };
    if (interp == Interpolation::Nearest) {
      const std::size_t c = wrap(std::lround(u)), r = clamp_row(std::lround(v));
      for (std::size_t ch = 0; ch < 3; ++ch) out[ch] = px(ch, r, c);
      return;
    }
    const double u0f = std::floor(u), v0f = std::floor(v);
    const double tu = u - u0f, tv = v - v0f;
    const long u0 = static_cast<long>(u0f), v0 = static_cast<long>(v0f);
    const std::size_t c0 = wrap(u0), c1 = wrap(u0 + 1);
    const std::size_t r0 = clamp_row(v0), r1 = clamp_row(v0 + 1);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double top = lerp(px(ch, r0, c0), px(ch, r0, c1), tu);
      const double bottom = lerp(px(ch, r1, c0), px(ch, r1, c1), tu);
      out[ch] = std::clamp(lerp(top, bottom, tv), 0.0, 1.0);
    }
  }
};

inline void render_row(const Sampler& s, const Frame& f, double fov_deg, std::size_t size,
                       std::size_t py, Interpolation interp, Tensor& out) {
  for (std::size_t px = 0; px < size; ++px) {
    const PlanePoint p = viewport_pixel_to_plane(fov_deg, size, static_cast<double>(px),
                                                 static_cast<double>(py));
    double lat, lon, rgb[3];
    plane_to_sphere(f, p.x, p.y, lat, lon);
    s.sample(lat, lon, interp, rgb);
    for (std::size_t ch = 0; ch < 3; ++ch) out(ch, py, px) = rgb[ch];
  }
}

void warn_aspect(const ErpImage& erp) {
  if (erp.width() != 2 * erp.height()) {
    std::cerr << "warning: ERP image is " << erp.width() << "x" << erp.height()
              << ", expected a 2:1 aspect ratio\n";
  }
}

}  // namespace

PlanePoint viewport_pixel_to_plane(double fov_deg, std::size_t size, double px, double py) {
  const double half = std::tan(0.5 * fov_deg * kDegToRad);
  const double n = static_cast<double>(size);
  return {(2.0 * (px + 0.5) / n - 1.0) * half, (1.0 - 2.0 * (py + 0.5) / n) * half};
}

PlanePoint viewport_plane_to_pixel(double fov_deg, std::size_t size, PlanePoint p) {
  const double half = std::tan(0.5 * fov_deg * kDegToRad);
  const double n = static_cast<double>(size);
  return {(p.x / half + 1.0) * n / 2.0 - 0.5, (1.0 - p.y / half) * n / 2.0 - 0.5};
}

Geographic tangent_plane_to_sphere(Geographic center, PlanePoint p) {
  double lat, lon;
  plane_to_sphere(make_frame(center), p.x, p.y, lat, lon);
  return {lat / kDegToRad, lon / kDegToRad};
}

PlanePoint sphere_to_tangent_plane(Geographic center, Geographic point) {
  const Frame f = make_frame(center);
  const double lat = point.lat * kDegToRad, lon = point.lon * kDegToRad;
  const double dx = std::cos(lat) * std::cos(lon), dy = std::cos(lat) * std::sin(lon), dz = std::sin(lat);
  const double forward = f.cos_lat * f.cos_lon * dx + f.cos_lat * f.sin_lon * dy + f.sin_lat * dz;
  if (forward <= 0.0) throw DomainError("sphere_to_tangent_plane: point behind the tangent plane");
  const double east = -f.sin_lon * dx + f.cos_lon * dy;
  const double north = -f.sin_lat * f.cos_lon * dx - f.sin_lat * f.sin_lon * dy + f.cos_lat * dz;
  return {east / forward, north / forward};
}

Viewport gnomonic_extract(const ErpImage& erp, Geographic center, double fov_deg, std::size_t size,
                          Interpolation interp) {
  validate(erp, fov_deg, size);
  Viewport vp{size, fov_deg, center, Tensor({3, size, size})};
  const Sampler sampler{erp.pixels, erp.width(), erp.height()};
  const Frame frame = make_frame(center);
#pragma omp parallel for schedule(static) if (size >= 64)
  for (std::size_t py = 0; py < size; ++py) render_row(sampler, frame, fov_deg, size, py, interp, vp.pixels);
  return vp;
}

std::vector<Viewport> extract_all(const ErpImage& erp, const std::vector<SpherePoint>& points,
                                  double fov_deg, std::size_t size, Interpolation interp) {
  if (!points.empty()) warn_aspect(erp);
  std::vector<Viewport> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(gnomonic_extract(erp, {p.lat, p.lon}, fov_deg, size, interp));
  return out;
}

namespace reference {
Viewport gnomonic_extract(const ErpImage& erp, Geographic center, double fov_deg, std::size_t size,
                          Interpolation interp) {
  validate(erp, fov_deg, size);
  Viewport vp{size, fov_deg, center, Tensor({3, size, size})};
  const Sampler sampler{erp.pixels, erp.width(), erp.height()};
  const Frame frame = make_frame(center);
  for (std::size_t py = 0; py < size; ++py) render_row(sampler, frame, fov_deg, size, py, interp, vp.pixels);
  return vp;
}
}  // namespace reference

}  // namespace oiqa
