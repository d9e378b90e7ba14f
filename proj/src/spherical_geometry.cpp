#include "oiqa/spherical_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oiqa/error.hpp"

namespace oiqa {

double haversine(LatLon p1, LatLon p2) {
  if (!std::isfinite(p1.lat) || !std::isfinite(p1.lon) || !std::isfinite(p2.lat) ||
      !std::isfinite(p2.lon)) {
    throw DomainError("haversine: non-finite coordinate");
  }
  const double sd_lat = std::sin(0.5 * (p2.lat - p1.lat));
  const double sd_lon = std::sin(0.5 * (p2.lon - p1.lon));
  double a = sd_lat * sd_lat + std::cos(p1.lat) * std::cos(p2.lat) * sd_lon * sd_lon;
  a = std::clamp(a, 0.0, 1.0);
  return 2.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

std::vector<LatLon> to_latlon(const std::vector<SpherePoint>& points) {
  std::vector<LatLon> coords;
  coords.reserve(points.size());
  for (const auto& p : points) coords.push_back({p.lat_rad(), p.lon_rad()});
  return coords;
}

Tensor distance_matrix(const std::vector<SpherePoint>& points) {
  return distance_matrix(to_latlon(points));
}

Tensor distance_matrix(const std::vector<LatLon>& coords) {
  const std::size_t n = coords.size();
  if (n < 2) throw ShapeError("distance_matrix: need at least 2 points, got " + std::to_string(n));
  Tensor d = Tensor::matrix(n, n);
  // Upper triangle in parallel; each entry is written by exactly one thread.
#pragma omp parallel for schedule(dynamic, 4) if (n > 64)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = haversine(coords[i], coords[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) d(i, j) = d(j, i);
  return d;
}

namespace reference {
Tensor distance_matrix(const std::vector<LatLon>& coords) {
  const std::size_t n = coords.size();
  if (n < 2) throw ShapeError("distance_matrix: need at least 2 points, got " + std::to_string(n));
  Tensor d = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d(i, j) = haversine(coords[i], coords[j]);
      d(j, i) = d(i, j);
    }
  }
  return d;
}
}  // namespace reference

NeighborLists knn(const Tensor& distances, std::size_t k) {
  const std::size_t n = distances.rows();
  if (distances.rank() != 2 || distances.cols() != n) throw ShapeError("knn: distance matrix must be square");
  if (k == 0 || k >= n) {
    throw ConfigError("knn: need 1 <= k < V, got k=" + std::to_string(k) + " with V=" +
                      std::to_string(n));
  }
  NeighborLists out(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = distances(i, a), db = distances(i, b);
                        return da != db ? da < db : a < b;
                      });
    out[i].assign(order.begin(), order.begin() + static_cast<long>(k));
  }
  return out;
}

ViewportGraph build_graph(const std::vector<SpherePoint>& points, std::size_t k) {
  return build_graph(to_latlon(points), k);
}

ViewportGraph build_graph(const std::vector<LatLon>& coords, std::size_t k) {
  ViewportGraph g;
  g.num_nodes = coords.size();
  g.k = k;
  g.coords = coords;
  if (coords.size() < 2) {
    throw ConfigError("build_graph: need at least 2 nodes, got " + std::to_string(coords.size()));
  }
  g.neighbors = knn(distance_matrix(coords), k);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    g.edges.emplace_back(i, i);
    for (std::size_t j : g.neighbors[i]) {
      g.edges.emplace_back(i, j);
      g.edges.emplace_back(j, i);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

std::vector<std::uint8_t> ViewportGraph::incoming_mask() const {
  std::vector<std::uint8_t> mask(num_nodes * num_nodes, 0);
  for (const auto& [src, dst] : edges) mask[dst * num_nodes + src] = 1;
  return mask;
}

std::vector<std::size_t> ViewportGraph::in_degrees() const {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& e : edges) ++deg[e.second];
  return deg;
}

}  // namespace oiqa
