#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "oiqa/sphere_sampler.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

struct LatLon {
  double lat;  // radians
  double lon;  // radians
};

/// Great-circle distance in radians. Throws DomainError on non-finite input.
double haversine(LatLon p1, LatLon p2);

/// Symmetric V x V geodesic distance matrix with zero diagonal. Rows are
/// computed in parallel; throws ShapeError for fewer than two points.
Tensor distance_matrix(const std::vector<SpherePoint>& points);
Tensor distance_matrix(const std::vector<LatLon>& coords);

using NeighborLists = std::vector<std::vector<std::size_t>>;

/// k nearest neighbors per node (self excluded), ordered by (distance, index).
/// Throws ConfigError unless 1 <= k < V.
NeighborLists knn(const Tensor& distances, std::size_t k);

using Edge = std::pair<std::size_t, std::size_t>;  // (src, dst)

struct ViewportGraph {
  std::size_t num_nodes = 0;
  std::size_t k = 0;
  std::vector<Edge> edges;  // sorted, unique, includes every (i, i)
  std::vector<LatLon> coords;
  NeighborLists neighbors;  // the knn relation the edges were built from

  /// Row-major V x V mask, mask[dst * V + src] = 1 for every edge src -> dst.
  std::vector<std::uint8_t> incoming_mask() const;
  std::vector<std::size_t> in_degrees() const;
};

inline constexpr std::size_t kDefaultNeighbors = 5;

ViewportGraph build_graph(const std::vector<SpherePoint>& points, std::size_t k);
ViewportGraph build_graph(const std::vector<LatLon>& coords, std::size_t k);

std::vector<LatLon> to_latlon(const std::vector<SpherePoint>& points);

namespace reference {
Tensor distance_matrix(const std::vector<LatLon>& coords);
}

}  // namespace oiqa
