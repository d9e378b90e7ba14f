#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oiqa/error.hpp"
#include "oiqa/spherical_geometry.hpp"

namespace oiqa {
namespace {

constexpr double kPi = std::numbers::pi;

std::array<double, 3> unit(LatLon p) {
  return {std::cos(p.lat) * std::cos(p.lon), std::cos(p.lat) * std::sin(p.lon), std::sin(p.lat)};
}

double chord_distance(LatLon a, LatLon b) {
  const auto u = unit(a), v = unit(b);
  const double c = std::hypot(u[0] - v[0], u[1] - v[1], u[2] - v[2]);
  return 2.0 * std::asin(std::min(1.0, c / 2.0));
}

LatLon random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), lon(-kPi, kPi);
  return {std::asin(u(rng)), lon(rng)};
}

// k = 5 neighbor lists of fibonacci_sample(20), frozen from a brute-force sort.
const NeighborLists kFib20Neighbors{
    {1, 2, 3, 4, 5},      {0, 4, 6, 3, 2},      {0, 7, 5, 10, 1},     {8, 0, 6, 1, 11},
    {1, 9, 7, 12, 0},     {10, 2, 8, 13, 0},    {11, 1, 3, 14, 9},    {12, 2, 4, 15, 10},
    {13, 3, 5, 16, 11},   {4, 14, 6, 12, 17},   {15, 5, 13, 7, 2},    {6, 16, 14, 3, 8},
    {7, 17, 15, 4, 9},    {8, 18, 16, 5, 10},   {9, 17, 11, 6, 19},   {18, 10, 12, 7, 19},
    {11, 19, 13, 18, 8},  {19, 12, 14, 9, 18},  {19, 15, 13, 16, 17}, {18, 17, 16, 15, 14}};

TEST(Haversine, UnitCases) {
  EXPECT_EQ(haversine({0.3, -1.2}, {0.3, -1.2}), 0.0);
  EXPECT_DOUBLE_EQ(haversine({0, 0}, {0, kPi / 2}), kPi / 2);
  EXPECT_DOUBLE_EQ(haversine({0, 0}, {0, kPi}), kPi);
  EXPECT_DOUBLE_EQ(haversine({kPi / 2, 0}, {-kPi / 2, 0}), kPi);
}

TEST(Haversine, RejectsNonFinite) {
  EXPECT_THROW(haversine({std::nan(""), 0}, {0, 0}), DomainError);
  EXPECT_THROW(haversine({0, 0}, {0, INFINITY}), DomainError);
}

TEST(Haversine, AgreesWithChordFormula) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const LatLon a = random_point(rng), b = random_point(rng);
    EXPECT_NEAR(haversine(a, b), chord_distance(a, b), 1e-9);
  }
}

TEST(Haversine, Symmetric) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10000; ++i) {
    const LatLon a = random_point(rng), b = random_point(rng);
    EXPECT_NEAR(haversine(a, b), haversine(b, a), 1e-12);
  }
}

TEST(Haversine, TriangleInequality) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const LatLon a = random_point(rng), b = random_point(rng), c = random_point(rng);
    EXPECT_LE(haversine(a, c), haversine(a, b) + haversine(b, c) + 1e-9);
  }
}

TEST(DistanceMatrix, IdenticalPoints) {
  const Tensor d = distance_matrix(std::vector<LatLon>{{0.2, 0.4}, {0.2, 0.4}});
  EXPECT_EQ(d, Tensor::matrix(2, 2, 0.0));
}

TEST(DistanceMatrix, EquatorTriple) {
  const Tensor d = distance_matrix(std::vector<LatLon>{{0, 0}, {0, kPi / 2}, {0, kPi}});
  EXPECT_DOUBLE_EQ(d(0, 1), kPi / 2);
  EXPECT_DOUBLE_EQ(d(1, 2), kPi / 2);
  EXPECT_DOUBLE_EQ(d(0, 2), kPi);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(d(i, i), 0.0);
}

TEST(DistanceMatrix, FibonacciTwentyMatchesScalarLoop) {
  const auto pts = fibonacci_sample(20);
  const Tensor d = distance_matrix(pts);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<LatLon> ll;
  for (int k = 0; k < 20; ++k) {
    const double theta = std::acos(1.0 - 2.0 * k / 19.0);
    const double f = k / golden;
    ll.push_back({theta - kPi / 2, 2.0 * kPi * (f - std::floor(f)) - kPi});
  }
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double dphi = ll[j].lat - ll[i].lat, dl = ll[j].lon - ll[i].lon;
      double a = std::pow(std::sin(dphi / 2), 2) +
                 std::cos(ll[i].lat) * std::cos(ll[j].lat) * std::pow(std::sin(dl / 2), 2);
      a = std::clamp(a, 0.0, 1.0);
      EXPECT_NEAR(d(i, j), 2.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a)), 1e-12);
    }
}

TEST(DistanceMatrix, ParallelMatchesReferenceBitwise) {
  const auto ll = to_latlon(fibonacci_sample(300));
  EXPECT_EQ(distance_matrix(ll), reference::distance_matrix(ll));
}

TEST(DistanceMatrix, SymmetricWithZeroDiagonal) {
  const Tensor d = distance_matrix(fibonacci_sample(57));
  for (std::size_t i = 0; i < 57; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < 57; ++j) EXPECT_EQ(d(i, j), d(j, i));
  }
}

TEST(DistanceMatrix, NeedsTwoPoints) {
  EXPECT_THROW(distance_matrix(std::vector<LatLon>{{0, 0}}), ShapeError);
}

TEST(Knn, EquidistantTieBreaksByIndex) {
  const std::vector<LatLon> tri{{0, 0}, {0, 2 * kPi / 3}, {0, -2 * kPi / 3}};
  const Tensor d = Tensor::matrix(3, 3, {0, 1, 1, 1, 0, 1, 1, 1, 0});
  EXPECT_EQ(knn(d, 1)[0], std::vector<std::size_t>{1});
  EXPECT_EQ(knn(distance_matrix(tri), 2)[0], (std::vector<std::size_t>{1, 2}));
}

TEST(Knn, NearestByInspection) {
  const auto nb = knn(distance_matrix(std::vector<LatLon>{{0, 0}, {0, 0.1}, {0, 3.0}}), 1);
  EXPECT_EQ(nb[0], std::vector<std::size_t>{1});
  EXPECT_EQ(nb[2], std::vector<std::size_t>{1});
}

TEST(Knn, FibonacciTwentyTable) {
  EXPECT_EQ(knn(distance_matrix(fibonacci_sample(20)), 5), kFib20Neighbors);
}

TEST(Knn, RejectsBadK) {
  const Tensor d = distance_matrix(fibonacci_sample(4));
  EXPECT_THROW(knn(d, 0), ConfigError);
  EXPECT_THROW(knn(d, 4), ConfigError);
}

TEST(BuildGraph, TwoNodes) {
  const ViewportGraph g = build_graph(std::vector<LatLon>{{0, 0}, {0, 1}}, 1);
  EXPECT_EQ(g.edges, (std::vector<Edge>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(BuildGraph, ThreeEquidistantIsComplete) {
  const std::vector<LatLon> tri{{0, 0}, {0, 2 * kPi / 3}, {0, -2 * kPi / 3}};
  EXPECT_EQ(build_graph(tri, 2).edges.size(), 9u);
}

TEST(BuildGraph, FibonacciTwentyMatchesBruteForce) {
  const ViewportGraph g = build_graph(fibonacci_sample(20), 5);
  std::set<Edge> oracle;
  for (std::size_t i = 0; i < 20; ++i) {
    oracle.insert({i, i});
    for (std::size_t j : kFib20Neighbors[i]) {
      oracle.insert({i, j});
      oracle.insert({j, i});
    }
  }
  EXPECT_EQ(g.edges, std::vector<Edge>(oracle.begin(), oracle.end()));
  EXPECT_EQ(g.edges.size(), 120u);
  EXPECT_GE(g.edges.size(), 20u * 6);
  EXPECT_LE(g.edges.size(), 20u * 11);
  for (std::size_t deg : g.in_degrees()) EXPECT_GE(deg, 6u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_TRUE(std::binary_search(g.edges.begin(), g.edges.end(), Edge{i, i}));
}

TEST(BuildGraph, IncomingMaskMatchesEdges) {
  const ViewportGraph g = build_graph(fibonacci_sample(9), 2);
  const auto mask = g.incoming_mask();
  std::size_t ones = 0;
  for (auto m : mask) ones += m;
  EXPECT_EQ(ones, g.edges.size());
  for (const auto& [src, dst] : g.edges) EXPECT_EQ(mask[dst * 9 + src], 1);
}

TEST(BuildGraph, InvariantUnderPermutation) {
  std::mt19937_64 rng(4);
  std::vector<LatLon> pts;
  for (int i = 0; i < 15; ++i) pts.push_back(random_point(rng));
  std::vector<std::size_t> perm(15);
  for (std::size_t i = 0; i < 15; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<LatLon> shuffled(15);
  for (std::size_t i = 0; i < 15; ++i) shuffled[i] = pts[perm[i]];  // new i is old perm[i]

  const ViewportGraph a = build_graph(pts, 4), b = build_graph(shuffled, 4);
  std::set<Edge> relabeled;
  for (const auto& [s, d] : b.edges) relabeled.insert({perm[s], perm[d]});
  EXPECT_EQ(std::vector<Edge>(relabeled.begin(), relabeled.end()), a.edges);
}

}  // namespace
}  // namespace oiqa
