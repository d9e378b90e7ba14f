#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oiqa/error.hpp"
#include "oiqa/gradcheck.hpp"
#include "oiqa/graph_transformer.hpp"
#include "test_support.hpp"

namespace oiqa {
namespace {

using testing::random_tensor;
constexpr double kPi = std::numbers::pi;

ModelParams encoder_params(const EncoderDims& dims, std::size_t layers, std::uint64_t seed) {
  ParamSpecs specs;
  declare_encoder_params(specs, layers, dims);
  std::mt19937_64 rng(seed);
  return testing::random_params(specs, rng, 0.6);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// x * W + b with W [in x out], b [1 x out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = Tensor::matrix(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double s = b[o];
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, o);
      y(i, o) = s;
    }
  return y;
}

Tensor scalar_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor y = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mean += x(i, c) / static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) var += (x(i, c) - mean) * (x(i, c) - mean) / static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) y(i, c) = (x(i, c) - mean) / std::sqrt(var + eps) * gamma[c] + beta[c];
  }
  return y;
}

Tensor scalar_attention(const Tensor& x, const Tensor& bias, const ModelParams& p, const std::string& pre,
                        std::size_t heads) {
  const Tensor q = affine(x, p.at(pre + ".q.weight"), p.at(pre + ".q.bias"));
  const Tensor k = affine(x, p.at(pre + ".k.weight"), p.at(pre + ".k.bias"));
  const Tensor v = affine(x, p.at(pre + ".v.weight"), p.at(pre + ".v.bias"));
  const std::size_t n = x.rows(), c = x.cols(), d = c / heads;
  Tensor cat = Tensor::matrix(n, c);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -INFINITY, sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += q(i, h * d + t) * k(j, h * d + t);
        s[j] = dot / std::sqrt(static_cast<double>(d)) + bias(i, j);
        mx = std::max(mx, s[j]);
      }
      for (double& e : s) sum += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < d; ++t) cat(i, h * d + t) += s[j] / sum * v(j, h * d + t);
    }
  return affine(cat, p.at(pre + ".o.weight"), p.at(pre + ".o.bias"));
}

TEST(DistanceBias, ConstantMatrixGivesOnes) {
  const Tensor b = distance_bias(Tensor::matrix(4, 4, 0.7));
  for (double v : b.data()) EXPECT_EQ(v, 1.0);
}

TEST(DistanceBias, Endpoints) {
  const Tensor d = Tensor::matrix(2, 2, {0.0, 2.0, 2.0, 0.5});
  const Tensor b = distance_bias(d);
  EXPECT_EQ(b(0, 0), 1.0);
  EXPECT_NEAR(b(0, 1), 1e-8 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(b(0, 1), 0.0, 1e-8);
}

TEST(DistanceBias, EquatorTriple) {
  const Tensor d = distance_matrix(std::vector<LatLon>{{0, 0}, {0, kPi / 2}, {0, kPi}});
  const Tensor b = distance_bias(d);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(b(i, j), 1.0 - d(i, j) / (kPi + 1e-8), 1e-12);
  EXPECT_NEAR(b(0, 1), 1.0 - (kPi / 2) / (kPi + 1e-8), 1e-12);
}

TEST(DistanceBias, SymmetricAndInUnitRange) {
  const Tensor b = distance_bias(distance_matrix(fibonacci_sample(20)));
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) {
      EXPECT_EQ(b(i, j), b(j, i));
      EXPECT_GE(b(i, j), 0.0);
      EXPECT_LE(b(i, j), 1.0);
    }
}

TEST(AdjacencyBias, UnitCases) {
  const NeighborLists nb{{1, 2}, {0}, {0}};
  const Tensor x = Tensor::matrix(3, 3, {1, 2, 0, 1, 2, 0, -2, 1, 5});
  const Tensor b = adjacency_bias(x, nb);
  EXPECT_NEAR(b(0, 1), 1.0, 1e-12);
  EXPECT_EQ(b(0, 2), 0.5);
  EXPECT_EQ(b(1, 2), 0.0);
  EXPECT_EQ(b(2, 1), 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b(i, i), 0.0);
}

TEST(AdjacencyBias, SupportEqualsKnnRelation) {
  const auto pts = fibonacci_sample(20);
  const NeighborLists nb = knn(distance_matrix(pts), 5);
  std::mt19937_64 rng(1);
  const Tensor b = adjacency_bias(random_tensor({20, 16}, rng), nb);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) {
      const bool neighbor = std::find(nb[i].begin(), nb[i].end(), j) != nb[i].end();
      EXPECT_EQ(b(i, j) > 0.0, neighbor);
      EXPECT_LE(b(i, j), 1.0);
    }
}

TEST(AdjacencyBias, ZeroRowsGiveZero) {
  const Tensor x = Tensor::matrix(2, 2, {0, 0, 1, 1});
  const Tensor b = adjacency_bias(x, {{1}, {0}});
  EXPECT_EQ(b(0, 1), 0.0);
  EXPECT_EQ(b(1, 0), 0.0);
}

TEST(BiasedAttention, SingleNode) {
  const EncoderDims dims{4, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 2);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 4}, rng);
  std::vector<Tensor> w;
  const Tensor out = biased_attention(x, Tensor::matrix(1, 1, 1.0), Tensor::matrix(1, 1), p, "transformer.0", dims, &w);
  for (const Tensor& a : w) EXPECT_EQ(a(0, 0), 1.0);
  const Tensor expect = affine(affine(x, p.at("transformer.0.v.weight"), p.at("transformer.0.v.bias")),
                               p.at("transformer.0.o.weight"), p.at("transformer.0.o.bias"));
  EXPECT_LT(testing::max_abs_diff(out, expect), 1e-14);
}

TEST(BiasedAttention, ZeroQueryKeyGivesUniformWeights) {
  const EncoderDims dims{6, 3, 4, 1e-5};
  ModelParams p = encoder_params(dims, 1, 4);
  for (const char* n : {"q.weight", "q.bias", "k.weight", "k.bias"}) p["transformer.0." + std::string(n)].fill(0.0);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({5, 6}, rng);
  std::vector<Tensor> w;
  const Tensor zero = Tensor::matrix(5, 5);
  const Tensor out = biased_attention(x, zero, zero, p, "transformer.0", dims, &w);
  for (const Tensor& a : w)
    for (double v : a.data()) EXPECT_NEAR(v, 0.2, 1e-15);
  const Tensor v = affine(x, p.at("transformer.0.v.weight"), p.at("transformer.0.v.bias"));
  Tensor mean = Tensor::matrix(1, 6);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) mean(0, c) += v(i, c) / 5.0;
  const Tensor expect = affine(mean, p.at("transformer.0.o.weight"), p.at("transformer.0.o.bias"));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out(i, c), expect(0, c), 1e-13);
}

TEST(BiasedAttention, MatchesScalarLoopOnThreeNodes) {
  const EncoderDims dims{4, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 6);
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 4}, rng, -2, 2);
  const Tensor bd = random_tensor({3, 3}, rng, 0, 1), ba = random_tensor({3, 3}, rng, 0, 1);
  Tensor both = bd;
  both += ba;
  const Tensor out = biased_attention(x, bd, ba, p, "transformer.0", dims);
  EXPECT_LT(testing::max_abs_diff(out, scalar_attention(x, both, p, "transformer.0", 2)), 1e-10);
}

TEST(BiasedAttention, RowsNormalizeAndStayPositive) {
  const EncoderDims dims{12, 4, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 8);
  const auto pts = fibonacci_sample(20);
  const Tensor d = distance_matrix(pts);
  const NeighborLists nb = knn(d, 5);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({20, 12}, rng, -3, 3);
    std::vector<Tensor> w;
    biased_attention(x, distance_bias(d), adjacency_bias(x, nb), p, "transformer.0", dims, &w);
    for (const Tensor& a : w)
      for (std::size_t i = 0; i < 20; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 20; ++j) {
          EXPECT_GT(a(i, j), 0.0);
          s += a(i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(BiasedAttention, ShiftingDistanceBiasLeavesWeightsUnchanged) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 10);
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({7, 8}, rng);
  const Tensor bd = random_tensor({7, 7}, rng, 0, 1), ba = random_tensor({7, 7}, rng, 0, 1);
  Tensor shifted = bd;
  for (double& v : shifted.data()) v += 3.7;
  std::vector<Tensor> a, b;
  biased_attention(x, bd, ba, p, "transformer.0", dims, &a);
  biased_attention(x, shifted, ba, p, "transformer.0", dims, &b);
  for (std::size_t h = 0; h < 2; ++h) EXPECT_LT(testing::max_abs_diff(a[h], b[h]), 1e-9);
}

TEST(BiasedAttention, RejectsBadShapes) {
  const EncoderDims dims{4, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 12);
  EXPECT_THROW(biased_attention(Tensor::matrix(3, 5), Tensor::matrix(3, 3), Tensor::matrix(3, 3), p, "transformer.0", dims),
               ShapeError);
  EXPECT_THROW(biased_attention(Tensor::matrix(3, 4), Tensor::matrix(2, 2), Tensor::matrix(3, 3), p, "transformer.0", dims),
               ShapeError);
  ParamSpecs specs;
  EXPECT_THROW(declare_encoder_params(specs, 1, EncoderDims{6, 4, 4, 1e-5}), ConfigError);
}

TEST(EncoderLayer, ZeroOutputProjectionsAreIdentity) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  ModelParams p = encoder_params(dims, 1, 13);
  for (const char* n : {"o.weight", "o.bias", "ffn.fc2.weight", "ffn.fc2.bias"}) p["transformer.0." + std::string(n)].fill(0.0);
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({6, 8}, rng);
  const Tensor b = random_tensor({6, 6}, rng, 0, 1);
  EXPECT_EQ(encoder_layer(x, b, b, p, "transformer.0", dims), x);
}

TEST(EncoderLayer, ZeroInputStaysFinite) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 1, 15);
  const Tensor out = encoder_layer(Tensor::matrix(5, 8), Tensor::matrix(5, 5), Tensor::matrix(5, 5), p, "transformer.0", dims);
  EXPECT_TRUE(out.all_finite());
}

TEST(EncoderLayer, MatchesComposition) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  ModelParams p = encoder_params(dims, 1, 16);
  std::mt19937_64 rng(17);
  for (const char* ln : {"ln1", "ln2"}) {
    p["transformer.0." + std::string(ln) + ".gamma"] = random_tensor({1, 8}, rng, 0.5, 1.5);
  }
  const Tensor x = random_tensor({5, 8}, rng, -2, 2);
  const Tensor bd = random_tensor({5, 5}, rng, 0, 1), ba = random_tensor({5, 5}, rng, 0, 1);
  Tensor both = bd;
  both += ba;
  const std::string pre = "transformer.0";
  Tensor x1 = x;
  x1 += scalar_attention(scalar_layer_norm(x, p[pre + ".ln1.gamma"], p[pre + ".ln1.beta"], 1e-5), both, p, pre, 2);
  Tensor hidden = affine(scalar_layer_norm(x1, p[pre + ".ln2.gamma"], p[pre + ".ln2.beta"], 1e-5),
                         p[pre + ".ffn.fc1.weight"], p[pre + ".ffn.fc1.bias"]);
  EXPECT_EQ(hidden.cols(), 32u);
  for (double& v : hidden.data()) v = gelu(v);
  Tensor expect = x1;
  expect += affine(hidden, p[pre + ".ffn.fc2.weight"], p[pre + ".ffn.fc2.bias"]);
  EXPECT_LT(testing::max_abs_diff(encoder_layer(x, bd, ba, p, pre, dims), expect), 1e-10);
}

TEST(GraphormerForward, BiasesBuiltOnceFromInput) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  const ModelParams p = encoder_params(dims, 2, 18);
  const auto pts = fibonacci_sample(9);
  const Tensor d = distance_matrix(pts);
  const NeighborLists nb = knn(d, 3);
  std::mt19937_64 rng(19);
  const Tensor x = random_tensor({9, 8}, rng);
  const Tensor bd = distance_bias(d), ba = adjacency_bias(x, nb);
  const Tensor expect = encoder_layer(encoder_layer(x, bd, ba, p, "transformer.0", dims), bd, ba, p, "transformer.1", dims);
  EXPECT_EQ(graphormer_forward(x, d, nb, p, 2, dims), expect);
}

TEST(GraphormerForward, GradientsMatchFiniteDifferences) {
  const EncoderDims dims{8, 2, 4, 1e-5};
  std::mt19937_64 rng(20);
  ModelParams p = encoder_params(dims, 1, 21);
  p["input"] = random_tensor({5, 8}, rng);
  const auto pts = fibonacci_sample(5);
  const Tensor d = distance_matrix(pts);
  const NeighborLists nb = knn(d, 2);
  const Tensor target = random_tensor({5, 8}, rng);
  auto run = [&](const ModelParams& params, ModelParams* grads) {
    ad::Tape tape;
    BoundParams bound(tape, params, grads != nullptr);
    ad::Var out = graphormer_forward(bound, bound("input"), d, nb, 1, dims);
    ad::Var loss = ad::sum_all(ad::square(ad::sub(out, tape.constant(target))));
    if (grads) {
      tape.backward(loss);
      *grads = bound.gradients();
    }
    return loss.value()[0];
  };
  ModelParams analytic;
  run(p, &analytic);
  const auto report = check_gradients([&](const ModelParams& q) { return run(q, nullptr); }, p, analytic);
  EXPECT_EQ(report.tensors.size(), p.size());
  for (const auto& t : report.tensors) EXPECT_LT(t.max_rel_error, 1e-3) << t.name;
}

}  // namespace
}  // namespace oiqa
