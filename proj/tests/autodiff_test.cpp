#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oiqa/autodiff.hpp"
#include "oiqa/error.hpp"
#include "test_support.hpp"

namespace oiqa {
namespace {

using testing::random_tensor;
using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Scalar loss sum((f(x) + r)^2) so that every output entry has a distinct,
// non-trivial adjoint.
double scalar_loss(const Builder& f, const std::vector<Tensor>& inputs, const Tensor& offset,
                   std::vector<Tensor>* grads) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  ad::Var out = f(tape, leaves);
  ad::Var loss = ad::sum_all(ad::square(ad::add(out, tape.constant(offset))));
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (ad::Var v : leaves) grads->push_back(v.grad());
  }
  return loss.value()[0];
}

void expect_gradients(const Builder& f, std::vector<Tensor> inputs, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  Tensor probe;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.constant(t));
    probe = f(tape, leaves).value();
  }
  const Tensor offset = random_tensor(probe.shape(), rng);
  std::vector<Tensor> grads;
  scalar_loss(f, inputs, offset, &grads);
  const double h = 1e-6;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double keep = inputs[t][i];
      inputs[t][i] = keep + h;
      const double up = scalar_loss(f, inputs, offset, nullptr);
      inputs[t][i] = keep - h;
      const double down = scalar_loss(f, inputs, offset, nullptr);
      inputs[t][i] = keep;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(grads[t][i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)))
          << "input " << t << " entry " << i;
    }
  }
}

TEST(Tape, BackwardRequiresScalarRoot) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor::matrix(2, 2, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, ConstantsCarryNoGradient) {
  ad::Tape tape;
  ad::Var c = tape.constant(Tensor::matrix(1, 1, 2.0));
  ad::Var x = tape.leaf(Tensor::matrix(1, 1, 3.0));
  ad::Var y = ad::sum_all(ad::square(ad::add(c, x)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 10.0);
}

TEST(Tape, SharedInputAccumulatesGradient) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor::matrix(1, 1, 3.0));
  ad::Var y = ad::sum_all(ad::add(ad::square(x), ad::scale(x, 4.0)));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 10.0);
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  expect_gradients([](ad::Tape&, const auto& v) { return ad::add(v[0], v[1]); }, {a, b});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::sub(v[0], v[1]); }, {a, b});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::scale(v[0], -1.5); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::relu(v[0]); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::leaky_relu(v[0], 0.2); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::gelu(v[0]); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::sigmoid(v[0]); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::square(v[0]); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::add_row(v[0], v[1]); },
                   {a, random_tensor({1, 4}, rng)});
}

TEST(Ops, MatmulGradientsAllTransposes) {
  std::mt19937_64 rng(2);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const Tensor a = ta ? random_tensor({4, 3}, rng) : random_tensor({3, 4}, rng);
      const Tensor b = tb ? random_tensor({2, 4}, rng) : random_tensor({4, 2}, rng);
      expect_gradients([ta, tb](ad::Tape&, const auto& v) { return ad::matmul(v[0], v[1], ta, tb); },
                       {a, b});
    }
}

TEST(Ops, StructuralGradients) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({4, 5}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({3, 5}, rng);
  expect_gradients([](ad::Tape&, const auto& v) { return ad::slice_cols(v[0], 1, 3); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::slice_rows(v[0], 2, 2); }, {a});
  expect_gradients(
      [](ad::Tape&, const auto& v) {
        const ad::Var parts[] = {v[0], v[1]};
        return ad::concat_cols(parts);
      },
      {a, b});
  expect_gradients(
      [](ad::Tape&, const auto& v) {
        const ad::Var parts[] = {v[0], v[1]};
        return ad::concat_rows(parts);
      },
      {a, c});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::mean_rows(v[0]); }, {a});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::outer_sum(v[0], v[1]); },
                   {random_tensor({4, 1}, rng), random_tensor({4, 1}, rng)});
}

TEST(Ops, LayerNormGradients) {
  std::mt19937_64 rng(4);
  expect_gradients([](ad::Tape&, const auto& v) { return ad::layer_norm_rows(v[0], v[1], v[2], 1e-5); },
                   {random_tensor({3, 6}, rng), random_tensor({1, 6}, rng), random_tensor({1, 6}, rng)});
}

TEST(Ops, LayerNormNormalizesRows) {
  std::mt19937_64 rng(5);
  ad::Tape tape;
  const Tensor x = random_tensor({4, 16}, rng, -3.0, 5.0);
  const Tensor y = ad::layer_norm_rows(tape.constant(x), tape.constant(Tensor::matrix(1, 16, 1.0)),
                                       tape.constant(Tensor::matrix(1, 16, 0.0)), 0.0)
                       .value();
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, sq = 0.0;
    for (double v : y.row(r)) mean += v;
    mean /= 16;
    for (double v : y.row(r)) sq += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 16, 1.0, 1e-12);
  }
}

TEST(Ops, SoftmaxGradientsWithAndWithoutMask) {
  std::mt19937_64 rng(6);
  const Tensor z = random_tensor({3, 3}, rng, -2.0, 2.0);
  expect_gradients([](ad::Tape&, const auto& v) { return ad::softmax_rows(v[0]); }, {z});
  static const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0, 0, 0, 1};
  expect_gradients([](ad::Tape&, const auto& v) { return ad::softmax_rows(v[0], mask); }, {z});
}

TEST(Ops, MaskedSoftmaxZerosAndNormalizes) {
  ad::Tape tape;
  const std::vector<std::uint8_t> mask{1, 0, 1, 0, 1, 0, 1, 1, 1};
  const Tensor p = ad::softmax_rows(tape.constant(Tensor::matrix(3, 3, {5, 900, 1, -2, 3, 7, 0, 0, 0})), mask)
                       .value();
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(1, 0), 0.0);
  EXPECT_EQ(p(1, 2), 0.0);
  EXPECT_EQ(p(1, 1), 1.0);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(p(r, 0) + p(r, 1) + p(r, 2), 1.0, 1e-15);
  EXPECT_NEAR(p(2, 0), 1.0 / 3.0, 1e-15);
}

TEST(Ops, SoftmaxRowWithoutEntriesThrows) {
  ad::Tape tape;
  const std::vector<std::uint8_t> mask{1, 1, 0, 0};
  EXPECT_THROW(ad::softmax_rows(tape.constant(Tensor::matrix(2, 2)), mask), DomainError);
}

TEST(Ops, SoftmaxIsStableForLargeLogits) {
  ad::Tape tape;
  const Tensor p = ad::softmax_rows(tape.constant(Tensor::matrix(1, 2, {1000.0, 1000.0}))).value();
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
}

TEST(Ops, FeatureMapGradients) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 4, 5}, rng);
  expect_gradients(
      [](ad::Tape&, const auto& v) { return ad::conv2d(v[0], v[1], v[2], {1, 1}); },
      {x, random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng)});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::global_avg_pool(v[0]); }, {x});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::scale_channels(v[0], v[1]); },
                   {x, random_tensor({1, 3}, rng)});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::scale_spatial(v[0], v[1]); },
                   {x, random_tensor({1, 4, 5}, rng)});
  expect_gradients([](ad::Tape&, const auto& v) { return ad::channel_mean_max(v[0]); }, {x});
}

TEST(Ops, ChannelMeanMaxValues) {
  ad::Tape tape;
  Tensor x({2, 1, 2});
  x(0, 0, 0) = 1.0;
  x(1, 0, 0) = 3.0;
  x(0, 0, 1) = -4.0;
  x(1, 0, 1) = -6.0;
  const Tensor y = ad::channel_mean_max(tape.constant(x)).value();
  EXPECT_EQ(y(0, 0, 0), 2.0);
  EXPECT_EQ(y(1, 0, 0), 3.0);
  EXPECT_EQ(y(0, 0, 1), -5.0);
  EXPECT_EQ(y(1, 0, 1), -4.0);
}

TEST(Ops, CosineNeighborBiasGradients) {
  std::mt19937_64 rng(8);
  static const std::vector<std::vector<std::size_t>> nb{{1, 2}, {0}, {1, 3}, {2}};
  expect_gradients([](ad::Tape&, const auto& v) { return ad::cosine_neighbor_bias(v[0], nb); },
                   {random_tensor({4, 5}, rng)});
}

TEST(Ops, GeluIsExactErfForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    EXPECT_DOUBLE_EQ(ad::gelu_value(x), 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))));
  }
}

TEST(Ops, ShapeMismatchesThrow) {
  ad::Tape tape;
  ad::Var a = tape.constant(Tensor::matrix(2, 3));
  ad::Var b = tape.constant(Tensor::matrix(3, 2));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::add_row(a, tape.constant(Tensor::matrix(1, 2))), ShapeError);
  EXPECT_THROW(ad::slice_cols(a, 2, 2), ShapeError);
  EXPECT_THROW(ad::layer_norm_rows(a, b, b, 1e-5), ShapeError);
}

}  // namespace
}  // namespace oiqa
