#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation of one forward pass. Each recorded node owns
// its value and, once backward() runs, its adjoint. Nodes that do not depend
// on any trainable leaf carry no backward closure.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "oiqa/kernels.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);

  /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Tensor& grad_slot(std::size_t id);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise and structural ops --------------------------------------

Var add(Var a, Var b);
/// a [R x C] + row vector b [1 x C] broadcast over rows.
Var add_row(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var gelu(Var a);
Var sigmoid(Var a);
Var square(Var a);

Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);

Var slice_cols(Var a, std::size_t first, std::size_t count);
Var slice_rows(Var a, std::size_t first, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Row-wise layer normalization with learnable scale/shift of shape [1 x C].
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);

/// L[i][j] = a[i] + b[j] for column vectors a, b of length V.
Var outer_sum(Var a, Var b);

/// Row softmax. When `mask` is non-empty (row-major V x V, 1 = keep) masked
/// entries are exactly zero and excluded from normalization.
Var softmax_rows(Var logits, std::span<const std::uint8_t> mask = {});

Var mean_rows(Var x);
Var sum_all(Var x);

// ---- feature-map ops ([C x H x W]) -------------------------------------

Var conv2d(Var x, Var w, Var bias, kernels::Conv2dGeometry g);
/// Global average pooling over the spatial axes, result [1 x C].
Var global_avg_pool(Var x);
/// Multiplies channel c of x by gate[0][c]; gate is [1 x C].
Var scale_channels(Var x, Var gate);
/// Multiplies every channel of x by the single-channel map gate [1 x H x W].
Var scale_spatial(Var x, Var gate);
/// Per-pixel mean and max over channels stacked as a [2 x H x W] map.
Var channel_mean_max(Var x);

/// 1/2 (cos(h_i, h_j) + 1) for j in neighbors[i], 0 elsewhere. Rows with zero
/// norm produce zero similarity and zero gradient.
Var cosine_neighbor_bias(Var x, std::span<const std::vector<std::size_t>> neighbors);

double gelu_value(double x);

}  // namespace oiqa::ad
