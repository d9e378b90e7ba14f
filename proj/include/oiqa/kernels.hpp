#pragma once

// Dense compute kernels used by the differentiable layers.
//
// Every kernel exists twice: the OpenMP version in `oiqa::kernels` used by the
// model, and a plain serial version in `oiqa::kernels::reference` kept for
// testing and benchmarking. Both accumulate each output element in the same
// order, so results are bitwise identical for any thread count.

#include <cstddef>

#include "oiqa/tensor.hpp"

namespace oiqa::kernels {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// C = op(A) * op(B) with op = transpose when the flag is set. Rank-2 only.
Tensor gemm(const Tensor& a, const Tensor& b, bool transpose_a = false,
            bool transpose_b = false);

/// x: [Cin, H, W], w: [Cout, Cin, Kh, Kw], bias: [Cout] (may be empty).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dGeometry g);
Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, const Tensor::Shape& x_shape,
                         Conv2dGeometry g);
Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, const Tensor::Shape& w_shape,
                          Conv2dGeometry g);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dGeometry g);

/// Caps the worker count used by the parallel kernels (0 = runtime default).
void set_num_threads(int n);
int num_threads();

namespace reference {

Tensor gemm(const Tensor& a, const Tensor& b, bool transpose_a = false,
            bool transpose_b = false);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dGeometry g);
Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, const Tensor::Shape& x_shape,
                         Conv2dGeometry g);
Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, const Tensor::Shape& w_shape,
                          Conv2dGeometry g);

}  // namespace reference
}  // namespace oiqa::kernels
