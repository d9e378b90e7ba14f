#include "oiqa/kernels.hpp"

#include <omp.h>

#include "oiqa/error.hpp"

namespace oiqa::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 14;

struct GemmDims {
  std::size_t m, n, k;
};

GemmDims gemm_dims(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("gemm expects rank-2 operands");
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t ka = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (ka != kb) {
    throw ShapeError("gemm inner dimensions differ: " + shape_string(a.shape()) +
                     (ta ? "^T" : "") + " * " + shape_string(b.shape()) + (tb ? "^T" : ""));
  }
  return {m, n, ka};
}

struct ConvDims {
  std::size_t cin, h, w, cout, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor::Shape& xs, const Tensor::Shape& ws, Conv2dGeometry g) {
  if (xs.size() != 3 || ws.size() != 4) throw ShapeError("conv2d expects [C,H,W] and [O,C,Kh,Kw]");
  if (xs[0] != ws[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(xs) + " weight " +
                     shape_string(ws));
  }
  if (g.stride == 0) throw ConfigError("conv2d stride must be positive");
  ConvDims d{xs[0], xs[1], xs[2], ws[0], ws[2], ws[3], 0, 0};
  d.oh = conv_output_size(d.h, d.kh, g);
  d.ow = conv_output_size(d.w, d.kw, g);
  return d;
}

// Input coordinate for output index o and kernel tap t, or -1 when it falls in padding.
inline long tap(std::size_t o, std::size_t t, Conv2dGeometry g, std::size_t extent) {
  const long i = static_cast<long>(o * g.stride + t) - static_cast<long>(g.pad);
  return (i < 0 || i >= static_cast<long>(extent)) ? -1 : i;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dGeometry g) {
  if (in + 2 * g.pad < kernel) {
    throw ShapeError("conv2d kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * g.pad));
  }
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

Tensor gemm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const auto [m, n, k] = gemm_dims(a, b, ta, tb);
  Tensor c = Tensor::matrix(m, n);
  const std::size_t lda = a.cols(), ldb = b.cols();
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();

#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    if (!tb) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = ta ? A[p * lda + i] : A[i * lda + p];
        const double* brow = B + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = B + j * ldb;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += (ta ? A[p * lda + i] : A[i * lda + p]) * brow[p];
        crow[j] = s;
      }
    }
  }
  return c;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dGeometry g) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), g);
  if (!bias.empty() && bias.size() != d.cout) throw ShapeError("conv2d bias size mismatch");
  Tensor y({d.cout, d.oh, d.ow});

#pragma omp parallel for schedule(static) if (d.cout * d.oh * d.ow * d.cin * d.kh * d.kw > kParallelWork)
  for (std::size_t co = 0; co < d.cout; ++co) {
    double* out = &y(co, 0, 0);
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          const double wv = w[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            const long iy = tap(oy, ky, g, d.h);
            if (iy < 0) continue;
            const double* in = &x(ci, static_cast<std::size_t>(iy), 0);
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long ix = tap(ox, kx, g, d.w);
              if (ix < 0) continue;
              out[oy * d.ow + ox] += wv * in[ix];
            }
          }
        }
      }
    }
    if (!bias.empty()) {
      for (std::size_t i = 0; i < d.oh * d.ow; ++i) out[i] += bias[co];
    }
  }
  return y;
}

Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, const Tensor::Shape& x_shape,
                         Conv2dGeometry g) {
  const ConvDims d = conv_dims(x_shape, w.shape(), g);
  Tensor dx(x_shape);

#pragma omp parallel for schedule(static) if (d.cout * d.oh * d.ow * d.cin * d.kh * d.kw > kParallelWork)
  for (std::size_t ci = 0; ci < d.cin; ++ci) {
    for (std::size_t co = 0; co < d.cout; ++co) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          const double wv = w[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            const long iy = tap(oy, ky, g, d.h);
            if (iy < 0) continue;
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long ix = tap(ox, kx, g, d.w);
              if (ix < 0) continue;
              dx(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                  wv * dy(co, oy, ox);
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, const Tensor::Shape& w_shape,
                          Conv2dGeometry g) {
  const ConvDims d = conv_dims(x.shape(), w_shape, g);
  Tensor dw(w_shape);

#pragma omp parallel for schedule(static) if (d.cout * d.oh * d.ow * d.cin * d.kh * d.kw > kParallelWork)
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          double s = 0.0;
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            const long iy = tap(oy, ky, g, d.h);
            if (iy < 0) continue;
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long ix = tap(ox, kx, g, d.w);
              if (ix < 0) continue;
              s += dy(co, oy, ox) * x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
          dw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] = s;
        }
      }
    }
  }
  return dw;
}

namespace reference {

Tensor gemm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const auto [m, n, k] = gemm_dims(a, b, ta, tb);
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a(p, i) : a(i, p);
        const double bv = tb ? b(j, p) : b(p, j);
        s += av * bv;
      }
      c(i, j) = s;
    }
  }
  return c;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dGeometry g) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), g);
  Tensor y({d.cout, d.oh, d.ow});
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
      for (std::size_t ox = 0; ox < d.ow; ++ox) {
        double s = 0.0;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const long iy = tap(oy, ky, g, d.h), ix = tap(ox, kx, g, d.w);
              if (iy < 0 || ix < 0) continue;
              s += w[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] *
                   x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        y(co, oy, ox) = bias.empty() ? s : s + bias[co];
      }
    }
  }
  return y;
}

Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, const Tensor::Shape& x_shape,
                         Conv2dGeometry g) {
  const ConvDims d = conv_dims(x_shape, w.shape(), g);
  Tensor dx(x_shape);
  for (std::size_t ci = 0; ci < d.cin; ++ci) {
    for (std::size_t iy = 0; iy < d.h; ++iy) {
      for (std::size_t ix = 0; ix < d.w; ++ix) {
        double s = 0.0;
        for (std::size_t co = 0; co < d.cout; ++co) {
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const long ny = static_cast<long>(iy + g.pad) - static_cast<long>(ky);
              const long nx = static_cast<long>(ix + g.pad) - static_cast<long>(kx);
              if (ny < 0 || nx < 0 || ny % static_cast<long>(g.stride) != 0 ||
                  nx % static_cast<long>(g.stride) != 0) {
                continue;
              }
              const auto oy = static_cast<std::size_t>(ny) / g.stride;
              const auto ox = static_cast<std::size_t>(nx) / g.stride;
              if (oy >= d.oh || ox >= d.ow) continue;
              s += w[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] * dy(co, oy, ox);
            }
          }
        }
        dx(ci, iy, ix) = s;
      }
    }
  }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, const Tensor::Shape& w_shape,
                          Conv2dGeometry g) {
  const ConvDims d = conv_dims(x.shape(), w_shape, g);
  Tensor dw(w_shape);
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          double s = 0.0;
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
              const long iy = tap(oy, ky, g, d.h), ix = tap(ox, kx, g, d.w);
              if (iy < 0 || ix < 0) continue;
              s += dy(co, oy, ox) * x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
          dw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] = s;
        }
      }
    }
  }
  return dw;
}

}  // namespace reference
}  // namespace oiqa::kernels
