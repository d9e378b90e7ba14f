#include "oiqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oiqa/error.hpp"

namespace oiqa::ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

// Adds g into the adjoint of v when v participates in differentiation.
void accumulate(Tape& tape, Var v, const Tensor& g) {
  if (tape.requires_grad(v)) tape.grad_slot(v.id) += g;
}

template <class Fn>
Var unary(Var a, Fn&& value_fn, auto&& deriv_fn) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = value_fn(x[i]);
  return tape.record(std::move(y), {a}, [a, deriv_fn](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(Var{&t, self});
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv_fn(x[i], y[i]);
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](Var v) { return nodes_[v.id].requires_grad; });
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  static const Tensor kEmpty;
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? kEmpty : n.grad;
}

void Tape::backward(Var root) {
  if (nodes_[root.id].value.size() != 1) {
    throw ShapeError("backward root must hold a single element, got " +
                     shape_string(nodes_[root.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor{};
  grad_slot(root.id).fill(1.0);
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

// ---- elementwise ---------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y += b.value();
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.out_grad(self));
    accumulate(t, b, t.out_grad(self));
  });
}

Var add_row(Var a, Var b) {
  const Tensor& x = a.value();
  require_rank(x, 2, "add_row");
  if (b.value().size() != x.cols()) {
    throw ShapeError("add_row: bias " + shape_string(b.value().shape()) + " for " +
                     shape_string(x.shape()));
  }
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b.value()[c];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    accumulate(t, a, g);
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b.id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Var gelu(Var a) {
  return unary(a, gelu_value, [](double x, double) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
  });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- linear algebra ------------------------------------------------------

Var matmul(Var a, Var b, bool ta, bool tb) {
  Tensor y = kernels::gemm(a.value(), b.value(), ta, tb);
  return a.tape->record(std::move(y), {a, b}, [a, b, ta, tb](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      t.grad_slot(a.id) += ta ? kernels::gemm(bv, g, tb, true) : kernels::gemm(g, bv, false, !tb);
    }
    if (t.requires_grad(b)) {
      t.grad_slot(b.id) += tb ? kernels::gemm(g, av, true, ta) : kernels::gemm(av, g, !ta, false);
    }
  });
}

Var slice_cols(Var a, std::size_t first, std::size_t count) {
  const Tensor& x = a.value();
  require_rank(x, 2, "slice_cols");
  if (first + count > x.cols()) throw ShapeError("slice_cols out of range");
  Tensor y = Tensor::matrix(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = x(r, first + c);
  return a.tape->record(std::move(y), {a}, [a, first](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, first + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t first, std::size_t count) {
  const Tensor& x = a.value();
  require_rank(x, 2, "slice_rows");
  if (first + count > x.rows()) throw ShapeError("slice_rows out of range");
  Tensor y = Tensor::matrix(count, x.cols());
  std::copy_n(x.data().begin() + static_cast<long>(first * x.cols()), count * x.cols(),
              y.data().begin());
  return a.tape->record(std::move(y), {a}, [a, first](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(a.id);
    const std::size_t offset = first * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != rows) throw ShapeError("concat_cols row count mismatch");
    cols += p.value().cols();
  }
  Tensor y = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& x = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) y(r, offset + c) = x(r, c);
    offset += x.cols();
  }
  Tape& tape = *parts[0].tape;
  // Record against the first input for dependency tracking; the closure handles all parts.
  std::vector<Var> inputs(parts.begin(), parts.end());
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](Var v) { return v.requires_grad(); });
  Var anchor = needs ? *std::find_if(inputs.begin(), inputs.end(),
                                     [](Var v) { return v.requires_grad(); })
                     : inputs[0];
  return tape.record(std::move(y), {anchor}, [inputs](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t pc = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_slot(p.id);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, off + c);
      }
      off += pc;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    require_rank(p.value(), 2, "concat_rows");
    if (p.value().cols() != cols) throw ShapeError("concat_rows column count mismatch");
    rows += p.value().rows();
  }
  Tensor y = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), y.data().begin() + static_cast<long>(offset));
    offset += src.size();
  }
  Tape& tape = *parts[0].tape;
  std::vector<Var> inputs(parts.begin(), parts.end());
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](Var v) { return v.requires_grad(); });
  Var anchor = needs ? *std::find_if(inputs.begin(), inputs.end(),
                                     [](Var v) { return v.requires_grad(); })
                     : inputs[0];
  return tape.record(std::move(y), {anchor}, [inputs](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_slot(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm_rows");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw ShapeError("layer_norm_rows: scale/shift size does not match " + shape_string(xv.shape()));
  }
  Tensor normalized = Tensor::matrix(rows, cols);
  std::vector<double> inv_std(rows);
  Tensor y = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      normalized(r, c) = (xv(r, c) - mean) * inv_std[r];
      y(r, c) = gamma.value()[c] * normalized(r, c) + beta.value()[c];
    }
  }
  return x.tape->record(
      std::move(y), {x, gamma, beta},
      [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const std::size_t rows = g.rows(), cols = g.cols();
        const Tensor& gam = t.value(gamma);
        if (t.requires_grad(gamma) || t.requires_grad(beta)) {
          Tensor dg({1, cols}), db({1, cols});
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              dg[c] += g(r, c) * normalized(r, c);
              db[c] += g(r, c);
            }
          }
          if (t.requires_grad(gamma)) {
            Tensor& slot = t.grad_slot(gamma.id);
            for (std::size_t c = 0; c < cols; ++c) slot[c] += dg[c];
          }
          if (t.requires_grad(beta)) {
            Tensor& slot = t.grad_slot(beta.id);
            for (std::size_t c = 0; c < cols; ++c) slot[c] += db[c];
          }
        }
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_slot(x.id);
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dn = g(r, c) * gam[c];
            mean_dn += dn;
            mean_dn_n += dn * normalized(r, c);
          }
          mean_dn /= n;
          mean_dn_n /= n;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dn = g(r, c) * gam[c];
            gx(r, c) += inv_std[r] * (dn - mean_dn - normalized(r, c) * mean_dn_n);
          }
        }
      });
}

Var outer_sum(Var a, Var b) {
  const std::size_t n = a.value().size(), m = b.value().size();
  Tensor y = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y(i, j) = a.value()[i] + b.value()[j];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_slot(a.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga[i] += g(i, j);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Var softmax_rows(Var logits, std::span<const std::uint8_t> mask) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_rows");
  const std::size_t rows = z.rows(), cols = z.cols();
  if (!mask.empty() && mask.size() != z.size()) throw ShapeError("softmax_rows: mask size mismatch");
  auto kept = [&](std::size_t r, std::size_t c) { return mask.empty() || mask[r * cols + c] != 0; };
  Tensor y = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (kept(r, c)) mx = std::max(mx, z(r, c));
    if (!std::isfinite(mx)) {
      throw DomainError("softmax_rows: row " + std::to_string(r) + " has no admissible entries");
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!kept(r, c)) continue;
      y(r, c) = std::exp(z(r, c) - mx);
      sum += y(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) y(r, c) /= sum;
  }
  return logits.tape->record(std::move(y), {logits}, [logits](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& p = t.value(Var{&t, self});
    Tensor& gz = t.grad_slot(logits.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += p(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gz(r, c) += p(r, c) * (g(r, c) - dot);
    }
  });
}

Var mean_rows(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 2, "mean_rows");
  Tensor y = Tensor::matrix(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) y[c] += v(r, c);
  const double inv = 1.0 / static_cast<double>(v.rows());
  for (std::size_t c = 0; c < v.cols(); ++c) y[c] *= inv;
  return x.tape->record(std::move(y), {x}, [x, inv](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& gx = t.grad_slot(x.id);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[c] * inv;
  });
}

Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record(Tensor::matrix(1, 1, s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    Tensor& gx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

// ---- feature maps --------------------------------------------------------

Var conv2d(Var x, Var w, Var bias, kernels::Conv2dGeometry geo) {
  Tensor y = kernels::conv2d(x.value(), w.value(), bias.value(), geo);
  return x.tape->record(std::move(y), {x, w, bias}, [x, w, bias, geo](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(x)) {
      t.grad_slot(x.id) += kernels::conv2d_grad_input(g, t.value(w), t.value(x).shape(), geo);
    }
    if (t.requires_grad(w)) {
      t.grad_slot(w.id) += kernels::conv2d_grad_weight(g, t.value(x), t.value(w).shape(), geo);
    }
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad_slot(bias.id);
      const std::size_t plane = g.dim(1) * g.dim(2);
      for (std::size_t c = 0; c < g.dim(0); ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += g[c * plane + i];
        gb[c] += s;
      }
    }
  });
}

Var global_avg_pool(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 3, "global_avg_pool");
  const std::size_t channels = v.dim(0), plane = v.dim(1) * v.dim(2);
  Tensor y = Tensor::matrix(1, channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += v[c * plane + i];
    y[c] = s / static_cast<double>(plane);
  }
  return x.tape->record(std::move(y), {x}, [x, plane](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& gx = t.grad_slot(x.id);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t c = 0; c < g.size(); ++c)
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c] * inv;
  });
}

Var scale_channels(Var x, Var gate) {
  const Tensor& v = x.value();
  require_rank(v, 3, "scale_channels");
  const std::size_t channels = v.dim(0), plane = v.dim(1) * v.dim(2);
  if (gate.value().size() != channels) throw ShapeError("scale_channels: gate size mismatch");
  Tensor y = v;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] *= gate.value()[c];
  return x.tape->record(std::move(y), {x, gate}, [x, gate, plane](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gate);
    const std::size_t channels = gv.size();
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x.id);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c * plane + i] * gv[c];
    }
    if (t.requires_grad(gate)) {
      Tensor& gg = t.grad_slot(gate.id);
      for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += g[c * plane + i] * xv[c * plane + i];
        gg[c] += s;
      }
    }
  });
}

Var scale_spatial(Var x, Var gate) {
  const Tensor& v = x.value();
  require_rank(v, 3, "scale_spatial");
  const std::size_t channels = v.dim(0), plane = v.dim(1) * v.dim(2);
  if (gate.value().size() != plane) throw ShapeError("scale_spatial: gate size mismatch");
  Tensor y = v;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] *= gate.value()[i];
  return x.tape->record(std::move(y), {x, gate}, [x, gate, channels, plane](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gate);
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad_slot(x.id);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c * plane + i] * gv[i];
    }
    if (t.requires_grad(gate)) {
      Tensor& gg = t.grad_slot(gate.id);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) gg[i] += g[c * plane + i] * xv[c * plane + i];
    }
  });
}

Var channel_mean_max(Var x) {
  const Tensor& v = x.value();
  require_rank(v, 3, "channel_mean_max");
  const std::size_t channels = v.dim(0), plane = v.dim(1) * v.dim(2);
  Tensor y({2, v.dim(1), v.dim(2)});
  std::vector<std::size_t> argmax(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0.0, mx = v[i];
    for (std::size_t c = 0; c < channels; ++c) {
      const double val = v[c * plane + i];
      s += val;
      if (val > mx) {
        mx = val;
        argmax[i] = c;
      }
    }
    y[i] = s / static_cast<double>(channels);
    y[plane + i] = mx;
  }
  return x.tape->record(std::move(y), {x},
                        [x, channels, plane, argmax = std::move(argmax)](Tape& t, std::size_t self) {
                          const Tensor& g = t.out_grad(self);
                          Tensor& gx = t.grad_slot(x.id);
                          const double inv = 1.0 / static_cast<double>(channels);
                          for (std::size_t i = 0; i < plane; ++i) {
                            for (std::size_t c = 0; c < channels; ++c) gx[c * plane + i] += g[i] * inv;
                            gx[argmax[i] * plane + i] += g[plane + i];
                          }
                        });
}

Var cosine_neighbor_bias(Var x, std::span<const std::vector<std::size_t>> neighbors) {
  const Tensor& v = x.value();
  require_rank(v, 2, "cosine_neighbor_bias");
  const std::size_t n = v.rows(), dim = v.cols();
  if (neighbors.size() != n) throw ShapeError("cosine_neighbor_bias: neighbor list count mismatch");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += v(i, c) * v(i, c);
    norms[i] = std::sqrt(s);
  }
  Tensor y = Tensor::matrix(n, n);
  Tensor cosines = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : neighbors[i]) {
      if (j >= n) throw ShapeError("cosine_neighbor_bias: neighbor index out of range");
      if (norms[i] == 0.0 || norms[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += v(i, c) * v(j, c);
      cosines(i, j) = dot / (norms[i] * norms[j]);
      y(i, j) = 0.5 * (cosines(i, j) + 1.0);
    }
  }
  std::vector<std::vector<std::size_t>> nb(neighbors.begin(), neighbors.end());
  return x.tape->record(
      std::move(y), {x},
      [x, nb = std::move(nb), norms = std::move(norms), cosines = std::move(cosines)](
          Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& v = t.value(x);
        Tensor& gx = t.grad_slot(x.id);
        const std::size_t dim = v.cols();
        for (std::size_t i = 0; i < nb.size(); ++i) {
          for (std::size_t j : nb[i]) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue;
            const double ds = 0.5 * g(i, j);
            const double s = cosines(i, j);
            const double inv_ij = 1.0 / (norms[i] * norms[j]);
            const double inv_ii = 1.0 / (norms[i] * norms[i]);
            const double inv_jj = 1.0 / (norms[j] * norms[j]);
            for (std::size_t c = 0; c < dim; ++c) {
              gx(i, c) += ds * (v(j, c) * inv_ij - s * v(i, c) * inv_ii);
              gx(j, c) += ds * (v(i, c) * inv_ij - s * v(j, c) * inv_jj);
            }
          }
        }
      });
}

}  // namespace oiqa::ad
