#include "oiqa/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "oiqa/error.hpp"

namespace oiqa {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_len, const char* what) {
  if (a.size() != b.size()) {
    throw MetricError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  if (a.size() < min_len) {
    throw MetricError(std::string(what) + ": need at least " + std::to_string(min_len) + " values");
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double plcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "plcc");
  const double mp = mean(pred), mt = mean(truth);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mp, dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricError("plcc: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "srcc");
  const auto rp = fractional_ranks(pred), rt = fractional_ranks(truth);
  try {
    return plcc(rp, rt);
  } catch (const MetricError&) {
    throw MetricError("srcc: all values tied, rank correlation undefined");
  }
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 1, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::vector<double> logistic_remap(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 4, "logistic_remap");
  const auto [pmin, pmax] = std::minmax_element(pred.begin(), pred.end());
  const auto [tmin, tmax] = std::minmax_element(truth.begin(), truth.end());
  const double sd = std::max((*pmax - *pmin) / 4.0, 1e-6);
  std::array<double, 4> b{*tmax, *tmin, mean(pred), sd};

  auto eval = [](const std::array<double, 4>& p, double x, std::array<double, 4>* jac) {
    const double s = std::abs(p[3]) + 1e-12;
    const double e = std::exp(-(x - p[2]) / s);
    const double g = 1.0 / (1.0 + e);
    if (jac) {
      const double dg = g * g * e;  // dg/du with u = (x - b3)/s
      (*jac)[0] = g;
      (*jac)[1] = 1.0 - g;
      (*jac)[2] = (p[0] - p[1]) * dg * (-1.0 / s);
      (*jac)[3] = (p[0] - p[1]) * dg * (-(x - p[2]) / (s * s)) * (p[3] < 0 ? -1.0 : 1.0);
    }
    return p[1] + (p[0] - p[1]) * g;
  };
  auto sse = [&](const std::array<double, 4>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = eval(p, pred[i], nullptr) - truth[i];
      s += r * r;
    }
    return s;
  };

  double lambda = 1e-3, cost = sse(b);
  for (int iter = 0; iter < 200; ++iter) {
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
      std::array<double, 4> j;
      const double r = eval(b, pred[i], &j) - truth[i];
      for (int a = 0; a < 4; ++a) {
        jtr[a] += j[a] * r;
        for (int c = 0; c < 4; ++c) jtj[a][c] += j[a] * j[c];
      }
    }
    // Solve (JtJ + lambda diag) delta = -Jtr by Gaussian elimination.
    std::array<std::array<double, 5>, 4> m{};
    for (int a = 0; a < 4; ++a) {
      for (int c = 0; c < 4; ++c) m[a][c] = jtj[a][c];
      m[a][a] += lambda * (jtj[a][a] + 1e-12);
      m[a][4] = -jtr[a];
    }
    bool singular = false;
    for (int col = 0; col < 4 && !singular; ++col) {
      int piv = col;
      for (int r = col + 1; r < 4; ++r)
        if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
      if (std::abs(m[piv][col]) < 1e-300) {
        singular = true;
        break;
      }
      std::swap(m[piv], m[col]);
      for (int r = 0; r < 4; ++r) {
        if (r == col) continue;
        const double f = m[r][col] / m[col][col];
        for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
      }
    }
    if (singular) break;
    std::array<double, 4> cand;
    for (int a = 0; a < 4; ++a) cand[a] = b[a] + m[a][4] / m[a][a];
    const double c2 = sse(cand);
    if (c2 < cost) {
      const bool converged = cost - c2 < 1e-14 * (1.0 + cost);
      b = cand;
      cost = c2;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (converged) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = eval(b, pred[i], nullptr);
  return out;
}

}  // namespace oiqa
