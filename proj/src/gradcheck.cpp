#include "oiqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oiqa/error.hpp"
#include "oiqa/training.hpp"

namespace oiqa {

double gradient_relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::map<std::string, double> GradcheckReport::group_errors() const {
  std::map<std::string, double> out;
  for (const auto& t : tensors) {
    double& e = out[param_group(t.name)];
    e = std::max(e, t.max_rel_error);
  }
  return out;
}

double GradcheckReport::max_rel_error() const {
  double e = 0.0;
  for (const auto& t : tensors) e = std::max(e, t.max_rel_error);
  return e;
}

std::size_t GradcheckReport::entries_checked() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.checked;
  return n;
}

GradcheckReport check_gradients(const LossFunction& loss, const ModelParams& params,
                                const ModelParams& analytic, const GradcheckOptions& options) {
  GradcheckReport report;
  ModelParams probe = params;
  std::mt19937_64 engine(options.sample_seed);
  for (auto& [name, tensor] : probe) {
    const auto g = analytic.find(name);
    if (g == analytic.end() || !g->second.same_shape(tensor)) {
      throw ShapeError("gradcheck: analytic gradient missing or misshapen for " + name);
    }
    std::vector<std::size_t> entries(tensor.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_tensor && entries.size() > options.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), engine);
      entries.resize(options.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    TensorCheck check{name, entries.size(), 0.0, 0.0};
    for (std::size_t i : entries) {
      const double original = tensor[i];
      tensor[i] = original + options.step;
      const double up = loss(probe);
      tensor[i] = original - options.step;
      const double down = loss(probe);
      tensor[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = g->second[i];
      check.max_rel_error = std::max(check.max_rel_error, gradient_relative_error(a, numeric, options.floor));
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
    }
    report.tensors.push_back(check);
  }
  return report;
}

GradcheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed, const GradcheckOptions& options) {
  const ErpImage erp = synthetic_erp(128, 64, 0.1, seed);
  const PreparedSample sample = prepare_sample(erp, config);
  const ModelParams params = init_model_params(config, seed);
  constexpr double kTarget = 3.0;
  const TrainingExample ex{&sample, kTarget};
  const LossAndGradients lg = forward_with_gradients({&ex, 1}, params, config);
  const LossFunction loss = [&](const ModelParams& p) {
    const double r = forward(sample, p, config) - kTarget;
    return r * r;
  };
  GradcheckOptions opts = options;
  opts.sample_seed = options.sample_seed ^ seed;
  return check_gradients(loss, params, lg.gradients, opts);
}

}  // namespace oiqa
