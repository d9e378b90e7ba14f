#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "oiqa/model.hpp"

namespace oiqa {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// entries whose true derivative is zero from dividing by rounding noise.
double gradient_relative_error(double analytic, double numeric, double floor = 1e-6);

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;

  /// Max relative error per parameter group (text before the first '.').
  std::map<std::string, double> group_errors() const;
  double max_rel_error() const;
  std::size_t entries_checked() const;
};

struct GradcheckOptions {
  double step = 1e-4;
  /// Entries sampled per tensor; 0 checks every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t sample_seed = 0;
  double floor = 1e-6;
};

using LossFunction = std::function<double(const ModelParams&)>;

/// Compares `analytic` against central differences of `loss` around `params`.
GradcheckReport check_gradients(const LossFunction& loss, const ModelParams& params,
                                const ModelParams& analytic, const GradcheckOptions& options = {});

/// End-to-end check of the full model on a synthetic panorama: squared error
/// against a fixed target, parameters and image drawn from `seed`.
GradcheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed,
                                const GradcheckOptions& options = {});

}  // namespace oiqa
