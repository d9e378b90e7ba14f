#include "oiqa/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "oiqa/error.hpp"

namespace oiqa {

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

ModelParams initialize_params(const ParamSpecs& specs, std::uint64_t seed) {
  std::vector<const ParamSpec*> ordered;
  for (const auto& s : specs) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->name < b->name; });

  std::mt19937_64 engine(seed);
  ModelParams params;
  for (const ParamSpec* s : ordered) {
    Tensor t(s->shape);
    switch (s->init) {
      case Init::Zeros:
        break;
      case Init::Ones:
        t.fill(1.0);
        break;
      case Init::XavierUniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(s->fan_in + s->fan_out));
        for (double& v : t.data()) {
          v = static_cast<float>((2.0 * unit_uniform(engine()) - 1.0) * limit);
        }
        break;
      }
    }
    if (!params.emplace(s->name, std::move(t)).second) {
      throw ConfigError("duplicate parameter name " + s->name);
    }
  }
  return params;
}

std::string param_group(const std::string& name) { return name.substr(0, name.find('.')); }

void check_params(const ModelParams& params, const ParamSpecs& specs) {
  if (params.size() != specs.size()) {
    throw FormatError("parameter count mismatch: have " + std::to_string(params.size()) +
                      ", model expects " + std::to_string(specs.size()));
  }
  for (const auto& s : specs) {
    auto it = params.find(s.name);
    if (it == params.end()) throw FormatError("missing parameter " + s.name);
    if (it->second.shape() != s.shape) {
      throw FormatError("parameter " + s.name + " has shape " + shape_string(it->second.shape()) +
                        ", model expects " + shape_string(s.shape));
    }
  }
}

ad::Var BoundParams::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto p = params_.find(name);
  if (p == params_.end()) throw FormatError("unknown parameter " + name);
  ad::Var v = tape_.leaf(p->second, requires_grad_);
  bound_.emplace(name, v);
  return v;
}

ModelParams BoundParams::gradients() const {
  ModelParams grads;
  for (const auto& [name, tensor] : params_) {
    auto it = bound_.find(name);
    const Tensor* g = it == bound_.end() ? nullptr : &it->second.grad();
    grads.emplace(name, (g && !g->empty()) ? *g : Tensor::zeros_like(tensor));
  }
  return grads;
}

}  // namespace oiqa
