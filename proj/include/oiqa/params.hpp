#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oiqa/autodiff.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

/// Named parameter tensors, ordered lexicographically by name.
using ModelParams = std::map<std::string, Tensor>;

enum class Init { XavierUniform, Zeros, Ones };

struct ParamSpec {
  std::string name;
  Tensor::Shape shape;
  Init init = Init::Zeros;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

using ParamSpecs = std::vector<ParamSpec>;

inline void add_matrix(ParamSpecs& specs, const std::string& name, std::size_t in, std::size_t out) {
  specs.push_back({name, {in, out}, Init::XavierUniform, in, out});
}
inline void add_bias(ParamSpecs& specs, const std::string& name, std::size_t n) {
  specs.push_back({name, {1, n}, Init::Zeros, 0, 0});
}
inline void add_layer_norm(ParamSpecs& specs, const std::string& prefix, std::size_t n) {
  specs.push_back({prefix + ".gamma", {1, n}, Init::Ones, 0, 0});
  specs.push_back({prefix + ".beta", {1, n}, Init::Zeros, 0, 0});
}

/// Seeded initialization. Specs are visited in name order from a single
/// generator, and every value is rounded to float so a freshly initialized
/// model survives the f32 weights format unchanged.
ModelParams initialize_params(const ParamSpecs& specs, std::uint64_t seed);

/// Parameter group of a tensor name: the text before the first '.'.
std::string param_group(const std::string& name);

/// Checks that `params` holds exactly the tensors named by `specs` with
/// matching shapes; throws FormatError otherwise.
void check_params(const ModelParams& params, const ParamSpecs& specs);

/// Parameters lifted onto a tape as leaves, created on first use.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ModelParams& params, bool requires_grad)
      : tape_(tape), params_(params), requires_grad_(requires_grad) {}

  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }

  /// Adjoints after tape.backward(); tensors never touched get zeros.
  ModelParams gradients() const;

 private:
  ad::Tape& tape_;
  const ModelParams& params_;
  bool requires_grad_;
  std::map<std::string, ad::Var> bound_;
};

/// Uniform [0, 1) draw from a 64-bit engine, independent of the standard
/// library's distribution implementation.
double unit_uniform(std::uint64_t bits);

}  // namespace oiqa
