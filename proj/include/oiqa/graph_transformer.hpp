#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oiqa/autodiff.hpp"
#include "oiqa/params.hpp"
#include "oiqa/spherical_geometry.hpp"

namespace oiqa {

struct EncoderDims {
  std::size_t channels = 768;
  std::size_t heads = 4;
  std::size_t ffn_expansion = 4;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return channels / heads; }
};

inline constexpr std::size_t kDefaultEncoderLayers = 2;
inline constexpr double kDistanceBiasEps = 1e-8;

/// 1 - (D - min D) / (max D - min D + eps), extremes taken over all entries.
Tensor distance_bias(const Tensor& distances, double eps = kDistanceBiasEps);

/// 1/2 (cos(h_i, h_j) + 1) for j in neighbors[i], 0 elsewhere. Zero-norm rows
/// yield zero similarity; a warning is written to stderr.
Tensor adjacency_bias(const Tensor& features, const NeighborLists& neighbors);

/// transformer.<l>.{q,k,v,o}.{weight,bias}, ln1/ln2, ffn.fc1/ffn.fc2.
void declare_encoder_params(ParamSpecs& specs, std::size_t layers, const EncoderDims& dims);
std::string encoder_prefix(std::size_t layer);

/// Multi-head attention over all nodes with the biases added to every head's
/// logits, followed by the output projection. `attention` receives per-head
/// V x V weights when non-null.
ad::Var biased_attention(BoundParams& params, const std::string& prefix, ad::Var x,
                         ad::Var distance_bias, ad::Var adjacency_bias, const EncoderDims& dims,
                         std::vector<Tensor>* attention = nullptr);

/// Pre-norm block: X' = X + Attn(LN1 X); out = X' + FFN(LN2 X').
ad::Var encoder_layer(BoundParams& params, const std::string& prefix, ad::Var x,
                      ad::Var distance_bias, ad::Var adjacency_bias, const EncoderDims& dims,
                      std::vector<Tensor>* attention = nullptr);

/// Builds both biases once from the input features and applies `layers` blocks.
ad::Var graphormer_forward(BoundParams& params, ad::Var x, const Tensor& distances,
                           const NeighborLists& neighbors, std::size_t layers, const EncoderDims& dims);

// Value-level conveniences.
Tensor biased_attention(const Tensor& x, const Tensor& distance_bias, const Tensor& adjacency_bias,
                        const ModelParams& params, const std::string& prefix, const EncoderDims& dims,
                        std::vector<Tensor>* attention = nullptr);
Tensor encoder_layer(const Tensor& x, const Tensor& distance_bias, const Tensor& adjacency_bias,
                     const ModelParams& params, const std::string& prefix, const EncoderDims& dims);
Tensor graphormer_forward(const Tensor& x, const Tensor& distances, const NeighborLists& neighbors,
                          const ModelParams& params, std::size_t layers, const EncoderDims& dims);

}  // namespace oiqa
