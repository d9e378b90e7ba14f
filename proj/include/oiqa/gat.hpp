#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oiqa/autodiff.hpp"
#include "oiqa/params.hpp"
#include "oiqa/spherical_geometry.hpp"

namespace oiqa {

struct GatDims {
  std::size_t channels = 768;
  std::size_t heads = 4;
  double negative_slope = 0.2;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return channels / heads; }
};

inline constexpr std::size_t kDefaultGatLayers = 3;

/// Layer l owns gat.<l>.W [C x C], gat.<l>.att [heads x 2C/heads] and the
/// LayerNorm gat.<l>.ln.{gamma,beta}.
void declare_gat_params(ParamSpecs& specs, std::size_t layers, const GatDims& dims);
std::string gat_prefix(std::size_t layer);

/// Multi-head graph attention over incoming edges (self-loops included).
/// Head outputs are concatenated back to C channels. When `attention` is
/// non-null it receives one V x V weight matrix per head (row = target).
ad::Var gat_attention(BoundParams& params, const std::string& prefix, ad::Var x,
                      const ViewportGraph& graph, const GatDims& dims,
                      std::vector<Tensor>* attention = nullptr);

/// ReLU(LayerNorm(gat_attention(x)) + x).
ad::Var gat_layer(BoundParams& params, const std::string& prefix, ad::Var x,
                  const ViewportGraph& graph, const GatDims& dims);

ad::Var gat_forward(BoundParams& params, ad::Var x, const ViewportGraph& graph, std::size_t layers,
                    const GatDims& dims);

// Value-level conveniences.
Tensor gat_attention(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                     const std::string& prefix, const GatDims& dims,
                     std::vector<Tensor>* attention = nullptr);
Tensor gat_layer(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                 const std::string& prefix, const GatDims& dims);
Tensor gat_forward(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                   std::size_t layers, const GatDims& dims);

/// Throws unless edges are sorted, unique, in range and every node has a self-loop.
void check_graph_contract(const ViewportGraph& graph);

}  // namespace oiqa
