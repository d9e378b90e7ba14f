#include "oiqa/gat.hpp"

#include <algorithm>

#include "oiqa/error.hpp"

namespace oiqa {

std::string gat_prefix(std::size_t layer) { return "gat." + std::to_string(layer); }

void declare_gat_params(ParamSpecs& specs, std::size_t layers, const GatDims& dims) {
  if (dims.heads == 0 || dims.channels % dims.heads != 0) {
    throw ConfigError("GAT channels " + std::to_string(dims.channels) + " not divisible by " +
                      std::to_string(dims.heads) + " heads");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = gat_prefix(l);
    add_matrix(specs, p + ".W", dims.channels, dims.channels);
    specs.push_back({p + ".att", {dims.heads, 2 * dims.head_dim()}, Init::XavierUniform,
                     2 * dims.head_dim(), 1});
    add_layer_norm(specs, p + ".ln", dims.channels);
  }
}

void check_graph_contract(const ViewportGraph& graph) {
  const std::size_t n = graph.num_nodes;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    if (e.first >= n || e.second >= n) throw DomainError("graph edge references a missing node");
    if (i > 0 && !(graph.edges[i - 1] < e)) {
      throw DomainError("graph edges must be sorted and free of duplicates");
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!std::binary_search(graph.edges.begin(), graph.edges.end(), Edge{v, v})) {
      throw DomainError("node " + std::to_string(v) + " has no self-loop");
    }
  }
}

ad::Var gat_attention(BoundParams& params, const std::string& prefix, ad::Var x,
                      const ViewportGraph& graph, const GatDims& dims, std::vector<Tensor>* attention) {
  if (x.value().rank() != 2 || x.value().rows() != graph.num_nodes) {
    throw ShapeError("gat_attention: feature rows " + shape_string(x.value().shape()) +
                     " do not match " + std::to_string(graph.num_nodes) + " graph nodes");
  }
  check_graph_contract(graph);
  const std::size_t d = dims.head_dim();
  const std::vector<std::uint8_t> mask = graph.incoming_mask();

  ad::Var projected = ad::matmul(x, params(prefix + ".W"));
  ad::Var att = params(prefix + ".att");
  std::vector<ad::Var> heads;
  if (attention) attention->clear();
  for (std::size_t h = 0; h < dims.heads; ++h) {
    ad::Var z = ad::slice_cols(projected, h * d, d);
    ad::Var a = ad::slice_rows(att, h, 1);
    // a^T [Wh_i || Wh_j] splits into a target term and a source term.
    ad::Var target_term = ad::matmul(z, ad::slice_cols(a, 0, d), false, true);
    ad::Var source_term = ad::matmul(z, ad::slice_cols(a, d, d), false, true);
    ad::Var logits = ad::leaky_relu(ad::outer_sum(target_term, source_term), dims.negative_slope);
    ad::Var alpha = ad::softmax_rows(logits, mask);
    if (attention) attention->push_back(alpha.value());
    heads.push_back(ad::matmul(alpha, z));
  }
  return ad::concat_cols(heads);
}

ad::Var gat_layer(BoundParams& params, const std::string& prefix, ad::Var x,
                  const ViewportGraph& graph, const GatDims& dims) {
  ad::Var h = gat_attention(params, prefix, x, graph, dims);
  ad::Var normed = ad::layer_norm_rows(h, params(prefix + ".ln.gamma"), params(prefix + ".ln.beta"),
                                       dims.ln_eps);
  return ad::relu(ad::add(normed, x));
}

ad::Var gat_forward(BoundParams& params, ad::Var x, const ViewportGraph& graph, std::size_t layers,
                    const GatDims& dims) {
  for (std::size_t l = 0; l < layers; ++l) x = gat_layer(params, gat_prefix(l), x, graph, dims);
  return x;
}

Tensor gat_attention(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                     const std::string& prefix, const GatDims& dims, std::vector<Tensor>* attention) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return gat_attention(bound, prefix, tape.constant(x), graph, dims, attention).value();
}

Tensor gat_layer(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                 const std::string& prefix, const GatDims& dims) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return gat_layer(bound, prefix, tape.constant(x), graph, dims).value();
}

Tensor gat_forward(const Tensor& x, const ViewportGraph& graph, const ModelParams& params,
                   std::size_t layers, const GatDims& dims) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return gat_forward(bound, tape.constant(x), graph, layers, dims).value();
}

}  // namespace oiqa
