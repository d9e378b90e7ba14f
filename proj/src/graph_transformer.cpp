#include "oiqa/graph_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "oiqa/error.hpp"

namespace oiqa {

Tensor distance_bias(const Tensor& distances, double eps) {
  if (distances.empty()) throw ShapeError("distance_bias: empty distance matrix");
  const auto [lo, hi] = std::minmax_element(distances.data().begin(), distances.data().end());
  const double min_d = *lo, range = *hi - *lo + eps;
  Tensor bias(distances.shape());
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = 1.0 - (distances[i] - min_d) / range;
  return bias;
}

Tensor adjacency_bias(const Tensor& features, const NeighborLists& neighbors) {
  std::size_t zero_rows = 0;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) ++zero_rows;
  }
  if (zero_rows > 0) {
    std::cerr << "warning: adjacency_bias: " << zero_rows
              << " zero-norm feature row(s); cosine similarity set to 0\n";
  }
  ad::Tape tape;
  return ad::cosine_neighbor_bias(tape.constant(features), neighbors).value();
}

std::string encoder_prefix(std::size_t layer) { return "transformer." + std::to_string(layer); }

void declare_encoder_params(ParamSpecs& specs, std::size_t layers, const EncoderDims& dims) {
  if (dims.heads == 0 || dims.channels % dims.heads != 0) {
    throw ConfigError("encoder channels " + std::to_string(dims.channels) + " not divisible by " +
                      std::to_string(dims.heads) + " heads");
  }
  const std::size_t c = dims.channels, hidden = dims.ffn_expansion * dims.channels;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = encoder_prefix(l);
    for (const char* proj : {".q", ".k", ".v", ".o"}) {
      add_matrix(specs, p + proj + ".weight", c, c);
      add_bias(specs, p + proj + ".bias", c);
    }
    add_layer_norm(specs, p + ".ln1", c);
    add_layer_norm(specs, p + ".ln2", c);
    add_matrix(specs, p + ".ffn.fc1.weight", c, hidden);
    add_bias(specs, p + ".ffn.fc1.bias", hidden);
    add_matrix(specs, p + ".ffn.fc2.weight", hidden, c);
    add_bias(specs, p + ".ffn.fc2.bias", c);
  }
}

namespace {
ad::Var linear(BoundParams& params, const std::string& name, ad::Var x) {
  return ad::add_row(ad::matmul(x, params(name + ".weight")), params(name + ".bias"));
}
}  // namespace

ad::Var biased_attention(BoundParams& params, const std::string& prefix, ad::Var x,
                         ad::Var dist_bias, ad::Var adj_bias, const EncoderDims& dims,
                         std::vector<Tensor>* attention) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.cols() != dims.channels) {
    throw ShapeError("biased_attention: features " + shape_string(xv.shape()) + " for C=" +
                     std::to_string(dims.channels));
  }
  const Tensor::Shape square{xv.rows(), xv.rows()};
  if (dist_bias.value().shape() != square || adj_bias.value().shape() != square) {
    throw ShapeError("biased_attention: bias matrices must be " + shape_string(square));
  }
  const std::size_t d = dims.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  ad::Var q = linear(params, prefix + ".q", x);
  ad::Var k = linear(params, prefix + ".k", x);
  ad::Var v = linear(params, prefix + ".v", x);
  ad::Var bias = ad::add(dist_bias, adj_bias);
  std::vector<ad::Var> heads;
  if (attention) attention->clear();
  for (std::size_t h = 0; h < dims.heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * d, d);
    ad::Var kh = ad::slice_cols(k, h * d, d);
    ad::Var logits = ad::add(ad::scale(ad::matmul(qh, kh, false, true), inv_sqrt_d), bias);
    ad::Var weights = ad::softmax_rows(logits);
    if (attention) attention->push_back(weights.value());
    heads.push_back(ad::matmul(weights, ad::slice_cols(v, h * d, d)));
  }
  return linear(params, prefix + ".o", ad::concat_cols(heads));
}

ad::Var encoder_layer(BoundParams& params, const std::string& prefix, ad::Var x,
                      ad::Var dist_bias, ad::Var adj_bias, const EncoderDims& dims,
                      std::vector<Tensor>* attention) {
  ad::Var n1 = ad::layer_norm_rows(x, params(prefix + ".ln1.gamma"), params(prefix + ".ln1.beta"),
                                   dims.ln_eps);
  ad::Var x1 = ad::add(x, biased_attention(params, prefix, n1, dist_bias, adj_bias, dims, attention));
  ad::Var n2 = ad::layer_norm_rows(x1, params(prefix + ".ln2.gamma"), params(prefix + ".ln2.beta"),
                                   dims.ln_eps);
  ad::Var ffn = linear(params, prefix + ".ffn.fc2", ad::gelu(linear(params, prefix + ".ffn.fc1", n2)));
  return ad::add(x1, ffn);
}

ad::Var graphormer_forward(BoundParams& params, ad::Var x, const Tensor& distances,
                           const NeighborLists& neighbors, std::size_t layers, const EncoderDims& dims) {
  ad::Tape& tape = params.tape();
  ad::Var dist = tape.constant(distance_bias(distances));
  ad::Var adj = ad::cosine_neighbor_bias(x, neighbors);
  for (std::size_t l = 0; l < layers; ++l) x = encoder_layer(params, encoder_prefix(l), x, dist, adj, dims);
  return x;
}

Tensor biased_attention(const Tensor& x, const Tensor& dist_bias, const Tensor& adj_bias,
                        const ModelParams& params, const std::string& prefix, const EncoderDims& dims,
                        std::vector<Tensor>* attention) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return biased_attention(bound, prefix, tape.constant(x), tape.constant(dist_bias),
                          tape.constant(adj_bias), dims, attention)
      .value();
}

Tensor encoder_layer(const Tensor& x, const Tensor& dist_bias, const Tensor& adj_bias,
                     const ModelParams& params, const std::string& prefix, const EncoderDims& dims) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return encoder_layer(bound, prefix, tape.constant(x), tape.constant(dist_bias), tape.constant(adj_bias),
                       dims)
      .value();
}

Tensor graphormer_forward(const Tensor& x, const Tensor& distances, const NeighborLists& neighbors,
                          const ModelParams& params, std::size_t layers, const EncoderDims& dims) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return graphormer_forward(bound, tape.constant(x), distances, neighbors, layers, dims).value();
}

}  // namespace oiqa
