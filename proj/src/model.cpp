#include "oiqa/model.hpp"

#include <cmath>
#include <fstream>

#include "oiqa/binary_io.hpp"
#include "oiqa/error.hpp"
#include "oiqa/positional_encoding.hpp"

namespace oiqa {
namespace {

// Runs one pipeline stage, prefixing any library error with the stage name
// and rejecting non-finite results.
template <class Fn>
auto run_stage(const char* name, Fn&& fn) {
  auto tag = [name](const std::exception& e) { return std::string(name) + ": " + e.what(); };
  try {
    auto result = fn();
    if constexpr (std::is_same_v<decltype(result), ad::Var>) {
      if (!result.value().all_finite()) {
        throw NumericError(std::string("non-finite values produced by stage ") + name);
      }
    }
    return result;
  } catch (const NumericError& e) {
    if (std::string(e.what()).find("stage") != std::string::npos) throw;
    throw NumericError(tag(e));
  } catch (const DomainError& e) {
    throw DomainError(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const ShapeError& e) {
    throw ShapeError(tag(e));
  } catch (const FormatError& e) {
    throw FormatError(tag(e));
  } catch (const InputError& e) {
    throw InputError(tag(e));
  }
}

ad::Var linear(BoundParams& params, const std::string& name, ad::Var x) {
  return ad::add_row(ad::matmul(x, params(name + ".weight")), params(name + ".bias"));
}

}  // namespace

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.num_viewports = 6;
  c.k = 3;
  c.node_dim = 24;
  c.gat_layers = 3;
  c.heads = 2;
  c.encoder_layers = 1;
  c.viewport_size = 32;
  c.pe_frequencies = 4;
  c.backbone_channels = {4, 8, 8, 8};
  c.head_hidden = 16;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (num_viewports < 2) fail("num_viewports must be >= 2");
  if (k == 0 || k >= num_viewports) {
    fail("k must satisfy 1 <= k < V (k=" + std::to_string(k) + ", V=" + std::to_string(num_viewports) + ")");
  }
  if (heads == 0 || node_dim % heads != 0) fail("node_dim must be divisible by heads");
  if (node_dim % 4 != 0) fail("node_dim must be divisible by the 4 backbone stages");
  if (6 * pe_frequencies != node_dim) fail("6 * pe_frequencies must equal node_dim");
  if (pe_frequencies < 2) fail("pe_frequencies must be >= 2");
  if (!(fov > 0.0 && fov <= 120.0)) fail("fov must lie in (0, 120] degrees");
  if (viewport_size == 0 || viewport_size % 32 != 0) fail("viewport_size must be a positive multiple of 32");
  for (std::size_t c : backbone_channels)
    if (c == 0) fail("backbone channels must be positive");
  if (head_hidden == 0 || ffn_expansion == 0 || ca_reduction == 0) fail("hidden widths must be positive");
  if (sa_kernel % 2 == 0) fail("spatial attention kernel must be odd");
}

FcsDims ModelConfig::fcs_dims() const {
  return {backbone_channels, node_dim / 4, ca_reduction, sa_kernel};
}
GatDims ModelConfig::gat_dims() const { return {node_dim, heads, 0.2, 1e-5}; }
EncoderDims ModelConfig::encoder_dims() const { return {node_dim, heads, ffn_expansion, 1e-5}; }

ParamSpecs model_param_specs(const ModelConfig& config) {
  config.validate();
  ParamSpecs specs;
  ConvStubBackbone::declare_params(specs, config.backbone_channels);
  declare_fcs_params(specs, config.fcs_dims());
  declare_gat_params(specs, config.gat_layers, config.gat_dims());
  declare_encoder_params(specs, config.encoder_layers, config.encoder_dims());
  add_matrix(specs, "head.fc1.weight", config.node_dim, config.head_hidden);
  add_bias(specs, "head.fc1.bias", config.head_hidden);
  add_matrix(specs, "head.fc2.weight", config.head_hidden, 1);
  add_bias(specs, "head.fc2.bias", 1);
  return specs;
}

ModelParams init_model_params(const ModelConfig& config, std::uint64_t seed) {
  return initialize_params(model_param_specs(config), seed);
}

PreparedSample prepare_sample(const ErpImage& erp, const ModelConfig& config) {
  config.validate();
  PreparedSample s;
  s.points = fibonacci_sample(config.num_viewports);
  for (auto& vp : extract_all(erp, s.points, config.fov, config.viewport_size, config.interpolation)) {
    s.viewports.push_back(std::move(vp.pixels));
  }
  return s;
}

ad::Var score_on_tape(BoundParams& params, const PreparedSample& sample, const ModelConfig& config,
                      ForwardTrace* trace) {
  config.validate();
  const std::size_t v = sample.points.size();
  if (v != config.num_viewports) {
    throw ConfigError("sample has " + std::to_string(v) + " viewports, config expects " +
                      std::to_string(config.num_viewports));
  }
  const bool external = !sample.stage_maps.empty();
  if ((external ? sample.stage_maps.size() : sample.viewports.size()) != v) {
    throw InputError("sample inputs do not match its " + std::to_string(v) + " viewport centers");
  }
  ad::Tape& tape = params.tape();

  ad::Var embeddings = run_stage("feature_extraction", [&] {
    const ConvStubBackbone stub(config.backbone_channels);
    const PrecomputedStageMaps precomputed(sample.stage_maps);
    const StageMapProvider& provider = external ? static_cast<const StageMapProvider&>(precomputed)
                                                : static_cast<const StageMapProvider&>(stub);
    const FcsDims dims = config.fcs_dims();
    static const Tensor kNoImage;
    std::vector<ad::Var> rows;
    for (std::size_t i = 0; i < v; ++i) {
      const Tensor& image = external ? kNoImage : sample.viewports[i];
      rows.push_back(fcs_fuse(params, provider.stages(params, i, image), dims));
    }
    return ad::concat_rows(rows);
  });

  ad::Var x = run_stage("positional_encoding", [&] {
    Tensor codes = Tensor::matrix(v, config.node_dim);
    for (std::size_t i = 0; i < v; ++i) {
      const auto code = encode_position(sample.points[i].xyz, config.pe_frequencies);
      std::copy(code.begin(), code.end(), codes.row(i).begin());
    }
    return ad::add(embeddings, tape.constant(std::move(codes)));
  });

  const ViewportGraph graph = run_stage("graph", [&] { return build_graph(sample.points, config.k); });
  const Tensor distances = distance_matrix(graph.coords);

  ad::Var local = run_stage("gat", [&] {
    return gat_forward(params, x, graph, config.gat_layers, config.gat_dims());
  });
  ad::Var global = run_stage("graph_transformer", [&] {
    return graphormer_forward(params, local, distances, graph.neighbors, config.encoder_layers,
                              config.encoder_dims());
  });
  ad::Var score = run_stage("regression_head", [&] {
    ad::Var pooled = ad::mean_rows(global);
    return linear(params, "head.fc2", ad::gelu(linear(params, "head.fc1", pooled)));
  });

  if (trace) {
    trace->graph = graph;
    trace->distances = distances;
    trace->embeddings = x.value();
    trace->gat_output = local.value();
    trace->encoder_output = global.value();
    trace->score = score.value()[0];
  }
  return score;
}

double forward(const PreparedSample& sample, const ModelParams& params, const ModelConfig& config,
               ForwardTrace* trace) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  return score_on_tape(bound, sample, config, trace).value()[0];
}

double forward(const ErpImage& erp, const ModelParams& params, const ModelConfig& config) {
  return forward(prepare_sample(erp, config), params, config);
}

LossAndGradients forward_with_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                                        const ModelConfig& config) {
  if (batch.empty()) throw InputError("forward_with_gradients: empty batch");
  LossAndGradients out;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const TrainingExample& ex : batch) {
    if (!ex.sample) throw InputError("forward_with_gradients: missing sample");
    ad::Tape tape;
    BoundParams bound(tape, params, true);
    ad::Var score = score_on_tape(bound, *ex.sample, config);
    ad::Var residual = ad::add(score, tape.constant(Tensor::matrix(1, 1, -ex.target)));
    ad::Var loss = ad::scale(ad::square(residual), inv_batch);
    if (!std::isfinite(loss.value()[0])) throw NumericError("loss: non-finite value");
    tape.backward(loss);
    out.loss += loss.value()[0];
    out.predictions.push_back(score.value()[0]);
    ModelParams grads = bound.gradients();
    if (out.gradients.empty()) {
      out.gradients = std::move(grads);
    } else {
      for (auto& [name, g] : out.gradients) g += grads.at(name);
    }
  }
  for (const auto& [name, g] : out.gradients) {
    if (!g.all_finite()) throw NumericError("backward: non-finite gradient for " + name);
  }
  return out;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("OIQW", 4);
  binio::write_le<std::uint32_t>(os, kWeightsFormatVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {  // std::map iterates in name order
    if (name.size() > 0xFFFF) throw FormatError("parameter name too long: " + name);
    if (t.rank() > 0xFF) throw FormatError("parameter rank too large: " + name);
    binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) binio::write_f32(os, v);
  }
  if (!os) throw InputError("failed writing " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open weights file " + path.string());
  binio::expect_magic(is, "OIQW", "weights file");
  const auto version = binio::read_le<std::uint32_t>(is, "version");
  if (version != kWeightsFormatVersion) {
    throw FormatError("unsupported weights file version " + std::to_string(version));
  }
  const auto count = binio::read_le<std::uint32_t>(is, "tensor count");
  ModelParams params;
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read_le<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated file while reading tensor name");
    if (i > 0 && !(previous < name)) throw FormatError("tensor names not in strictly increasing order");
    const auto rank = binio::read_le<std::uint8_t>(is, "rank");
    Tensor::Shape shape;
    for (std::uint8_t a = 0; a < rank; ++a) shape.push_back(binio::read_le<std::uint32_t>(is, "dims"));
    if (shape_numel(shape) > (std::size_t{1} << 30)) {
      throw FormatError("implausible tensor shape " + shape_string(shape) + " for " + name);
    }
    Tensor t(shape);
    for (double& v : t.data()) v = binio::read_f32(is, "tensor data");
    params.emplace(name, std::move(t));
    previous = std::move(name);
  }
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("trailing bytes in weights file " + path.string());
  }
  return params;
}

}  // namespace oiqa
