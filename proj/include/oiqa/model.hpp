#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oiqa/feature_extraction.hpp"
#include "oiqa/gat.hpp"
#include "oiqa/graph_transformer.hpp"
#include "oiqa/image.hpp"
#include "oiqa/params.hpp"
#include "oiqa/positional_encoding.hpp"
#include "oiqa/sphere_sampler.hpp"
#include "oiqa/spherical_geometry.hpp"
#include "oiqa/viewport_projector.hpp"

namespace oiqa {

struct ModelConfig {
  std::size_t num_viewports = kDefaultViewportCount;
  std::size_t k = kDefaultNeighbors;
  std::size_t node_dim = 768;
  std::size_t gat_layers = kDefaultGatLayers;
  std::size_t heads = 4;
  std::size_t encoder_layers = kDefaultEncoderLayers;
  double fov = kDefaultFovDegrees;
  std::size_t viewport_size = kDefaultViewportSize;
  std::size_t pe_frequencies = kDefaultPeFrequencies;
  std::uint64_t seed = 0;

  StageChannels backbone_channels = kDefaultStageChannels;
  std::size_t head_hidden = 256;
  std::size_t ffn_expansion = 4;
  std::size_t ca_reduction = 4;
  std::size_t sa_kernel = 7;
  Interpolation interpolation = Interpolation::Bilinear;

  /// Reduced configuration used by gradient checks and desk-scale training:
  /// 6 viewports, k = 3, node_dim 24, 2 heads, one encoder layer, 32 px views.
  static ModelConfig desk();

  /// Throws ConfigError when any invariant is violated.
  void validate() const;

  FcsDims fcs_dims() const;
  GatDims gat_dims() const;
  EncoderDims encoder_dims() const;
};

/// Every learnable tensor of the model for `config`.
ParamSpecs model_param_specs(const ModelConfig& config);
ModelParams init_model_params(const ModelConfig& config, std::uint64_t seed);

/// Inputs of one image after the parameter-free stages (sampling and
/// viewport extraction). Either viewports or precomputed stage maps are set.
struct PreparedSample {
  std::vector<SpherePoint> points;
  std::vector<Tensor> viewports;        // [3 x S x S] each
  std::vector<StageMaps> stage_maps;    // external features path
};

PreparedSample prepare_sample(const ErpImage& erp, const ModelConfig& config);

struct ForwardTrace {
  ViewportGraph graph;
  Tensor distances;
  Tensor embeddings;       // V x node_dim, after adding position codes
  Tensor gat_output;       // V x node_dim
  Tensor encoder_output;   // V x node_dim
  double score = 0.0;
};

/// Records the full pipeline on `params.tape()` and returns the [1 x 1] score.
ad::Var score_on_tape(BoundParams& params, const PreparedSample& sample, const ModelConfig& config,
                      ForwardTrace* trace = nullptr);

double forward(const PreparedSample& sample, const ModelParams& params, const ModelConfig& config,
               ForwardTrace* trace = nullptr);
double forward(const ErpImage& erp, const ModelParams& params, const ModelConfig& config);

struct TrainingExample {
  const PreparedSample* sample = nullptr;
  double target = 0.0;
};

struct LossAndGradients {
  double loss = 0.0;
  std::vector<double> predictions;
  ModelParams gradients;  // same keys as the parameters
};

/// Mean squared error over the batch and its gradient for every parameter.
/// Per-sample gradients are summed in batch order.
LossAndGradients forward_with_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                                        const ModelConfig& config);

// ---- weights file ----------------------------------------------------------
// "OIQW", u32 version = 1, u32 count, then per tensor in name order:
// u16 name length, name bytes, u8 rank, u32 dims[rank], f32 data.

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace oiqa
