#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <vector>

#include "oiqa/autodiff.hpp"
#include "oiqa/params.hpp"
#include "oiqa/viewport_projector.hpp"

namespace oiqa {

/// Four multi-scale feature maps of one viewport, each [C_i x h_i x w_i].
/// For an H x W input the spatial sizes are H/8, H/16, H/32 and H/32.
struct StageMaps {
  std::array<Tensor, 4> maps;
};

using StageChannels = std::array<std::size_t, 4>;

inline constexpr StageChannels kDefaultStageChannels{32, 64, 128, 128};

struct FcsDims {
  StageChannels in_channels = kDefaultStageChannels;
  std::size_t unified = 192;  // per-stage C; the node embedding is 4C
  std::size_t reduction = 4;  // channel-attention bottleneck ratio
  std::size_t spatial_kernel = 7;

  std::size_t hidden() const { return unified / reduction > 0 ? unified / reduction : 1; }
};

/// Produces StageMaps for a viewport on a tape. The trainable convolutional
/// stub and precomputed external features both implement this.
class StageMapProvider {
 public:
  virtual ~StageMapProvider() = default;
  virtual std::array<ad::Var, 4> stages(BoundParams& params, std::size_t viewport_index,
                                        const Tensor& viewport_chw) const = 0;
};

/// Strided convolutional stand-in for a hierarchical vision backbone:
/// 8x8/8, 2x2/2, 2x2/2 and 3x3/1 convolutions, each followed by GELU.
class ConvStubBackbone final : public StageMapProvider {
 public:
  explicit ConvStubBackbone(StageChannels channels = kDefaultStageChannels) : channels_(channels) {}

  std::array<ad::Var, 4> stages(BoundParams& params, std::size_t viewport_index,
                                const Tensor& viewport_chw) const override;

  static void declare_params(ParamSpecs& specs, StageChannels channels);
  const StageChannels& channels() const { return channels_; }

 private:
  StageChannels channels_;
};

/// Feeds StageMaps loaded from disk; contributes no trainable parameters.
class PrecomputedStageMaps final : public StageMapProvider {
 public:
  explicit PrecomputedStageMaps(std::vector<StageMaps> maps) : maps_(std::move(maps)) {}

  std::array<ad::Var, 4> stages(BoundParams& params, std::size_t viewport_index,
                                const Tensor& viewport_chw) const override;

 private:
  std::vector<StageMaps> maps_;
};

/// Value-level backbone pass. Throws ConfigError when the viewport side is
/// not a multiple of 32.
StageMaps backbone_forward(const Viewport& viewport, const ModelParams& params,
                           StageChannels channels = kDefaultStageChannels);
StageMaps backbone_forward(const Tensor& viewport_chw, const ModelParams& params,
                           StageChannels channels = kDefaultStageChannels);

void declare_fcs_params(ParamSpecs& specs, const FcsDims& dims);

/// Feature Context Synthesizer for one stage: 1x1 projection to C channels,
/// channel attention, spatial attention, global average pooling -> [1 x C].
ad::Var fcs_stage(BoundParams& params, std::size_t stage, ad::Var map, const FcsDims& dims);

/// Concatenation of the four stage descriptors -> [1 x 4C].
ad::Var fcs_fuse(BoundParams& params, const std::array<ad::Var, 4>& maps, const FcsDims& dims);
Tensor fcs_fuse(const StageMaps& maps, const ModelParams& params, const FcsDims& dims);

// ---- external feature files ----------------------------------------------
// Little-endian: "OIQF", u32 version, 4 x (u32 channels, u32 h, u32 w),
// then the four maps as f32, channel-major row-major.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void write_stage_maps(const std::filesystem::path& path, const StageMaps& maps);
StageMaps read_stage_maps(const std::filesystem::path& path);

}  // namespace oiqa
