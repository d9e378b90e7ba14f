#include "oiqa/feature_extraction.hpp"

#include <fstream>

#include "oiqa/binary_io.hpp"
#include "oiqa/error.hpp"

namespace oiqa {
namespace {

struct StageConv {
  std::size_t kernel;
  kernels::Conv2dGeometry geometry;
};

constexpr std::array<StageConv, 4> kStageConvs{{
    {8, {8, 0}},
    {2, {2, 0}},
    {2, {2, 0}},
    {3, {1, 1}},
}};

std::string stage_name(std::size_t i) { return "backbone.stage" + std::to_string(i); }
std::string fcs_name(std::size_t i) { return "fcs." + std::to_string(i); }

void add_conv(ParamSpecs& specs, const std::string& prefix, std::size_t out, std::size_t in,
              std::size_t kh, std::size_t kw) {
  specs.push_back({prefix + ".weight", {out, in, kh, kw}, Init::XavierUniform, in * kh * kw, out * kh * kw});
  specs.push_back({prefix + ".bias", {out}, Init::Zeros, 0, 0});
}

}  // namespace

void ConvStubBackbone::declare_params(ParamSpecs& specs, StageChannels channels) {
  std::size_t in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    add_conv(specs, stage_name(i), channels[i], in, kStageConvs[i].kernel, kStageConvs[i].kernel);
    in = channels[i];
  }
}

std::array<ad::Var, 4> ConvStubBackbone::stages(BoundParams& params, std::size_t,
                                                const Tensor& viewport_chw) const {
  if (viewport_chw.rank() != 3 || viewport_chw.dim(0) != 3) {
    throw ShapeError("backbone expects a [3 x H x W] viewport, got " + shape_string(viewport_chw.shape()));
  }
  if (viewport_chw.dim(1) % 32 != 0 || viewport_chw.dim(2) % 32 != 0 || viewport_chw.dim(1) == 0) {
    throw ConfigError("backbone: viewport size " + std::to_string(viewport_chw.dim(1)) + "x" +
                      std::to_string(viewport_chw.dim(2)) + " is not a positive multiple of 32");
  }
  std::array<ad::Var, 4> out;
  ad::Var x = params.tape().constant(viewport_chw);
  for (std::size_t i = 0; i < 4; ++i) {
    x = ad::gelu(ad::conv2d(x, params(stage_name(i) + ".weight"), params(stage_name(i) + ".bias"),
                            kStageConvs[i].geometry));
    out[i] = x;
  }
  return out;
}

std::array<ad::Var, 4> PrecomputedStageMaps::stages(BoundParams& params, std::size_t viewport_index,
                                                    const Tensor&) const {
  if (viewport_index >= maps_.size()) {
    throw InputError("no precomputed features for viewport " + std::to_string(viewport_index));
  }
  std::array<ad::Var, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = params.tape().constant(maps_[viewport_index].maps[i]);
  return out;
}

StageMaps backbone_forward(const Viewport& viewport, const ModelParams& params, StageChannels channels) {
  return backbone_forward(viewport.pixels, params, channels);
}

StageMaps backbone_forward(const Tensor& viewport_chw, const ModelParams& params, StageChannels channels) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  const auto vars = ConvStubBackbone(channels).stages(bound, 0, viewport_chw);
  StageMaps maps;
  for (std::size_t i = 0; i < 4; ++i) maps.maps[i] = vars[i].value();
  return maps;
}

void declare_fcs_params(ParamSpecs& specs, const FcsDims& dims) {
  const std::size_t c = dims.unified, hidden = dims.hidden(), k = dims.spatial_kernel;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string p = fcs_name(i);
    add_conv(specs, p + ".proj", c, dims.in_channels[i], 1, 1);
    add_matrix(specs, p + ".ca.fc1.weight", c, hidden);
    add_bias(specs, p + ".ca.fc1.bias", hidden);
    add_matrix(specs, p + ".ca.fc2.weight", hidden, c);
    add_bias(specs, p + ".ca.fc2.bias", c);
    add_conv(specs, p + ".sa.conv", 1, 2, k, k);
  }
}

ad::Var fcs_stage(BoundParams& params, std::size_t stage, ad::Var map, const FcsDims& dims) {
  const std::string p = fcs_name(stage);
  if (map.value().rank() != 3 || map.value().dim(0) != dims.in_channels[stage]) {
    throw ShapeError("fcs stage " + std::to_string(stage) + ": expected " +
                     std::to_string(dims.in_channels[stage]) + " input channels, got map " +
                     shape_string(map.value().shape()));
  }
  ad::Var projected = ad::conv2d(map, params(p + ".proj.weight"), params(p + ".proj.bias"), {1, 0});

  // Channel attention: squeeze, bottleneck, sigmoid gate per channel.
  ad::Var squeezed = ad::global_avg_pool(projected);
  ad::Var hidden = ad::gelu(ad::add_row(ad::matmul(squeezed, params(p + ".ca.fc1.weight")),
                                        params(p + ".ca.fc1.bias")));
  ad::Var channel_gate = ad::sigmoid(
      ad::add_row(ad::matmul(hidden, params(p + ".ca.fc2.weight")), params(p + ".ca.fc2.bias")));
  ad::Var ca = ad::scale_channels(projected, channel_gate);

  // Spatial attention: channel mean/max -> k x k conv -> sigmoid gate per pixel.
  const std::size_t pad = dims.spatial_kernel / 2;
  ad::Var spatial_gate = ad::sigmoid(ad::conv2d(ad::channel_mean_max(ca), params(p + ".sa.conv.weight"),
                                                params(p + ".sa.conv.bias"), {1, pad}));
  ad::Var sa = ad::scale_spatial(ca, spatial_gate);
  return ad::global_avg_pool(sa);
}

ad::Var fcs_fuse(BoundParams& params, const std::array<ad::Var, 4>& maps, const FcsDims& dims) {
  std::array<ad::Var, 4> pooled;
  for (std::size_t i = 0; i < 4; ++i) pooled[i] = fcs_stage(params, i, maps[i], dims);
  return ad::concat_cols(pooled);
}

Tensor fcs_fuse(const StageMaps& maps, const ModelParams& params, const FcsDims& dims) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  std::array<ad::Var, 4> vars;
  for (std::size_t i = 0; i < 4; ++i) vars[i] = tape.constant(maps.maps[i]);
  return fcs_fuse(bound, vars, dims).value();
}

void write_stage_maps(const std::filesystem::path& path, const StageMaps& maps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("OIQF", 4);
  binio::write_le<std::uint32_t>(os, kFeatureFormatVersion);
  for (const Tensor& m : maps.maps) {
    if (m.rank() != 3) throw ShapeError("stage map must be [C x H x W]");
    for (std::size_t a = 0; a < 3; ++a) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.dim(a)));
  }
  for (const Tensor& m : maps.maps)
    for (double v : m.data()) binio::write_f32(os, v);
  if (!os) throw InputError("failed writing " + path.string());
}

StageMaps read_stage_maps(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open feature file " + path.string());
  binio::expect_magic(is, "OIQF", "feature file");
  const auto version = binio::read_le<std::uint32_t>(is, "version");
  if (version != kFeatureFormatVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version));
  }
  std::array<Tensor::Shape, 4> shapes;
  for (auto& s : shapes) {
    for (int a = 0; a < 3; ++a) s.push_back(binio::read_le<std::uint32_t>(is, "stage shape"));
    if (shape_numel(s) == 0 || shape_numel(s) > (std::size_t{1} << 28)) {
      throw FormatError("implausible stage shape " + shape_string(s));
    }
  }
  StageMaps maps;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor t(shapes[i]);
    for (double& v : t.data()) v = binio::read_f32(is, "stage data");
    maps.maps[i] = std::move(t);
  }
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("trailing bytes in feature file " + path.string());
  }
  return maps;
}

}  // namespace oiqa
