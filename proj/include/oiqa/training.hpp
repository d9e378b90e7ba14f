#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oiqa/model.hpp"

namespace oiqa {

// ---- optimizer ---------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::uint64_t step = 0;
};

/// Decoupled weight decay followed by the bias-corrected Adam update:
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                const AdamWConfig& config);

// ---- datasets ------------------------------------------------------------------

struct ManifestRow {
  std::filesystem::path path;  // resolved against the manifest directory
  double mos = 0.0;
  std::string split;
};

/// CSV with header `path,mos,split`.
struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> split(const std::string& tag) const;
};

/// Throws InputError for a missing file or path, FormatError for malformed rows.
DatasetManifest load_manifest(const std::filesystem::path& csv);
void write_manifest(const std::filesystem::path& csv, const DatasetManifest& manifest);

/// Loads one manifest entry: an ERP image (sampled and projected per config) or
/// a directory of precomputed `vp_<k>.oiqf` stage-map files.
PreparedSample prepare_entry(const std::filesystem::path& path, const ModelConfig& config);

struct SyntheticOptions {
  std::size_t count = 16;
  std::size_t width = 128;
  std::size_t height = 64;
  double max_noise = 0.25;
  double mos_min = 1.0;
  double mos_max = 5.0;
  std::uint64_t seed = 0;
};

/// Procedural ERP images (smooth color gradients plus Gaussian noise). The
/// MOS falls linearly with the noise level. Writes `img_<i>.png` and
/// `manifest.csv` (all rows tagged "train") into `dir`.
DatasetManifest generate_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options);
ErpImage synthetic_erp(std::size_t width, std::size_t height, double noise, std::uint64_t seed);

// ---- training loop ---------------------------------------------------------------

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t batch_size = 4;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0 = no cap
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Deterministic given `seed`: parameters are initialized from it (unless
/// `initial` is provided) and each epoch is shuffled by seeded Fisher-Yates.
TrainResult train(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                  const ModelConfig& config, const TrainConfig& train_config, std::uint64_t seed,
                  const ModelParams* initial = nullptr, const EpochCallback& on_epoch = {});

TrainResult train(const DatasetManifest& manifest, const ModelConfig& config, const TrainConfig& train_config,
                  std::uint64_t seed, const EpochCallback& on_epoch = {});

struct Evaluation {
  std::vector<double> predictions;
  std::vector<double> targets;
  double plcc = 0.0;
  double srcc = 0.0;
  double rmse = 0.0;
};

Evaluation evaluate(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                    const ModelParams& params, const ModelConfig& config, bool logistic = false);

/// Mean squared error of the model over a sample set.
double dataset_loss(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                    const ModelParams& params, const ModelConfig& config);

}  // namespace oiqa
