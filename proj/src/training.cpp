#include "oiqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "oiqa/error.hpp"
#include "oiqa/metrics.hpp"

namespace oiqa {

void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                const AdamWConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adamw_step: gradient map does not match parameters");
  if (state.first_moment.empty()) {
    for (const auto& [name, p] : params) {
      state.first_moment.emplace(name, Tensor::zeros_like(p));
      state.second_moment.emplace(name, Tensor::zeros_like(p));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const auto g = grads.find(name);
    if (g == grads.end() || !g->second.same_shape(p)) {
      throw ShapeError("adamw_step: gradient for " + name + " missing or misshapen");
    }
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    if (!m.same_shape(p)) throw ShapeError("adamw_step: moment shape mismatch for " + name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g->second[i];
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::vector<ManifestRow> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == tag) out.push_back(r);
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw InputError("cannot open manifest " + csv.string());
  const auto base = csv.parent_path();
  std::string line;
  if (!std::getline(is, line)) throw FormatError("manifest " + csv.string() + " is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (split_csv_line(line) != std::vector<std::string>{"path", "mos", "split"}) {
    throw FormatError("manifest header must be 'path,mos,split'");
  }
  DatasetManifest m;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 3 fields");
    ManifestRow row;
    row.path = std::filesystem::path(f[0]);
    if (row.path.is_relative()) row.path = base / row.path;
    std::size_t used = 0;
    try {
      row.mos = std::stod(f[1], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f[1].size() || !std::isfinite(row.mos)) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad MOS '" + f[1] + "'");
    }
    row.split = f[2];
    if (!std::filesystem::exists(row.path)) {
      throw InputError("manifest line " + std::to_string(lineno) + ": missing " + row.path.string());
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const std::filesystem::path& csv, const DatasetManifest& manifest) {
  std::ofstream os(csv);
  if (!os) throw InputError("cannot write manifest " + csv.string());
  os << "path,mos,split\n";
  const auto base = csv.parent_path();
  for (const auto& r : manifest.rows) {
    auto rel = r.path.lexically_relative(base.empty() ? "." : base);
    std::ostringstream mos;
    mos.precision(17);
    mos << r.mos;
    os << (rel.empty() ? r.path : rel).generic_string() << ',' << mos.str() << ',' << r.split << '\n';
  }
}

PreparedSample prepare_entry(const std::filesystem::path& path, const ModelConfig& config) {
  if (std::filesystem::is_directory(path)) {
    PreparedSample s;
    s.points = fibonacci_sample(config.num_viewports);
    for (std::size_t k = 0; k < config.num_viewports; ++k) {
      s.stage_maps.push_back(read_stage_maps(path / ("vp_" + std::to_string(k) + ".oiqf")));
    }
    return s;
  }
  return prepare_sample(load_image(path), config);
}

ErpImage synthetic_erp(std::size_t width, std::size_t height, double noise, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  auto uniform = [&] { return unit_uniform(engine()); };
  ErpImage img{Tensor({3, height, width})};
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < 3; ++c) {
    const double fx = 1.0 + std::floor(3.0 * uniform());  // integer cycles keep the seam continuous
    const double fy = 0.5 + 1.5 * uniform();
    const double phase_x = two_pi * uniform(), phase_y = two_pi * uniform();
    const double base = 0.35 + 0.3 * uniform();
    for (std::size_t y = 0; y < height; ++y) {
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(height);
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(width);
        img.pixels(c, y, x) = base + 0.2 * std::sin(two_pi * fx * u + phase_x) * std::cos(std::numbers::pi * fy * v + phase_y);
      }
    }
  }
  // Box-Muller noise, drawn pixel by pixel in a fixed order.
  for (double& p : img.pixels.data()) {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    p = std::clamp(p + noise * n, 0.0, 1.0);
  }
  return img;
}

DatasetManifest generate_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& o) {
  if (o.count == 0) throw InputError("synthetic dataset needs at least one image");
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  std::mt19937_64 engine(o.seed);
  for (std::size_t i = 0; i < o.count; ++i) {
    const double level = o.count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(o.count - 1);
    const double noise = level * o.max_noise;
    const ErpImage img = synthetic_erp(o.width, o.height, noise, engine());
    const auto path = dir / ("img_" + std::to_string(i) + ".png");
    save_png(path, img.pixels);
    m.rows.push_back({path, o.mos_max - (o.mos_max - o.mos_min) * level, "train"});
  }
  write_manifest(dir / "manifest.csv", m);
  return m;
}

namespace {

void shuffle(std::vector<std::size_t>& idx, std::mt19937_64& engine) {
  for (std::size_t i = idx.size(); i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(engine() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
}

}  // namespace

TrainResult train(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                  const ModelConfig& config, const TrainConfig& tc, std::uint64_t seed,
                  const ModelParams* initial, const EpochCallback& on_epoch) {
  if (samples.empty()) throw InputError("train: empty training set");
  if (samples.size() != targets.size()) throw InputError("train: sample/target count mismatch");
  if (tc.batch_size == 0) throw ConfigError("train: batch size must be positive");
  TrainResult result;
  result.params = initial ? *initial : init_model_params(config, seed);
  check_params(result.params, model_param_specs(config));
  OptimizerState state;
  std::mt19937_64 engine(seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, engine);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      if (tc.max_steps && result.steps >= tc.max_steps) break;
      std::vector<TrainingExample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i) {
        batch.push_back({&samples[order[i]], targets[order[i]]});
      }
      const LossAndGradients lg = forward_with_gradients(batch, result.params, config);
      adamw_step(result.params, lg.gradients, state, tc.optimizer);
      loss_sum += lg.loss;
      ++batches;
      ++result.steps;
    }
    if (batches == 0) break;
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

TrainResult train(const DatasetManifest& manifest, const ModelConfig& config, const TrainConfig& tc,
                  std::uint64_t seed, const EpochCallback& on_epoch) {
  auto rows = manifest.split("train");
  if (rows.empty()) rows = manifest.rows;
  if (rows.empty()) throw InputError("train: manifest has no rows");
  std::vector<PreparedSample> samples;
  std::vector<double> targets;
  for (const auto& r : rows) {
    samples.push_back(prepare_entry(r.path, config));
    targets.push_back(r.mos);
  }
  return train(samples, targets, config, tc, seed, nullptr, on_epoch);
}

Evaluation evaluate(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                    const ModelParams& params, const ModelConfig& config, bool logistic) {
  Evaluation e;
  e.targets = targets;
  for (const auto& s : samples) e.predictions.push_back(forward(s, params, config));
  const auto mapped = logistic ? logistic_remap(e.predictions, targets) : e.predictions;
  e.plcc = plcc(mapped, targets);
  e.srcc = srcc(e.predictions, targets);
  e.rmse = rmse(mapped, targets);
  return e;
}

double dataset_loss(const std::vector<PreparedSample>& samples, const std::vector<double>& targets,
                    const ModelParams& params, const ModelConfig& config) {
  double s = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = forward(samples[i], params, config) - targets[i];
    s += r * r;
  }
  return s / static_cast<double>(samples.size());
}

}  // namespace oiqa
