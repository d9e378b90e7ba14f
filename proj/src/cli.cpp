#include "oiqa/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "oiqa/error.hpp"
#include "oiqa/gradcheck.hpp"
#include "oiqa/kernels.hpp"
#include "oiqa/metrics.hpp"

namespace oiqa::cli {
namespace {

using nlohmann::json;

// ---- output formatting -----------------------------------------------------

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Floats are written with 17 significant digits.
void write_json(const json& j, std::ostream& os, int indent = 0) {
  const std::string pad(static_cast<std::size_t>(indent) + 2, ' '), close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(it.key()).dump() << ": ";
        write_json(it.value(), os, indent + 2);
      }
      os << '\n' << close << '}';
      return;
    }
    case json::value_t::array: {
      const bool flat = std::none_of(j.begin(), j.end(), [](const json& e) { return e.is_structured(); });
      if (flat) {
        os << '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(j[i], os, indent);
        }
        os << ']';
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(j[i], os, indent + 2);
      }
      os << '\n' << close << ']';
      return;
    }
    case json::value_t::number_float:
      os << format_number(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

void emit_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    write_json(j, out);
    out << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path);
  write_json(j, os);
  os << '\n';
  if (!os) throw InputError("failed writing " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---- settings ------------------------------------------------------------------

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

Interpolation parse_interpolation(const std::string& s) {
  if (s == "bilinear") return Interpolation::Bilinear;
  if (s == "nearest") return Interpolation::Nearest;
  throw ConfigError("interpolation must be 'bilinear' or 'nearest', got '" + s + "'");
}

}  // namespace

Settings parse_settings(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  Settings s;
  if (doc.contains("preset")) {
    const auto preset = get_as<std::string>(doc["preset"], "preset");
    if (preset == "desk") {
      s.model = ModelConfig::desk();
    } else if (preset != "default") {
      throw ConfigError("unknown preset '" + preset + "' (expected 'default' or 'desk')");
    }
  }
  ModelConfig& m = s.model;
  TrainConfig& t = s.training;
  const std::map<std::string, std::function<void(const json&, const std::string&)>> setters{
      {"preset", [](const json&, const std::string&) {}},
      {"num_viewports", [&](const json& v, const std::string& k) { m.num_viewports = get_count(v, k); }},
      {"k", [&](const json& v, const std::string& k) { m.k = get_count(v, k); }},
      {"node_dim", [&](const json& v, const std::string& k) { m.node_dim = get_count(v, k); }},
      {"gat_layers", [&](const json& v, const std::string& k) { m.gat_layers = get_count(v, k); }},
      {"heads", [&](const json& v, const std::string& k) { m.heads = get_count(v, k); }},
      {"encoder_layers", [&](const json& v, const std::string& k) { m.encoder_layers = get_count(v, k); }},
      {"fov", [&](const json& v, const std::string& k) { m.fov = get_as<double>(v, k); }},
      {"viewport_size", [&](const json& v, const std::string& k) { m.viewport_size = get_count(v, k); }},
      {"pe_frequencies", [&](const json& v, const std::string& k) { m.pe_frequencies = get_count(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { m.seed = get_count(v, k); }},
      {"backbone_channels",
       [&](const json& v, const std::string& k) {
         if (!v.is_array() || v.size() != 4) throw ConfigError("config key 'backbone_channels' needs 4 integers");
         for (std::size_t i = 0; i < 4; ++i) m.backbone_channels[i] = get_count(v[i], k);
       }},
      {"head_hidden", [&](const json& v, const std::string& k) { m.head_hidden = get_count(v, k); }},
      {"ffn_expansion", [&](const json& v, const std::string& k) { m.ffn_expansion = get_count(v, k); }},
      {"ca_reduction", [&](const json& v, const std::string& k) { m.ca_reduction = get_count(v, k); }},
      {"sa_kernel", [&](const json& v, const std::string& k) { m.sa_kernel = get_count(v, k); }},
      {"interpolation",
       [&](const json& v, const std::string& k) { m.interpolation = parse_interpolation(get_as<std::string>(v, k)); }},
      {"lr", [&](const json& v, const std::string& k) { t.optimizer.lr = get_as<double>(v, k); }},
      {"beta1", [&](const json& v, const std::string& k) { t.optimizer.beta1 = get_as<double>(v, k); }},
      {"beta2", [&](const json& v, const std::string& k) { t.optimizer.beta2 = get_as<double>(v, k); }},
      {"eps", [&](const json& v, const std::string& k) { t.optimizer.eps = get_as<double>(v, k); }},
      {"weight_decay", [&](const json& v, const std::string& k) { t.optimizer.weight_decay = get_as<double>(v, k); }},
      {"batch_size", [&](const json& v, const std::string& k) { t.batch_size = get_count(v, k); }},
      {"epochs", [&](const json& v, const std::string& k) { t.epochs = get_count(v, k); }},
      {"max_steps", [&](const json& v, const std::string& k) { t.max_steps = get_count(v, k); }},
      {"logistic", [&](const json& v, const std::string& k) { s.logistic = get_as<bool>(v, k); }},
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto setter = setters.find(it.key());
    if (setter == setters.end()) throw ConfigError("unknown config key '" + it.key() + "'");
    setter->second(it.value(), it.key());
  }
  m.validate();
  if (t.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(t.optimizer.lr >= 0.0) || !(t.optimizer.eps > 0.0)) throw ConfigError("lr must be >= 0 and eps > 0");
  return s;
}

Settings load_settings(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_settings(ss.str());
}

namespace {

// ---- points files ----------------------------------------------------------------

json points_to_json(const std::vector<SpherePoint>& pts) {
  json arr = json::array();
  for (const auto& p : pts) {
    arr.push_back({{"k", p.index},
                   {"theta", p.theta},
                   {"psi", p.psi},
                   {"lat", p.lat},
                   {"lon", p.lon},
                   {"xyz", {p.xyz[0], p.xyz[1], p.xyz[2]}}});
  }
  return arr;
}

std::vector<SpherePoint> read_points(const std::string& path) {
  const json doc = read_json_file(path);
  if (!doc.is_array()) throw FormatError(path + ": expected a JSON array of points");
  std::vector<SpherePoint> pts;
  constexpr double kDeg = std::numbers::pi / 180.0;
  try {
    for (const auto& e : doc) {
      const std::size_t k = e.contains("k") ? e.at("k").get<std::size_t>() : pts.size();
      if (e.contains("theta") && e.contains("psi")) {
        pts.push_back(make_sphere_point(k, e.at("theta").get<double>(), e.at("psi").get<double>()));
      } else {
        pts.push_back(make_sphere_point(k, (e.at("lat").get<double>() + 90.0) * kDeg,
                                        (e.at("lon").get<double>() + 180.0) * kDeg));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed point entry (" + e.what() + ")");
  }
  return pts;
}

// ---- subcommands -------------------------------------------------------------------

struct Options {
  std::string config, output, input, points, outdir, manifest, weights, split, sampler = "both", format = "csv",
                                                                              interpolation = "bilinear";
  std::size_t count = kDefaultViewportCount, k = kDefaultNeighbors, size = kDefaultViewportSize,
              max_entries = 0, width = 128, height = 64;
  double fov = kDefaultFovDegrees, max_noise = 0.25;
  std::uint64_t seed = 0;
  bool seed_given = false, logistic = false, detail = false;
};

Settings settings_for(const Options& o, bool desk_default = false) {
  if (!o.config.empty()) return load_settings(o.config);
  Settings s;
  if (desk_default) s.model = ModelConfig::desk();
  return s;
}

int cmd_sample(const Options& o, std::ostream& out) {
  emit_json(points_to_json(fibonacci_sample(o.count)), o.output, out);
  return kExitOk;
}

int cmd_graph(const Options& o, std::ostream& out) {
  const auto pts = read_points(o.points);
  const ViewportGraph g = build_graph(pts, o.k);
  json edges = json::array(), coords = json::array();
  for (const auto& [s, d] : g.edges) edges.push_back({s, d});
  for (const auto& p : pts) coords.push_back({p.lat, p.lon});
  emit_json({{"num_nodes", g.num_nodes}, {"k", g.k}, {"edges", edges}, {"coords", coords}}, o.output, out);
  return kExitOk;
}

int cmd_extract(const Options& o, std::ostream&) {
  const ErpImage erp = load_image(o.input);
  const auto pts = read_points(o.points);
  const auto vps = extract_all(erp, pts, o.fov, o.size, parse_interpolation(o.interpolation));
  std::filesystem::create_directories(o.outdir);
  json entries = json::array();
  for (std::size_t i = 0; i < vps.size(); ++i) {
    const std::string name = "vp_" + std::to_string(pts[i].index) + ".png";
    save_png(std::filesystem::path(o.outdir) / name, vps[i].pixels);
    entries.push_back({{"k", pts[i].index}, {"lat", vps[i].center.lat}, {"lon", vps[i].center.lon}, {"file", name}});
  }
  emit_json({{"source", o.input},
             {"fov", o.fov},
             {"size", o.size},
             {"interpolation", o.interpolation},
             {"viewports", entries}},
            (std::filesystem::path(o.outdir) / "manifest.json").string(), std::cout);
  return kExitOk;
}

std::vector<PreparedSample> prepare_rows(const std::vector<ManifestRow>& rows, const ModelConfig& c,
                                         std::vector<double>& targets) {
  std::vector<PreparedSample> samples;
  for (const auto& r : rows) {
    samples.push_back(prepare_entry(r.path, c));
    targets.push_back(r.mos);
  }
  return samples;
}

int cmd_train(const Options& o, std::ostream&, std::ostream& err) {
  Settings s = settings_for(o);
  if (o.seed_given) s.model.seed = o.seed;
  const DatasetManifest manifest = load_manifest(o.manifest);
  auto rows = manifest.split(o.split.empty() ? "train" : o.split);
  if (rows.empty() && o.split.empty()) rows = manifest.rows;
  if (rows.empty()) throw InputError("manifest has no rows for split '" + o.split + "'");
  std::vector<double> targets;
  const auto samples = prepare_rows(rows, s.model, targets);
  const TrainResult r = train(samples, targets, s.model, s.training, s.model.seed, nullptr,
                              [&](std::size_t epoch, double loss) {
                                err << "epoch " << epoch + 1 << " loss " << format_number(loss) << '\n';
                              });
  save_params(r.params, o.output);
  err << "wrote " << o.output << " after " << r.steps << " steps\n";
  return kExitOk;
}

ModelParams load_checked(const std::string& path, const ModelConfig& c) {
  ModelParams p = load_params(path);
  try {
    check_params(p, model_param_specs(c));
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (weights do not match the model config; pass --config)");
  }
  return p;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Settings s = settings_for(o);
  const ModelParams p = load_checked(o.weights, s.model);
  const DatasetManifest manifest = load_manifest(o.manifest);
  const auto rows = o.split.empty() ? manifest.rows : manifest.split(o.split);
  if (rows.empty()) throw InputError("no manifest rows to evaluate");
  std::vector<double> targets;
  const auto samples = prepare_rows(rows, s.model, targets);
  const Evaluation e = evaluate(samples, targets, p, s.model, s.logistic || o.logistic);
  out << "PLCC=" << fixed6(e.plcc) << '\n' << "SRCC=" << fixed6(e.srcc) << '\n' << "RMSE=" << fixed6(e.rmse) << '\n';
  return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out) {
  const Settings s = settings_for(o);
  const ModelParams p = load_checked(o.weights, s.model);
  out << "score=" << fixed6(forward(prepare_entry(o.input, s.model), p, s.model)) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  const Settings s = settings_for(o, true);
  GradcheckOptions opts;
  opts.max_entries_per_tensor = o.max_entries;
  const GradcheckReport r = gradcheck_model(s.model, o.seed, opts);
  constexpr double kTolerance = 1e-3;
  out << "group,max_rel_error\n";
  bool ok = true;
  for (const auto& [group, e] : r.group_errors()) {
    out << group << ',' << format_number(e) << '\n';
    ok = ok && e < kTolerance;
  }
  err << r.entries_checked() << " entries checked, max relative error " << format_number(r.max_rel_error())
      << (ok ? "" : " exceeds 1e-3") << '\n';
  return ok ? kExitOk : kExitDomain;
}

std::vector<SpherePoint> grid_for(std::size_t n) {
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= n; ++r)
    if (n % r == 0) rows = r;
  return latlong_grid(rows, n / rows);
}

int cmd_uniformity(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::vector<SpherePoint>>> sets;
  if (o.sampler == "fibonacci" || o.sampler == "both") sets.emplace_back("fibonacci", fibonacci_sample(o.count));
  if (o.sampler == "grid" || o.sampler == "both") sets.emplace_back("latlong_grid", grid_for(o.count));
  if (o.format == "json") {
    json doc = json::array();
    for (const auto& [name, pts] : sets) {
      const UniformityStats st = uniformity_stats(pts);
      json entry{{"sampler", name},     {"count", st.count},   {"min_nn", st.min_nn}, {"max_nn", st.max_nn},
                 {"mean_nn", st.mean_nn}, {"cv_nn", st.cv_nn}, {"ratio_nn", st.ratio_nn}};
      if (o.detail) entry["nn"] = st.nn;
      doc.push_back(entry);
    }
    emit_json(doc, o.output, out);
    return kExitOk;
  }
  std::ostringstream csv;
  if (o.detail) {
    csv << "sampler,k,lat,lon,nn\n";
    for (const auto& [name, pts] : sets) {
      const UniformityStats st = uniformity_stats(pts);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        csv << name << ',' << i << ',' << format_number(pts[i].lat) << ',' << format_number(pts[i].lon) << ','
            << format_number(st.nn[i]) << '\n';
      }
    }
  } else {
    csv << "sampler,count,min_nn,max_nn,mean_nn,cv_nn,ratio_nn\n";
    for (const auto& [name, pts] : sets) {
      const UniformityStats st = uniformity_stats(pts);
      csv << name << ',' << st.count << ',' << format_number(st.min_nn) << ',' << format_number(st.max_nn) << ','
          << format_number(st.mean_nn) << ',' << format_number(st.cv_nn) << ',' << format_number(st.ratio_nn) << '\n';
    }
  }
  if (o.output.empty() || o.output == "-") {
    out << csv.str();
  } else {
    std::ofstream os(o.output);
    if (!(os << csv.str())) throw InputError("cannot write " + o.output);
  }
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SyntheticOptions so;
  so.count = o.count;
  so.width = o.width;
  so.height = o.height;
  so.max_noise = o.max_noise;
  so.seed = o.seed;
  generate_synthetic_dataset(o.outdir, so);
  out << (std::filesystem::path(o.outdir) / "manifest.csv").string() << '\n';
  return kExitOk;
}

void apply_thread_cap() {
  const char* env = std::getenv("OIQA_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n <= 0) throw CLI::ValidationError("OIQA_THREADS", "must be a positive integer");
  kernels::set_num_threads(static_cast<int>(n));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Omnidirectional image quality assessment with viewport graphs", "oiqa"};
  app.require_subcommand(1);
  Options o;

  auto* sample = app.add_subcommand("sample", "Fibonacci viewport centers as JSON");
  sample->add_option("--count", o.count, "number of viewports")->check(CLI::Range(2, 1000000));
  sample->add_option("--output,-o", o.output, "output file (default stdout)");

  auto* extract = app.add_subcommand("extract", "render rectilinear viewports from an ERP image");
  extract->add_option("--input,-i", o.input, "ERP image (PNG/JPEG)")->required();
  extract->add_option("--points", o.points, "points JSON from `sample`")->required();
  extract->add_option("--fov", o.fov, "field of view in degrees");
  extract->add_option("--size", o.size, "viewport side in pixels");
  extract->add_option("--interpolation", o.interpolation)->check(CLI::IsMember({"bilinear", "nearest"}));
  extract->add_option("--outdir", o.outdir, "output directory")->required();

  auto* graph = app.add_subcommand("graph", "k-nearest-neighbor viewport graph");
  graph->add_option("--points", o.points, "points JSON from `sample`")->required();
  graph->add_option("--k", o.k, "neighbors per node");
  graph->add_option("--output,-o", o.output, "output file (default stdout)");

  auto* train_cmd = app.add_subcommand("train", "train on a manifest and write weights");
  train_cmd->add_option("--manifest", o.manifest, "CSV with path,mos,split")->required();
  train_cmd->add_option("--config", o.config, "JSON config");
  train_cmd->add_option("--out,-o", o.output, "weights file")->required();
  train_cmd->add_option("--split", o.split, "manifest split to train on (default train)");
  train_cmd->add_option("--seed", o.seed, "seed for initialization and shuffling")
      ->each([&](const std::string&) { o.seed_given = true; });

  auto* eval_cmd = app.add_subcommand("eval", "PLCC/SRCC/RMSE over a manifest");
  eval_cmd->add_option("--manifest", o.manifest)->required();
  eval_cmd->add_option("--weights", o.weights)->required();
  eval_cmd->add_option("--config", o.config);
  eval_cmd->add_option("--split", o.split, "restrict to one split");
  eval_cmd->add_flag("--logistic", o.logistic, "fit a 4-parameter logistic before PLCC/RMSE");

  auto* score = app.add_subcommand("score", "quality score of one image");
  score->add_option("--input,-i", o.input, "ERP image or feature directory")->required();
  score->add_option("--weights", o.weights)->required();
  score->add_option("--config", o.config);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  grad->add_option("--seed", o.seed);
  grad->add_option("--config", o.config, "JSON config (default: desk preset)");
  grad->add_option("--max-entries", o.max_entries, "entries sampled per tensor (0 = all)");

  auto* uni = app.add_subcommand("uniformity-report", "nearest-neighbor spacing statistics");
  uni->add_option("--count", o.count)->check(CLI::Range(2, 100000));
  uni->add_option("--sampler", o.sampler)->check(CLI::IsMember({"fibonacci", "grid", "both"}));
  uni->add_option("--format", o.format)->check(CLI::IsMember({"csv", "json"}));
  uni->add_flag("--detail", o.detail, "per-point nearest-neighbor distances");
  uni->add_option("--output,-o", o.output);

  auto* synth = app.add_subcommand("synth", "write a procedural ERP dataset with manifest.csv");
  synth->add_option("--outdir", o.outdir)->required();
  synth->add_option("--count", o.count)->check(CLI::Range(1, 100000));
  synth->add_option("--width", o.width);
  synth->add_option("--height", o.height);
  synth->add_option("--max-noise", o.max_noise);
  synth->add_option("--seed", o.seed);

  if (!args.empty() && !args[0].starts_with('-') && app.get_subcommand_no_throw(args[0]) == nullptr) {
    err << "unknown subcommand '" << args[0] << "'\n" << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    apply_thread_cap();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (sample->parsed()) return cmd_sample(o, out);
    if (extract->parsed()) return cmd_extract(o, out);
    if (graph->parsed()) return cmd_graph(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (score->parsed()) return cmd_score(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out, err);
    if (uni->parsed()) return cmd_uniformity(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace oiqa::cli
