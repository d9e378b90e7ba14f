#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "oiqa/model.hpp"
#include "oiqa/training.hpp"

namespace oiqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Model and training settings read from a `--config` JSON document.
struct Settings {
  ModelConfig model;
  TrainConfig training;
  bool logistic = false;
};

/// Starts from the "preset" key ("default" or "desk") and applies every other
/// key on top. Unknown keys and invalid values throw ConfigError.
Settings parse_settings(const std::string& json_text);
Settings load_settings(const std::string& path);

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oiqa::cli
