#pragma once

// Subcommand drivers shared by the command-line tool and the tests. Each
// command resolves its configuration, writes its data products into the
// output directory, and finishes with an atomically renamed manifest.json
// whose presence marks a complete run.

#include <string>

#include "nhim/config.hpp"

namespace nhim {

struct CliOptions {
  int workers = -1;     ///< >= 0 overrides the config value
  std::string out_dir;  ///< nonempty overrides the config value
  /// Stop after configuration resolution and seed construction: validates
  /// the full pipeline setup and writes a manifest, but skips the heavy
  /// computation and its outputs.
  bool seed_only = false;
};

/// Runs one of: ld-map, po-family, manifolds, psection, validate-nhim.
/// Throws ConfigError for configuration problems and NumericalError when a
/// computation fails.
void run_command(const std::string& command, const RunConfig& cfg,
                 const CliOptions& cli);

}  // namespace nhim
