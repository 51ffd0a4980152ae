#pragma once

#include <ostream>
#include <string>

namespace ensot {

/// Exit codes of `run`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct RunOptions {
  std::string out_dir;   // overrides the config's "out_dir" when nonempty
  std::string base_dir;  // resolves relative CSV paths in the config
};

/// Runs one JSON-configured command. Artifacts go to the output directory, a
/// summary JSON to `out`, and failures to `err` as {"error": {...}}.
int run(const std::string& config_json, std::ostream& out, std::ostream& err,
        const RunOptions& opts = {});

/// Reads the config from a file; relative paths resolve against its directory.
int run_file(const std::string& path, std::ostream& out, std::ostream& err,
             const RunOptions& opts = {});

}  // namespace ensot
