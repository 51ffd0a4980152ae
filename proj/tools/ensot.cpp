#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ensot/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Ensemble state tracking by optimal transport"};
  std::string config;
  ensot::RunOptions opts;
  app.add_option("config", config, "JSON run configuration")->required();
  app.add_option("-o,--out-dir", opts.out_dir, "Output directory (overrides out_dir)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ensot::kExitValidation;
  }
  return ensot::run_file(config, std::cout, std::cerr, opts);
}
