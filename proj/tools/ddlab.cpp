// ddlab command line: train, analyze, report.
//
// Exit codes: 0 success, 1 bad input (config, files, arguments), 2 anything
// else.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ddlab/analysis.hpp"
#include "ddlab/config.hpp"
#include "ddlab/error.hpp"
#include "ddlab/report.hpp"
#include "ddlab/trainer.hpp"

namespace {

constexpr int kExitUserError = 1;
constexpr int kExitInternal = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Epoch-wise training dynamics lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::uint64_t until = 0;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a network, resuming from its checkpoint if present");
  train->add_option("-c,--config", config_path, "TOML run configuration")->required();
  train->add_option("-o,--output", output_dir, "Run directory (overrides output_dir)");
  train->add_option("--until", until, "Stop after the last probe epoch not above N");
  train->add_flag("-q,--quiet", quiet, "No progress lines");

  std::string run_dir;
  auto* analyze = app.add_subcommand("analyze", "Compute similarity and large-activation tables");
  analyze->add_option("run", run_dir, "Run directory")->required();
  auto* report = app.add_subcommand("report", "Render SVG figures from an analyzed run");
  report->add_option("run", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUserError;
  }

  try {
    if (*train) {
      ddlab::RunConfig config = ddlab::load_run_config(config_path);
      if (!output_dir.empty()) config.output_dir = output_dir;
      ddlab::TrainOptions options;
      options.stop_after = until;
      if (!quiet) options.log = &std::cerr;
      ddlab::run_training(config, options);
    } else if (*analyze) {
      ddlab::run_analysis(run_dir);
    } else if (*report) {
      ddlab::run_report(run_dir);
    }
  } catch (const ddlab::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const ddlab::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
