#include <algorithm>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace exlab::cli;
  CLI::App app{"exlab: excursion and level set component statistics of Gaussian fields"};
  std::string sub;
  std::filesystem::path config_path;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  app.add_option("subcommand", sub, "One of: sample count var-scan interp-scan intensity pivotal bound kacrice-check refine")
      ->required();
  app.add_option("--config", config_path, "Flat key = value config file")->required();
  app.add_option("--out", out_dir, "Output directory (created if missing)");
  app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--workers", workers, "Worker threads, 0 for all")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << usage();
    return kExitError;
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "cannot create output directory '" << out_dir.string() << "': " << ec.message() << '\n';
    return kExitError;
  }

  RunManifest manifest(sub, out_dir);
  int code = kExitError;
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), sub) == names.end()) {
    std::cerr << "unknown subcommand '" << sub << "'\n" << usage();
    manifest.set_error("unknown subcommand '" + sub + "'");
    manifest.set_exit_code(kExitError);
    try {
      manifest.write();
    } catch (const std::exception&) {
    }
    return kExitError;
  }
  try {
    RunConfig config = parse_config(config_path);
    if (seed) {
      config.experiment.master_seed = *seed;
      config.entries.emplace_back("--seed", std::to_string(*seed));
    }
    if (workers) {
      config.experiment.workers = *workers;
      config.entries.emplace_back("--workers", std::to_string(*workers));
    }
    manifest.set_config(config);
    code = dispatch(sub, config, out_dir, manifest);
    if (code == kExitCheckFailed) std::cerr << sub << ": acceptance check failed (see summary)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest.set_error(e.what());
    code = kExitError;
  }
  manifest.set_exit_code(code);
  try {
    manifest.write();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return code;
}
