#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"

namespace exlab::cli {

std::string sha256_file(const std::filesystem::path& path);

/// Record of one invocation; written as manifest.json in the output directory.
class RunManifest {
 public:
  RunManifest(std::string subcommand, std::filesystem::path out_dir);

  void set_config(const RunConfig& config);
  /// Registers a file written under the output directory (hashed at write time).
  void add_output(const std::filesystem::path& path);
  void set_error(std::string message) { error_ = std::move(message); }
  void set_exit_code(int code) { exit_code_ = code; }

  const std::vector<std::filesystem::path>& outputs() const { return outputs_; }
  /// Writes manifest.json; returns its path.
  std::filesystem::path write() const;

 private:
  std::string subcommand_;
  std::filesystem::path out_dir_;
  std::string started_;
  std::vector<std::pair<std::string, std::string>> config_;
  bool have_seed_ = false;
  std::uint64_t seed_ = 0;
  int workers_ = 0;
  std::vector<std::filesystem::path> outputs_;
  std::string error_;
  int exit_code_ = 1;
};

std::string utc_timestamp();
std::string version_string();

}  // namespace exlab::cli
