#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exlab/error.hpp"
#include "exlab/experiments.hpp"

namespace exlab::cli {

/// Thrown for malformed config files; the message names the key and line.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

/// Everything a run needs: the experiment itself plus per-subcommand knobs.
struct RunConfig {
  ExperimentConfig experiment;
  /// Monte Carlo draws or conditional samples (intensity, pivotal).
  long samples = 2000;
  /// Half-width of the level difference for the mu derivative.
  double dlevel = 0.1;
  /// Spacings for the refine subcommand, decreasing.
  std::vector<double> h_list{0.5, 0.25, 0.125};
  std::optional<double> r_max;
  /// Key/value pairs as read, for the manifest snapshot.
  std::vector<std::pair<std::string, std::string>> entries;
};

/// Flat "key = value" lines; '#' starts a comment; values may be quoted.
/// Unknown keys, duplicates and out-of-range values are rejected.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});

}  // namespace exlab::cli
