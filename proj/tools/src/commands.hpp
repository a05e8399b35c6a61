#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "manifest.hpp"

namespace exlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 2;

const std::vector<std::string>& subcommands();
std::string usage();

/// Runs one subcommand, writing its outputs under out_dir and registering
/// them with the manifest. Returns kExitOk or kExitCheckFailed; throws on
/// errors.
int dispatch(std::string_view subcommand, const RunConfig& config, const std::filesystem::path& out_dir,
             RunManifest& manifest);

/// Variance exponent expected from theory, when there is one.
std::optional<double> expected_variance_exponent(const KernelSpec& kernel);
/// Exponent of the variance upper bound R^d * int K~.
std::optional<double> expected_bound_exponent(const KernelSpec& kernel);

}  // namespace exlab::cli
