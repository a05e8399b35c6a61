#include "manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"
#include <openssl/evp.h>

#ifndef EXLAB_VERSION
#define EXLAB_VERSION "unknown"
#endif

namespace exlab::cli {

std::string version_string() { return EXLAB_VERSION; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("manifest: cannot read '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("manifest: sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
      throw Error("manifest: sha256 update failed");
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw Error("manifest: sha256 final failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

RunManifest::RunManifest(std::string subcommand, std::filesystem::path out_dir)
    : subcommand_(std::move(subcommand)), out_dir_(std::move(out_dir)), started_(utc_timestamp()) {}

void RunManifest::set_config(const RunConfig& config) {
  config_ = config.entries;
  have_seed_ = true;
  seed_ = config.experiment.master_seed;
  workers_ = config.experiment.workers;
}

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

std::filesystem::path RunManifest::write() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand_;
  j["version"] = version_string();
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_) cfg[k] = v;
  j["config"] = cfg;
  if (have_seed_) {
    j["master_seed"] = seed_;
    j["workers"] = workers_;
  } else {
    j["master_seed"] = nullptr;
  }
  j["started"] = started_;
  j["finished"] = utc_timestamp();
  j["exit_code"] = exit_code_;
  if (!error_.empty()) j["error"] = error_;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& p : outputs_) {
    nlohmann::ordered_json f;
    f["path"] = std::filesystem::relative(p, out_dir_).generic_string();
    try {
      f["sha256"] = sha256_file(p);
    } catch (const Error& e) {
      f["sha256"] = nullptr;
      f["error"] = e.what();
    }
    files.push_back(f);
  }
  j["outputs"] = files;
  const auto path = out_dir_ / "manifest.json";
  std::ofstream out(path);
  if (!out) throw Error("manifest: cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  return path;
}

}  // namespace exlab::cli
