#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace exlab::cli {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

struct Entry {
  std::string value;
  int line;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::ostringstream msg;
    auto it = entries_.find(key);
    msg << "config";
    if (it != entries_.end()) msg << " line " << it->second.line;
    msg << ": key '" << key << "': " << what;
    throw ParseError(msg.str());
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  int line(const std::string& key) const { return has(key) ? entries_.at(key).line : 0; }
  const std::string& raw(const std::string& key) const { return entries_.at(key).value; }

  double number(const std::string& key) const {
    const std::string& s = raw(key);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) fail(key, "expected a number, got '" + s + "'");
    return v;
  }

  long integer(const std::string& key) const {
    const std::string& s = raw(key);
    long v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) fail(key, "expected an integer, got '" + s + "'");
    return v;
  }

  std::uint64_t unsigned64(const std::string& key) const {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const int base = s.rfind("0x", 0) == 0 ? 16 : 10;
    const char* begin = s.data() + (base == 16 ? 2 : 0);
    const auto [end, ec] = std::from_chars(begin, s.data() + s.size(), v, base);
    if (ec != std::errc() || end != s.data() + s.size()) fail(key, "expected an unsigned 64-bit integer, got '" + s + "'");
    return v;
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      double v = 0.0;
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || ec != std::errc() || end != item.data() + item.size())
        fail(key, "expected a comma-separated list of numbers, got '" + raw(key) + "'");
      out.push_back(v);
    }
    if (out.empty()) fail(key, "empty list");
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "kernel.family", "kernel.dimension", "kernel.beta", "kernel.wave_number", "kernel.table",
      "level",         "star",             "sizes",       "replications",       "t_grid",
      "seed",          "h",                "padding",     "workers",            "n_waves",
      "samples",       "dlevel",           "h_list",      "r_max"};
  return keys;
}

KernelSpec read_kernel(const Reader& r, const std::filesystem::path& base_dir) {
  if (!r.has("kernel.family")) r.fail("kernel.family", "required key is missing");
  KernelFamily family{};
  try {
    family = parse_kernel_family(r.raw("kernel.family"));
  } catch (const InputError& e) {
    r.fail("kernel.family", e.what());
  }
  int d = 2;
  if (r.has("kernel.dimension")) {
    const long v = r.integer("kernel.dimension");
    if (v < 1 || v > kMaxKernelDimension) r.fail("kernel.dimension", "out of range");
    d = static_cast<int>(v);
  }
  const double a = r.has("kernel.wave_number") ? r.number("kernel.wave_number") : 1.0;
  if (r.has("kernel.beta") && family != KernelFamily::Cauchy) r.fail("kernel.beta", "only valid for the cauchy family");
  try {
    switch (family) {
      case KernelFamily::BargmannFock: return KernelSpec::bargmann_fock(d);
      case KernelFamily::Cauchy:
        if (!r.has("kernel.beta"))
          r.fail("kernel.beta",
                 "required for the cauchy family (kernel.family on line " + std::to_string(r.line("kernel.family")) + ")");
        return KernelSpec::cauchy(d, r.number("kernel.beta"));
      case KernelFamily::RandomPlaneWave:
        if (d != 2) r.fail("kernel.dimension", "the random plane wave is planar (d = 2)");
        return KernelSpec::random_plane_wave(a);
      case KernelFamily::Monochromatic: return KernelSpec::monochromatic(d, a);
      case KernelFamily::TableKernel: {
        if (!r.has("kernel.table"))
          r.fail("kernel.table",
                 "required for the table family (kernel.family on line " + std::to_string(r.line("kernel.family")) + ")");
        std::filesystem::path p = r.raw("kernel.table");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        return KernelSpec::table_from_file(d, p);
      }
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    r.fail("kernel.family", e.what());
  }
  r.fail("kernel.family", "unsupported family");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  std::map<std::string, Entry> entries;
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    std::ostringstream where;
    where << "config line " << line_no << ": ";
    if (eq == std::string::npos) throw ParseError(where.str() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (!known_keys().count(key)) throw ParseError(where.str() + "unknown key '" + key + "'");
    if (entries.count(key)) throw ParseError(where.str() + "duplicate key '" + key + "'");
    if (value.empty()) throw ParseError(where.str() + "key '" + key + "' has an empty value");
    entries.emplace(key, Entry{value, line_no});
    cfg.entries.emplace_back(key, value);
  }

  const Reader r(std::move(entries));
  ExperimentConfig& e = cfg.experiment;
  e.kernel = read_kernel(r, base_dir);
  e.workers = 0;
  e.spacing = 0.25;
  if (r.has("level")) e.level = r.number("level");
  if (r.has("star")) {
    try {
      e.star = parse_star(r.raw("star"));
    } catch (const InputError& err) {
      r.fail("star", err.what());
    }
  }
  if (r.has("sizes")) e.sizes = r.list("sizes");
  if (r.has("replications")) {
    const long m = r.integer("replications");
    if (m < 3) r.fail("replications", "must be at least 3");
    e.replications = static_cast<int>(m);
  }
  if (r.has("t_grid")) e.t_grid = r.list("t_grid");
  if (r.has("seed")) e.master_seed = r.unsigned64("seed");
  if (r.has("h")) {
    e.spacing = r.number("h");
    if (!(e.spacing > 0.0 && e.spacing <= 0.5)) r.fail("h", "must lie in (0, 0.5]");
  }
  if (r.has("padding")) {
    e.padding = r.number("padding");
    if (!(e.padding >= 0.0)) r.fail("padding", "must be non-negative");
  }
  if (r.has("workers")) {
    const long w = r.integer("workers");
    if (w < 0) r.fail("workers", "must be non-negative (0 means all threads)");
    e.workers = static_cast<int>(w);
  }
  if (r.has("n_waves")) {
    const long n = r.integer("n_waves");
    if (n < 64) r.fail("n_waves", "must be at least 64");
    e.n_waves = static_cast<int>(n);
  }
  if (r.has("samples")) {
    cfg.samples = r.integer("samples");
    if (cfg.samples < 2) r.fail("samples", "must be at least 2");
  }
  if (r.has("dlevel")) {
    cfg.dlevel = r.number("dlevel");
    if (!(cfg.dlevel >= 0.02 && cfg.dlevel <= 0.2)) r.fail("dlevel", "must lie in [0.02, 0.2]");
  }
  if (r.has("h_list")) cfg.h_list = r.list("h_list");
  if (r.has("r_max")) {
    cfg.r_max = r.number("r_max");
    if (!(*cfg.r_max >= 4.0)) r.fail("r_max", "must be at least 4");
  }

  try {
    e.validate();
  } catch (const InputError& err) {
    const std::string msg = err.what();
    const std::pair<const char*, const char*> hints[] = {{"sizes", "sizes"},       {"side length", "sizes"},
                                                         {"t_grid", "t_grid"},     {"replications", "replications"},
                                                         {"spacing", "h"},         {"padding", "padding"},
                                                         {"d = 2 or 3", "kernel.dimension"}};
    for (const auto& [needle, key] : hints)
      if (msg.find(needle) != std::string::npos) r.fail(key, msg);
    throw ParseError("config: " + msg);
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

}  // namespace exlab::cli
