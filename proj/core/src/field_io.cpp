#include <bit>
#include <cstring>
#include <fstream>

#include "exlab/error.hpp"
#include "exlab/field.hpp"

namespace exlab {

namespace {

constexpr char kMagic[4] = {'E', 'X', 'L', 'B'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError("field file " + path.string() + ": truncated");
  return to_little(v);
}

}  // namespace

void write_field_binary(const std::filesystem::path& path, const FieldSample& sample) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFieldFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample.grid.dimension));
  for (int a = 0; a < sample.grid.dimension; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(sample.n()));
  put<double>(out, sample.grid.spacing);
  put<std::uint64_t>(out, sample.seed);
  for (double v : sample.values) put<double>(out, v);
  if (!out) throw InputError("write failed for " + path.string());
}

RawField read_field_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InputError("field file " + path.string() + ": bad magic");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFieldFileVersion)
    throw InputError("field file " + path.string() + ": unsupported version " + std::to_string(version));
  RawField raw;
  const auto d = get<std::uint32_t>(in, path);
  if (d < 1 || d > 3) throw InputError("field file " + path.string() + ": bad dimension");
  raw.dimension = static_cast<int>(d);
  std::size_t total = 1;
  for (std::uint32_t a = 0; a < d; ++a) {
    raw.dims.push_back(get<std::uint32_t>(in, path));
    total *= raw.dims.back();
  }
  raw.spacing = get<double>(in, path);
  raw.seed = get<std::uint64_t>(in, path);
  raw.values.resize(total);
  for (double& v : raw.values) v = get<double>(in, path);
  return raw;
}

}  // namespace exlab
