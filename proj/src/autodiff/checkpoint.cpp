#include "objnav/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "objnav/common/errors.hpp"

namespace objnav::ad {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'Z', 'P', '1'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ContractError("checkpoint: truncated file");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterStore& params) {
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, m] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    if (m.rows() == 1) {
      put_u32(out, 1);
      put_u32(out, static_cast<std::uint32_t>(m.cols()));
    } else {
      put_u32(out, 2);
      put_u32(out, static_cast<std::uint32_t>(m.rows()));
      put_u32(out, static_cast<std::uint32_t>(m.cols()));
    }
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw ContractError("checkpoint: write failed");
}

ParameterStore read_checkpoint(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ContractError("checkpoint: bad magic");
  const std::uint32_t count = get_u32(in);
  ParameterStore params;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t len = get_u32(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ContractError("checkpoint: truncated name");
    const std::uint32_t rank = get_u32(in);
    Index rows = 1;
    Index cols = 1;
    if (rank == 1) {
      cols = get_u32(in);
    } else if (rank == 2) {
      rows = get_u32(in);
      cols = get_u32(in);
    } else {
      throw ContractError("checkpoint: unsupported rank " + std::to_string(rank) + " for " + name);
    }
    Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw ContractError("checkpoint: truncated values for " + name);
    }
    if (!params.emplace(name, std::move(m)).second) throw ContractError("checkpoint: duplicate parameter " + name);
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace objnav::ad
