#pragma once

#include <filesystem>
#include <iosfwd>

#include "objnav/autodiff/graph.hpp"

namespace objnav::ad {

// Binary parameter checkpoint: "LZP1", u32 count, then per parameter
// u32 name length, name bytes, u32 rank, u32 dims[rank], f64 values (row-major).
// All integers and floats little-endian. Row vectors (1 x n) are stored as rank 1.
void write_checkpoint(std::ostream& out, const ParameterStore& params);
ParameterStore read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace objnav::ad
