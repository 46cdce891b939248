#pragma once

#include <iosfwd>
#include <string>

#include "cyclemorph/tensor.hpp"

namespace cm::dtf {

// DTF tensor file: magic "DTF1", u8 dtype (0 = float32), u8 rank,
// rank little-endian u32 extents, then little-endian row-major scalars.
// All tensor I/O in the repository goes through this format.

void write(std::ostream& os, const Tensor& t);
void write_file(const std::string& path, const Tensor& t);

Tensor read(std::istream& is);
Tensor read_file(const std::string& path);

}  // namespace cm::dtf
