#include "cyclemorph/dtf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cm::dtf {

static_assert(std::endian::native == std::endian::little,
              "big-endian hosts would need byte swapping in DTF I/O");

namespace {

constexpr char kMagic[4] = {'D', 'T', 'F', '1'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError(std::string("dtf: truncated ") + what);
  return v;
}

}  // namespace

void write(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  os.put(static_cast<char>(kDtypeF32));
  os.put(static_cast<char>(t.rank()));
  for (int e : t.shape) put_u32(os, static_cast<std::uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw IoError("dtf: write failed");
}

void write_file(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("dtf: cannot open for writing: " + path);
  write(f, t);
}

Tensor read(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("dtf: bad magic");
  int dtype = is.get();
  int rank = is.get();
  if (dtype < 0 || rank < 0) throw IoError("dtf: truncated header");
  if (dtype != kDtypeF32) throw IoError("dtf: unsupported dtype code " + std::to_string(dtype));
  std::vector<int> shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    auto e = get_u32(is, "extent");
    if (e == 0) throw IoError("dtf: zero extent");
    shape[static_cast<size_t>(i)] = static_cast<int>(e);
  }
  Tensor t(shape);
  if (!is.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float))))
    throw IoError("dtf: truncated payload");
  return t;
}

Tensor read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("dtf: cannot open: " + path);
  return read(f);
}

}  // namespace cm::dtf
