#include "cyclemorph/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cm {

Image::Image(Tensor t) : values(std::move(t)) {
  if (values.rank() != 3 && values.rank() != 4)
    throw ShapeError("image: expected [C,H,W] or [C,D,H,W], got " + shape_str(values.shape));
  if (!values.all_finite()) throw NumericError("image: non-finite intensities");
}

DisplacementField::DisplacementField(Tensor t) : values(std::move(t)) {
  if (values.rank() != 3 && values.rank() != 4)
    throw ShapeError("field: expected [d,H,W] or [d,D,H,W], got " + shape_str(values.shape));
  if (values.shape[0] != values.rank() - 1)
    throw ShapeError("field: vector dimension must equal lattice rank, got " +
                     shape_str(values.shape));
  if (!values.all_finite()) throw NumericError("field: non-finite components");
}

DisplacementField DisplacementField::zeros(const std::vector<int>& lattice) {
  std::vector<int> s{static_cast<int>(lattice.size())};
  s.insert(s.end(), lattice.begin(), lattice.end());
  return DisplacementField(Tensor(s));
}

Tensor LabelMap::to_tensor() const {
  Tensor t(lattice);
  for (size_t i = 0; i < labels.size(); ++i) t.data[i] = static_cast<float>(labels[i]);
  return t;
}

LabelMap LabelMap::from_tensor(const Tensor& t) {
  LabelMap m;
  m.lattice = t.shape;
  m.labels.resize(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) {
    const float v = t.data[i];
    const auto r = static_cast<std::int32_t>(std::lround(v));
    if (r < 0 || std::abs(v - static_cast<float>(r)) > 1e-3f)
      throw IoError("label map: non-integer or negative label value");
    m.labels[i] = r;
  }
  return m;
}

void write_landmarks_csv(const std::string& path, const LandmarkSet& set) {
  std::ofstream f(path);
  if (!f) throw IoError("landmarks: cannot open for writing: " + path);
  f << "# landmark coordinates in voxel units; columns follow lattice axis order"
       " (axis0 slowest)\n";
  for (const auto& p : set.points) {
    for (int d = 0; d < set.rank; ++d) {
      if (d) f << ',';
      f << p[static_cast<size_t>(d)];
    }
    f << '\n';
  }
  if (!f) throw IoError("landmarks: write failed");
}

LandmarkSet read_landmarks_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("landmarks: cannot open: " + path);
  LandmarkSet set;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::array<double, 3> p{0, 0, 0};
    int d = 0;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (d >= 3) throw IoError("landmarks: more than 3 coordinates per row");
      p[static_cast<size_t>(d++)] = std::stod(tok);
    }
    if (set.rank == 0)
      set.rank = d;
    else if (set.rank != d)
      throw IoError("landmarks: inconsistent coordinate count");
    set.points.push_back(p);
  }
  return set;
}

namespace {

int pgm_token(std::istream& is) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v = 0;
  if (!(is >> v)) throw IoError("pgm: malformed header");
  return v;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("pgm: cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw IoError("pgm: not a binary (P5) file");
  const int w = pgm_token(f);
  const int h = pgm_token(f);
  const int maxval = pgm_token(f);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("pgm: bad dimensions");
  f.get();  // single whitespace after maxval
  Tensor t({1, h, w});
  const std::int64_t n = static_cast<std::int64_t>(h) * w;
  if (maxval < 256) {
    std::vector<unsigned char> buf(static_cast<size_t>(n));
    if (!f.read(reinterpret_cast<char*>(buf.data()), n)) throw IoError("pgm: truncated payload");
    for (std::int64_t i = 0; i < n; ++i)
      t.data[static_cast<size_t>(i)] = static_cast<float>(buf[static_cast<size_t>(i)]) /
                                       static_cast<float>(maxval);
  } else {
    std::vector<unsigned char> buf(static_cast<size_t>(2 * n));
    if (!f.read(reinterpret_cast<char*>(buf.data()), 2 * n))
      throw IoError("pgm: truncated payload");
    for (std::int64_t i = 0; i < n; ++i) {
      // big-endian 16-bit per the format
      const int hi = buf[static_cast<size_t>(2 * i)], lo = buf[static_cast<size_t>(2 * i + 1)];
      t.data[static_cast<size_t>(i)] =
          static_cast<float>(hi * 256 + lo) / static_cast<float>(maxval);
    }
  }
  return Image(std::move(t));
}

void check_unit_range(const char* what, const Image& img) {
  for (float v : img.values.data)
    if (v < -1e-4f || v > 1.0f + 1e-4f)
      throw NumericError(std::string(what) + ": intensities must lie in [0,1]");
}

}  // namespace cm
