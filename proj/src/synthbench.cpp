#include "cyclemorph/synthbench.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cyclemorph/dtf.hpp"
#include "cyclemorph/metrics.hpp"
#include "cyclemorph/runio.hpp"
#include "cyclemorph/warp.hpp"

namespace fs = std::filesystem;

namespace cm::synthbench {

void SynthConfig::validate() const {
  if (lattice.size() != 2 && lattice.size() != 3)
    throw ConfigError("synth: lattice must be 2D or 3D");
  for (int e : lattice)
    if (e < 8) throw ConfigError("synth: lattice extents must be >= 8");
  if (num_pairs < 1) throw ConfigError("synth: num_pairs must be >= 1");
  if (amplitude < 0) throw ConfigError("synth: amplitude must be >= 0");
  if (sigma <= 0) throw ConfigError("synth: sigma must be > 0");
  if (num_shapes < 1) throw ConfigError("synth: num_shapes must be >= 1");
  if (num_landmarks < 1) throw ConfigError("synth: num_landmarks must be >= 1");
}

namespace {

// separable Gaussian smoothing with replicate boundary
void smooth1d(std::vector<float>& data, const std::vector<int>& lattice, int axis, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= norm;

  const int rank = static_cast<int>(lattice.size());
  const int n = lattice[static_cast<size_t>(axis)];
  std::int64_t stride = 1;
  for (int d = rank - 1; d > axis; --d) stride *= lattice[static_cast<size_t>(d)];
  const std::int64_t inner = stride;
  const std::int64_t total = static_cast<std::int64_t>(data.size());
  const std::int64_t outer = total / (static_cast<std::int64_t>(n) * inner);
  std::vector<float> line(static_cast<size_t>(n));
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * n * inner + i;
      for (int j = 0; j < n; ++j) line[static_cast<size_t>(j)] = data[static_cast<size_t>(base + j * stride)];
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int src = std::clamp(j + t, 0, n - 1);
          acc += kernel[static_cast<size_t>(t + radius)] * line[static_cast<size_t>(src)];
        }
        data[static_cast<size_t>(base + j * stride)] = static_cast<float>(acc);
      }
    }
  }
}

struct Ellipse {
  double center[3];
  double inv_axes[3];  // 1/semi-axis per lattice dimension
  double angle;        // in-plane rotation (last two axes)
  double intensity;
};

// normalized squared distance to the ellipse surface (<1 inside)
double ellipse_dist(const Ellipse& e, const double* pos, int rank) {
  double rel[3];
  for (int d = 0; d < rank; ++d) rel[d] = pos[d] - e.center[d];
  // rotate in the plane of the last two axes
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = rel[rank - 2], v = rel[rank - 1];
  rel[rank - 2] = c * u - s * v;
  rel[rank - 1] = s * u + c * v;
  double acc = 0.0;
  for (int d = 0; d < rank; ++d) {
    const double t = rel[d] * e.inv_axes[d];
    acc += t * t;
  }
  return acc;
}

}  // namespace

DisplacementField random_smooth_field(const SynthConfig& cfg, RandomStream& rng) {
  cfg.validate();
  const int rank = static_cast<int>(cfg.lattice.size());
  std::vector<int> shape{rank};
  shape.insert(shape.end(), cfg.lattice.begin(), cfg.lattice.end());

  if (cfg.amplitude == 0.0) return DisplacementField(Tensor(shape));

  std::int64_t vox = 1;
  for (int e : cfg.lattice) vox *= e;

  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Tensor field(shape);
    for (auto& v : field.data) v = static_cast<float>(rng.gaussian());
    for (int comp = 0; comp < rank; ++comp) {
      std::vector<float> plane(field.data.begin() + comp * vox,
                               field.data.begin() + (comp + 1) * vox);
      for (int axis = 0; axis < rank; ++axis) smooth1d(plane, cfg.lattice, axis, cfg.sigma);
      std::copy(plane.begin(), plane.end(), field.data.begin() + comp * vox);
    }
    double max_mag = 0.0;
    for (std::int64_t v = 0; v < vox; ++v) {
      double m2 = 0.0;
      for (int comp = 0; comp < rank; ++comp) {
        const double c = field[comp * vox + v];
        m2 += c * c;
      }
      max_mag = std::max(max_mag, m2);
    }
    max_mag = std::sqrt(max_mag);
    if (max_mag > 0) {
      const float scale = static_cast<float>(cfg.amplitude / max_mag);
      for (auto& v : field.data) v *= scale;
    }
    DisplacementField phi(std::move(field));
    if (metrics::folding_percentage(phi) == 0.0) return phi;
  }
  throw NumericError(
      "synth: could not draw a folding-free field; lower the amplitude or raise sigma");
}

trainer::PairSample make_pair(const SynthConfig& cfg, std::uint64_t pair_seed) {
  cfg.validate();
  const int rank = static_cast<int>(cfg.lattice.size());
  std::int64_t vox = 1;
  for (int e : cfg.lattice) vox *= e;

  RandomStream rng(pair_seed);
  std::vector<Ellipse> shapes(static_cast<size_t>(cfg.num_shapes));
  for (auto& e : shapes) {
    for (int d = 0; d < rank; ++d) {
      const double n = cfg.lattice[static_cast<size_t>(d)];
      e.center[d] = rng.uniform(0.28, 0.72) * n;
      e.inv_axes[d] = 1.0 / (rng.uniform(0.07, 0.2) * n);
    }
    e.angle = rng.uniform(0.0, 6.283185307179586);
    e.intensity = rng.uniform(0.45, 0.95);
  }

  // smooth background ramp + fine texture so every window carries signal
  std::vector<double> ramp(static_cast<size_t>(rank));
  for (auto& r : ramp) r = rng.uniform(-0.08, 0.08);
  std::vector<float> texture(static_cast<size_t>(vox));
  for (auto& t : texture) t = static_cast<float>(rng.gaussian());
  for (int axis = 0; axis < rank; ++axis) smooth1d(texture, cfg.lattice, axis, 1.2);
  float tex_max = 0.0f;
  for (float t : texture) tex_max = std::max(tex_max, std::abs(t));
  const float tex_scale = tex_max > 0 ? 0.06f / tex_max : 0.0f;

  std::vector<int> img_shape{1};
  img_shape.insert(img_shape.end(), cfg.lattice.begin(), cfg.lattice.end());
  Tensor fixed_t(img_shape);
  LabelMap labels_fixed;
  labels_fixed.lattice = cfg.lattice;
  labels_fixed.labels.assign(static_cast<size_t>(vox), 0);

  for (std::int64_t v = 0; v < vox; ++v) {
    int idx[3];
    std::int64_t rem = v;
    for (int d = rank - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rem % cfg.lattice[static_cast<size_t>(d)]);
      rem /= cfg.lattice[static_cast<size_t>(d)];
    }
    double pos[3];
    for (int d = 0; d < rank; ++d) pos[d] = idx[d];

    double val = 0.25;
    for (int d = 0; d < rank; ++d)
      val += ramp[static_cast<size_t>(d)] * (pos[d] / cfg.lattice[static_cast<size_t>(d)] - 0.5);

    double best_dist = 1.0;
    int best_label = 0;
    for (size_t k = 0; k < shapes.size(); ++k) {
      const double dist = ellipse_dist(shapes[k], pos, rank);
      const double profile = 1.0 / (1.0 + std::exp((dist - 1.0) / 0.08));
      val = std::max(val, shapes[k].intensity * profile);
      if (dist < best_dist) {
        best_dist = dist;
        best_label = static_cast<int>(k) + 1;
      }
    }
    val += tex_scale * texture[static_cast<size_t>(v)];
    fixed_t[v] = static_cast<float>(std::clamp(val, 0.0, 1.0));
    labels_fixed.labels[static_cast<size_t>(v)] = best_label;
  }

  trainer::PairSample pair;
  pair.fixed = Image(std::move(fixed_t));
  pair.has_truth = true;
  pair.phi_true = random_smooth_field(cfg, rng);
  pair.moving = warp::spatial_transform(pair.fixed, pair.phi_true);
  pair.labels_fixed = labels_fixed;
  pair.labels_moving = metrics::warp_labels(labels_fixed, pair.phi_true);

  if (cfg.intensity_remap) {
    const double gamma = rng.uniform(0.65, 1.55);
    for (auto& v : pair.moving.values.data)
      v = static_cast<float>(std::pow(static_cast<double>(std::clamp(v, 0.0f, 1.0f)), gamma));
  }

  // landmark p in moving space matches p + phi_true(p) in fixed space
  const double margin = cfg.amplitude + 2.0;
  pair.landmarks_moving.rank = rank;
  pair.landmarks_fixed.rank = rank;
  for (int i = 0; i < cfg.num_landmarks; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw NumericError("synth: cannot place landmarks inside the margin");
      std::array<double, 3> p{0, 0, 0};
      double q[3];
      bool ok = true;
      for (int d = 0; d < rank; ++d) {
        const double n = cfg.lattice[static_cast<size_t>(d)];
        if (n <= 2 * margin) {
          ok = false;
          break;
        }
        p[static_cast<size_t>(d)] = rng.uniform(margin, n - 1 - margin);
      }
      if (!ok) throw ConfigError("synth: lattice too small for the landmark margin");
      std::array<double, 3> qa{0, 0, 0};
      const std::vector<double> pos(p.begin(), p.begin() + rank);
      const auto disp = warp::sample_field(pair.phi_true, pos);
      for (int d = 0; d < rank; ++d)
        q[d] = p[static_cast<size_t>(d)] + disp[static_cast<size_t>(d)];
      for (int d = 0; d < rank; ++d) {
        const double n = cfg.lattice[static_cast<size_t>(d)];
        if (q[d] < 0.0 || q[d] > n - 1) ok = false;
        qa[static_cast<size_t>(d)] = q[d];
      }
      if (!ok) continue;
      pair.landmarks_moving.points.push_back(p);
      pair.landmarks_fixed.points.push_back(qa);
      break;
    }
  }
  return pair;
}

void generate(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "pairs");
  const int n = cfg.num_pairs;
  std::vector<std::string> dirs(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (int i = 0; i < n; ++i) {
    auto pair = make_pair(cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    char name[8];
    std::snprintf(name, sizeof name, "%04d", i);
    const fs::path dir = fs::path(out_dir) / "pairs" / name;
    fs::create_directories(dir);
    dtf::write_file((dir / "moving.dtf").string(), pair.moving.values);
    dtf::write_file((dir / "fixed.dtf").string(), pair.fixed.values);
    dtf::write_file((dir / "phi_true.dtf").string(), pair.phi_true.values);
    dtf::write_file((dir / "labels_moving.dtf").string(), pair.labels_moving.to_tensor());
    dtf::write_file((dir / "labels_fixed.dtf").string(), pair.labels_fixed.to_tensor());
    write_landmarks_csv((dir / "landmarks_moving.csv").string(), pair.landmarks_moving);
    write_landmarks_csv((dir / "landmarks_fixed.csv").string(), pair.landmarks_fixed);
    dirs[static_cast<size_t>(i)] = (fs::path("pairs") / name).string();
  }

  nlohmann::json manifest;
  manifest["config"] = runio::to_json(cfg);
  nlohmann::json checksums;
  for (const auto& rel : dirs) {
    for (const auto& entry : fs::directory_iterator(fs::path(out_dir) / rel)) {
      const auto rel_file = rel + "/" + entry.path().filename().string();
      checksums[rel_file] = runio::fnv1a64_file_hex(entry.path().string());
    }
  }
  manifest["checksums"] = checksums;
  runio::write_text_atomic((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2));
}

trainer::PairDataset load_dataset(const std::string& dir, bool with_truth) {
  trainer::PairDataset data;
  const fs::path pairs = fs::path(dir) / "pairs";
  if (!fs::is_directory(pairs)) throw IoError("dataset: no pairs/ directory under " + dir);
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(pairs))
    if (e.is_directory()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    trainer::PairSample s;
    s.dir = p.string();
    s.moving = Image(dtf::read_file((p / "moving.dtf").string()));
    s.fixed = Image(dtf::read_file((p / "fixed.dtf").string()));
    if (with_truth && fs::exists(p / "phi_true.dtf")) {
      s.has_truth = true;
      s.phi_true = DisplacementField(dtf::read_file((p / "phi_true.dtf").string()));
      s.labels_moving = LabelMap::from_tensor(dtf::read_file((p / "labels_moving.dtf").string()));
      s.labels_fixed = LabelMap::from_tensor(dtf::read_file((p / "labels_fixed.dtf").string()));
      s.landmarks_moving = read_landmarks_csv((p / "landmarks_moving.csv").string());
      s.landmarks_fixed = read_landmarks_csv((p / "landmarks_fixed.csv").string());
    }
    data.pairs.push_back(std::move(s));
  }
  if (data.empty()) throw IoError("dataset: no pairs found under " + dir);
  return data;
}

}  // namespace cm::synthbench
