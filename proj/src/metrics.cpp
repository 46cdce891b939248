#include "cyclemorph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "cyclemorph/warp.hpp"

namespace cm::metrics {

namespace {

double central_diff(const float* comp, std::int64_t v, std::int64_t stride) {
  return 0.5 * (static_cast<double>(comp[v + stride]) - static_cast<double>(comp[v - stride]));
}

}  // namespace

double folding_percentage(const DisplacementField& phi, bool literal_field_jacobian) {
  const auto lattice = phi.lattice();
  const int rank = phi.dim();
  for (int e : lattice)
    if (e < 3)
      throw ShapeError("folding: lattice must be >= 3 per axis, got " + shape_str(lattice));
  const std::int64_t vox = phi.voxels();
  const float* p = phi.values.data.data();
  const double ident = literal_field_jacobian ? 0.0 : 1.0;

  std::int64_t interior = 0, folded = 0;
  if (rank == 2) {
    const int h = lattice[0], w = lattice[1];
    for (int y = 1; y < h - 1; ++y) {
      for (int x = 1; x < w - 1; ++x) {
        const std::int64_t v = static_cast<std::int64_t>(y) * w + x;
        const double a00 = ident + central_diff(p, v, w);
        const double a01 = central_diff(p, v, 1);
        const double a10 = central_diff(p + vox, v, w);
        const double a11 = ident + central_diff(p + vox, v, 1);
        const double det = a00 * a11 - a01 * a10;
        ++interior;
        if (det <= 0.0) ++folded;
      }
    }
  } else {
    const int d = lattice[0], h = lattice[1], w = lattice[2];
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int z = 1; z < d - 1; ++z) {
      for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
          const std::int64_t v = (static_cast<std::int64_t>(z) * h + y) * w + x;
          double j[3][3];
          const std::int64_t strides[3] = {hw, w, 1};
          for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
              j[i][k] = (i == k ? ident : 0.0) + central_diff(p + i * vox, v, strides[k]);
          const double det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                             j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                             j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
          ++interior;
          if (det <= 0.0) ++folded;
        }
      }
    }
  }
  return 100.0 * static_cast<double>(folded) / static_cast<double>(interior);
}

DiceResult dice(const LabelMap& a, const LabelMap& b, const std::vector<int>& labels) {
  if (a.lattice != b.lattice) throw_shape_error("dice", a.lattice, b.lattice);
  std::set<int> wanted(labels.begin(), labels.end());
  if (wanted.empty()) {
    for (auto l : a.labels)
      if (l != 0) wanted.insert(l);
    for (auto l : b.labels)
      if (l != 0) wanted.insert(l);
  }
  DiceResult out;
  double sum = 0.0;
  int defined = 0;
  for (int label : wanted) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < a.labels.size(); ++i) {
      const bool in_a = a.labels[i] == label;
      const bool in_b = b.labels[i] == label;
      tp += in_a && in_b;
      fp += in_a && !in_b;
      fn += !in_a && in_b;
    }
    if (tp + fp + fn == 0) {
      out.undefined_labels.push_back(label);
      continue;
    }
    const double score =
        2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    out.per_label[label] = score;
    sum += score;
    ++defined;
  }
  out.mean = defined ? sum / defined : 0.0;
  return out;
}

LabelMap warp_labels(const LabelMap& labels, const DisplacementField& phi) {
  if (labels.lattice != phi.lattice()) throw_shape_error("warp_labels", labels.lattice, phi.lattice());
  const auto& lattice = labels.lattice;
  const int rank = static_cast<int>(lattice.size());
  const std::int64_t vox = phi.voxels();
  const float* p = phi.values.data.data();
  LabelMap out;
  out.lattice = lattice;
  out.labels.resize(labels.labels.size());
  for (std::int64_t v = 0; v < vox; ++v) {
    std::int64_t rem = v, q = 0;
    int idx[3];
    for (int d = rank - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rem % lattice[static_cast<size_t>(d)]);
      rem /= lattice[static_cast<size_t>(d)];
    }
    for (int d = 0; d < rank; ++d) {
      const double s = static_cast<double>(idx[d]) + static_cast<double>(p[d * vox + v]);
      int nn = static_cast<int>(std::floor(s + 0.5));
      nn = std::max(0, std::min(lattice[static_cast<size_t>(d)] - 1, nn));
      q = q * lattice[static_cast<size_t>(d)] + nn;
    }
    out.labels[static_cast<size_t>(v)] = labels.labels[static_cast<size_t>(q)];
  }
  return out;
}

double tre(const LandmarkSet& a, const LandmarkSet& b, const std::vector<double>& spacing) {
  if (a.size() != b.size())
    throw ShapeError("tre: point counts differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  if (a.rank != b.rank) throw ShapeError("tre: landmark ranks differ");
  if (static_cast<int>(spacing.size()) != a.rank)
    throw ShapeError("tre: spacing must have one entry per axis");
  for (double s : spacing)
    if (s <= 0) throw ShapeError("tre: spacing must be positive");
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d2 = 0.0;
    for (int d = 0; d < a.rank; ++d) {
      const double diff =
          spacing[static_cast<size_t>(d)] *
          (a.points[i][static_cast<size_t>(d)] - b.points[i][static_cast<size_t>(d)]);
      d2 += diff * diff;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(a.size());
}

NmseSsim nmse_ssim(const Image& a, const Image& b) {
  if (a.values.shape != b.values.shape)
    throw_shape_error("nmse_ssim", a.values.shape, b.values.shape);
  const std::int64_t n = a.values.numel();
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    num += d * d;
    den += static_cast<double>(b.values[i]) * static_cast<double>(b.values[i]);
  }
  if (den == 0.0) throw NumericError("nmse: reference image is identically zero");

  // local SSIM over clipped 7-edge windows, population statistics
  constexpr int kRadius = 3;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const auto lattice = a.lattice();
  const int rank = static_cast<int>(lattice.size());
  const std::int64_t vox = a.voxels();
  const int channels = a.channels();
  double ssim_acc = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    const float* pa = a.values.data.data() + ch * vox;
    const float* pb = b.values.data.data() + ch * vox;
    for (std::int64_t v = 0; v < vox; ++v) {
      int idx[3];
      std::int64_t rem = v;
      for (int d = rank - 1; d >= 0; --d) {
        idx[d] = static_cast<int>(rem % lattice[static_cast<size_t>(d)]);
        rem /= lattice[static_cast<size_t>(d)];
      }
      int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
      for (int d = 0; d < rank; ++d) {
        lo[d] = std::max(0, idx[d] - kRadius);
        hi[d] = std::min(lattice[static_cast<size_t>(d)] - 1, idx[d] + kRadius);
      }
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      std::int64_t count = 0;
      int it[3] = {lo[0], rank > 1 ? lo[1] : 0, rank > 2 ? lo[2] : 0};
      for (;;) {
        std::int64_t q = 0;
        for (int d = 0; d < rank; ++d) q = q * lattice[static_cast<size_t>(d)] + it[d];
        const double va = pa[q], vb = pb[q];
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
        ++count;
        int d = rank - 1;
        for (; d >= 0; --d) {
          if (++it[d] <= hi[d]) break;
          it[d] = lo[d];
        }
        if (d < 0) break;
      }
      const double inv = 1.0 / static_cast<double>(count);
      const double ma = sa * inv, mb = sb * inv;
      const double va = saa * inv - ma * ma;
      const double vb = sbb * inv - mb * mb;
      const double cov = sab * inv - ma * mb;
      ssim_acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                  ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
  }
  NmseSsim out;
  out.nmse = num / den;
  out.ssim = ssim_acc / static_cast<double>(vox * channels);
  return out;
}

NmseSsim reverse_consistency(const regnet::RegNetConfig& cfg, const regnet::RegNetParams& params,
                             const Image& x, const Image& y) {
  Tensor disp = regnet::forward_infer(cfg, params, x.values, y.values, "fwd.");
  Image deformed(kern::warp_forward(x.values, disp));
  // swapped pair: deformed image becomes the source, the original the target
  Tensor disp_back = regnet::forward_infer(cfg, params, deformed.values, x.values, "fwd.");
  Image restored(kern::warp_forward(deformed.values, disp_back));
  return nmse_ssim(restored, x);
}

EpeStats endpoint_error(const DisplacementField& phi_pred, const DisplacementField& phi_true) {
  if (phi_pred.values.shape != phi_true.values.shape)
    throw_shape_error("endpoint_error", phi_pred.values.shape, phi_true.values.shape);
  // residual(v) = phi_pred(v) + phi_true(v + phi_pred(v)) ; sampling phi_true
  // at the displaced points is a warp of its component planes
  Tensor sampled = kern::warp_forward(phi_true.values, phi_pred.values);
  const std::int64_t vox = phi_pred.voxels();
  const int rank = phi_pred.dim();
  std::vector<double> err(static_cast<size_t>(vox));
  for (std::int64_t v = 0; v < vox; ++v) {
    double d2 = 0.0;
    for (int d = 0; d < rank; ++d) {
      const double r = static_cast<double>(phi_pred.values[d * vox + v]) +
                       static_cast<double>(sampled[d * vox + v]);
      d2 += r * r;
    }
    err[static_cast<size_t>(v)] = std::sqrt(d2);
  }
  EpeStats out;
  double acc = 0.0;
  for (double e : err) acc += e;
  out.mean = acc / static_cast<double>(vox);
  out.median = median(std::move(err));
  return out;
}

double mean_magnitude(const DisplacementField& phi) {
  const std::int64_t vox = phi.voxels();
  const int rank = phi.dim();
  double acc = 0.0;
  for (std::int64_t v = 0; v < vox; ++v) {
    double d2 = 0.0;
    for (int d = 0; d < rank; ++d) {
      const double c = static_cast<double>(phi.values[d * vox + v]);
      d2 += c * c;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(vox);
}

double median(std::vector<double> values) {
  if (values.empty()) throw NumericError("median of empty set");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

void put_opt(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  if (v)
    j[key] = *v;
  else
    j[key] = nullptr;
}

std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  put_opt(j, "nmse", nmse);
  put_opt(j, "ssim", ssim);
  if (dice_mean) {
    nlohmann::json d;
    for (const auto& [label, score] : dice_per_label) d[std::to_string(label)] = score;
    j["dice"] = d;
    j["dice_mean"] = *dice_mean;
  } else {
    j["dice"] = nullptr;
    j["dice_mean"] = nullptr;
  }
  put_opt(j, "tre", tre);
  put_opt(j, "folding_pct", folding_pct);
  put_opt(j, "reverse_nmse", reverse_nmse);
  put_opt(j, "reverse_ssim", reverse_ssim);
  put_opt(j, "epe_mean", epe_mean);
  put_opt(j, "epe_median", epe_median);
  j["runtime_seconds"] = runtime_seconds;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.nmse = get_opt(j, "nmse");
  r.ssim = get_opt(j, "ssim");
  if (j.contains("dice") && !j["dice"].is_null()) {
    for (const auto& [key, value] : j["dice"].items())
      r.dice_per_label[std::stoi(key)] = value.get<double>();
    r.dice_mean = get_opt(j, "dice_mean");
  }
  r.tre = get_opt(j, "tre");
  r.folding_pct = get_opt(j, "folding_pct");
  r.reverse_nmse = get_opt(j, "reverse_nmse");
  r.reverse_ssim = get_opt(j, "reverse_ssim");
  r.epe_mean = get_opt(j, "epe_mean");
  r.epe_median = get_opt(j, "epe_median");
  r.runtime_seconds = j.value("runtime_seconds", 0.0);
  return r;
}

}  // namespace cm::metrics
