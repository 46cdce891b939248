#include "cyclemorph/multiscale.hpp"

#include <algorithm>
#include <cmath>

namespace cm::multiscale {

std::vector<int> MultiscaleConfig::strides_for(const std::vector<int>& lattice) const {
  if (!patch_strides.empty()) return patch_strides;
  std::vector<int> s(lattice.size(), std::max(1, patch_edge / 4));
  if (lattice.size() == 3) s.back() = std::max(1, patch_edge / 8);
  return s;
}

void MultiscaleConfig::validate(int spatial_rank) const {
  if (static_cast<int>(global_factors.size()) != spatial_rank)
    throw ConfigError("multiscale: one global factor per spatial axis required");
  for (int f : global_factors)
    if (f < 1) throw ConfigError("multiscale: global factors must be >= 1");
  if (patch_edge < 1) throw ConfigError("multiscale: patch edge must be >= 1");
  if (!patch_strides.empty()) {
    if (static_cast<int>(patch_strides.size()) != spatial_rank)
      throw ConfigError("multiscale: one patch stride per spatial axis required");
    for (int s : patch_strides)
      if (s < 1 || s > patch_edge)
        throw ConfigError("multiscale: patch strides must lie in [1, patch_edge]");
  }
}

std::vector<std::vector<int>> patch_offsets(const std::vector<int>& lattice,
                                            const MultiscaleConfig& cfg) {
  const int rank = static_cast<int>(lattice.size());
  const int p = cfg.patch_edge;
  for (int e : lattice)
    if (p > e)
      throw ShapeError("extract_patches: patch edge " + std::to_string(p) +
                       " exceeds lattice " + shape_str(lattice));
  const auto strides = cfg.strides_for(lattice);
  std::vector<std::vector<int>> per_axis(static_cast<size_t>(rank));
  for (int d = 0; d < rank; ++d) {
    const int n = lattice[static_cast<size_t>(d)];
    const int s = strides[static_cast<size_t>(d)];
    std::vector<int>& offs = per_axis[static_cast<size_t>(d)];
    for (int o = 0; o + p <= n; o += s) offs.push_back(o);
    if (offs.back() != n - p) offs.push_back(n - p);  // clamp last patch inward
  }
  std::vector<std::vector<int>> out;
  std::vector<size_t> it(static_cast<size_t>(rank), 0);
  for (;;) {
    std::vector<int> off(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) off[static_cast<size_t>(d)] = per_axis[static_cast<size_t>(d)][it[static_cast<size_t>(d)]];
    out.push_back(off);
    int d = rank - 1;
    for (; d >= 0; --d) {
      if (++it[static_cast<size_t>(d)] < per_axis[static_cast<size_t>(d)].size()) break;
      it[static_cast<size_t>(d)] = 0;
    }
    if (d < 0) break;
  }
  return out;
}

Tensor extract_patch(const Tensor& t, const std::vector<int>& offset, int edge) {
  const int rank = t.rank() - 1;
  std::vector<int> os{t.shape[0]};
  for (int d = 0; d < rank; ++d) os.push_back(edge);
  Tensor out(os);
  const auto lattice = std::vector<int>(t.shape.begin() + 1, t.shape.end());
  std::int64_t src_vox = 1;
  for (int e : lattice) src_vox *= e;
  std::int64_t dst_vox = out.numel() / t.shape[0];
  for (int ch = 0; ch < t.shape[0]; ++ch) {
    for (std::int64_t v = 0; v < dst_vox; ++v) {
      std::int64_t rem = v, q = 0;
      for (int d = rank - 1; d >= 0; --d) {
        const int local = static_cast<int>(rem % edge);
        rem /= edge;
        // accumulate source index from the innermost axis outward
        std::int64_t axis_stride = 1;
        for (int dd = rank - 1; dd > d; --dd) axis_stride *= lattice[static_cast<size_t>(dd)];
        q += axis_stride * (local + offset[static_cast<size_t>(d)]);
      }
      out.data[static_cast<size_t>(ch * dst_vox + v)] =
          t.data[static_cast<size_t>(ch * src_vox + q)];
    }
  }
  return out;
}

GlobalResult global_stage(const regnet::RegNetConfig& cfg, const regnet::RegNetParams& params,
                          const Image& moving, const Image& fixed, const MultiscaleConfig& ms) {
  if (moving.lattice() != fixed.lattice())
    throw_shape_error("global_stage", moving.values.shape, fixed.values.shape);
  ms.validate(moving.spatial_rank());
  GlobalResult out;
  bool all_one = true;
  for (int f : ms.global_factors) all_one = all_one && f == 1;
  if (all_one) {
    out.phi_global =
        DisplacementField(regnet::forward_infer(cfg, params, moving.values, fixed.values, "fwd."));
  } else {
    Image coarse_m = warp::downsample_image(moving, ms.global_factors);
    Image coarse_f = warp::downsample_image(fixed, ms.global_factors);
    DisplacementField coarse_phi(
        regnet::forward_infer(cfg, params, coarse_m.values, coarse_f.values, "fwd."));
    out.phi_global = warp::rescale_field(coarse_phi, moving.lattice());
  }
  out.intermediate = warp::spatial_transform(moving, out.phi_global);
  return out;
}

namespace {

double fusion_weight(MultiscaleConfig::Fusion mode, const std::vector<int>& local, int edge) {
  if (mode == MultiscaleConfig::Fusion::kUniform) return 1.0;
  // half-sample-shifted cosine window: strictly positive at patch borders
  double w = 1.0;
  for (int v : local) {
    const double t = std::sin(3.14159265358979323846 * (v + 0.5) / edge);
    w *= t * t;
  }
  return w;
}

}  // namespace

DisplacementField local_stage(const regnet::RegNetConfig& cfg,
                              const regnet::RegNetParams& params, const Image& intermediate,
                              const Image& fixed, const MultiscaleConfig& ms) {
  if (intermediate.lattice() != fixed.lattice())
    throw_shape_error("local_stage", intermediate.values.shape, fixed.values.shape);
  const auto lattice = intermediate.lattice();
  const int rank = intermediate.spatial_rank();
  ms.validate(rank);
  const int p = ms.patch_edge;
  const auto offsets = patch_offsets(lattice, ms);

  std::vector<int> field_shape{rank};
  field_shape.insert(field_shape.end(), lattice.begin(), lattice.end());
  Tensor acc(field_shape);
  std::int64_t vox = 1;
  for (int e : lattice) vox *= e;
  std::vector<double> weight(static_cast<size_t>(vox), 0.0);

  std::int64_t patch_vox = 1;
  for (int d = 0; d < rank; ++d) patch_vox *= p;

  for (const auto& off : offsets) {
    Tensor pm = extract_patch(intermediate.values, off, p);
    Tensor pf = extract_patch(fixed.values, off, p);
    Tensor phi_patch = regnet::forward_infer(cfg, params, pm, pf, "fwd.");
    for (std::int64_t v = 0; v < patch_vox; ++v) {
      std::vector<int> local(static_cast<size_t>(rank));
      std::int64_t rem = v;
      for (int d = rank - 1; d >= 0; --d) {
        local[static_cast<size_t>(d)] = static_cast<int>(rem % p);
        rem /= p;
      }
      std::int64_t q = 0;
      for (int d = 0; d < rank; ++d)
        q = q * lattice[static_cast<size_t>(d)] +
            (local[static_cast<size_t>(d)] + off[static_cast<size_t>(d)]);
      const double w = fusion_weight(ms.fusion, local, p);
      weight[static_cast<size_t>(q)] += w;
      for (int d = 0; d < rank; ++d)
        acc.data[static_cast<size_t>(d * vox + q)] +=
            static_cast<float>(w) * phi_patch.data[static_cast<size_t>(d * patch_vox + v)];
    }
  }

  for (std::int64_t v = 0; v < vox; ++v) {
    const double w = weight[static_cast<size_t>(v)];
    if (w <= 0.0) throw NumericError("local_stage: voxel not covered by any patch");
    for (int d = 0; d < rank; ++d)
      acc.data[static_cast<size_t>(d * vox + v)] /= static_cast<float>(w);
  }
  return DisplacementField(std::move(acc));
}

RegistrationResult register_multiscale(const regnet::RegNetConfig& global_cfg,
                                       const regnet::RegNetParams& global_params,
                                       const regnet::RegNetConfig& local_cfg,
                                       const regnet::RegNetParams& local_params,
                                       const Image& moving, const Image& fixed,
                                       const MultiscaleConfig& ms) {
  RegistrationResult out;
  GlobalResult g = global_stage(global_cfg, global_params, moving, fixed, ms);
  out.phi_global = g.phi_global;
  out.phi_local = local_stage(local_cfg, local_params, g.intermediate, fixed, ms);
  out.phi_final = warp::compose_fields(out.phi_global, out.phi_local, ms.compose_mode);
  // the moving image is sampled exactly once, by the fused field
  out.deformed = warp::spatial_transform(moving, out.phi_final);
  return out;
}

trainer::PairDataset build_local_training_set(const regnet::RegNetConfig& global_cfg,
                                              const regnet::RegNetParams& global_params,
                                              const trainer::PairDataset& data,
                                              const MultiscaleConfig& ms, int patches_per_pair,
                                              std::uint64_t seed) {
  if (patches_per_pair < 1) throw ConfigError("multiscale: patches_per_pair must be >= 1");
  trainer::PairDataset out;
  const int p = ms.patch_edge;
  for (size_t i = 0; i < data.pairs.size(); ++i) {
    const auto& pair = data.pairs[i];
    GlobalResult g = global_stage(global_cfg, global_params, pair.moving, pair.fixed, ms);
    const auto lattice = pair.moving.lattice();
    const int rank = static_cast<int>(lattice.size());
    RandomStream rng(derive_seed(seed, 0x70617400ULL + i));
    for (int k = 0; k < patches_per_pair; ++k) {
      std::vector<int> off(static_cast<size_t>(rank));
      for (int d = 0; d < rank; ++d) {
        const int room = lattice[static_cast<size_t>(d)] - p;
        if (room < 0)
          throw ConfigError("multiscale: patch edge exceeds the training lattice");
        off[static_cast<size_t>(d)] = room == 0 ? 0 : static_cast<int>(rng.index(room + 1));
      }
      trainer::PairSample s;
      s.moving = Image(extract_patch(g.intermediate.values, off, p));
      s.fixed = Image(extract_patch(pair.fixed.values, off, p));
      out.pairs.push_back(std::move(s));
    }
  }
  return out;
}

trainer::PairDataset downsample_dataset(const trainer::PairDataset& data,
                                        const std::vector<int>& factors) {
  trainer::PairDataset out;
  for (const auto& pair : data.pairs) {
    trainer::PairSample s;
    s.moving = warp::downsample_image(pair.moving, factors);
    s.fixed = warp::downsample_image(pair.fixed, factors);
    out.pairs.push_back(std::move(s));
  }
  return out;
}

}  // namespace cm::multiscale
