#include "cyclemorph/warp.hpp"

#include <cmath>

namespace cm::warp {

Image spatial_transform(const Image& x, const DisplacementField& phi) {
  if (x.lattice() != phi.lattice())
    throw_shape_error("spatial_transform", x.values.shape, phi.values.shape);
  return Image(kern::warp_forward(x.values, phi.values));
}

Image apply_multichannel(const Image& x, const DisplacementField& phi) {
  return spatial_transform(x, phi);
}

DisplacementField compose_fields(const DisplacementField& phi_a, const DisplacementField& phi_b,
                                 ComposeMode mode) {
  if (phi_a.values.shape != phi_b.values.shape)
    throw_shape_error("compose_fields", phi_a.values.shape, phi_b.values.shape);
  Tensor out(phi_a.values.shape);
  if (mode == ComposeMode::kPlainSum) {
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out[i] = phi_a.values[i] + phi_b.values[i];
    return DisplacementField(std::move(out));
  }
  // Sampling phi_a's components at v + phi_b(v) is itself a warp.
  Tensor inner = kern::warp_forward(phi_a.values, phi_b.values);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = phi_b.values[i] + inner[i];
  return DisplacementField(std::move(out));
}

DisplacementField rescale_field(const DisplacementField& phi, const std::vector<int>& target) {
  const auto src = phi.lattice();
  if (target.size() != src.size())
    throw ShapeError("rescale_field: rank mismatch " + shape_str(src) + " vs " +
                     shape_str(target));
  const int rank = static_cast<int>(src.size());
  std::vector<double> scale(static_cast<size_t>(rank));
  for (int d = 0; d < rank; ++d) {
    const int s = src[static_cast<size_t>(d)], t = target[static_cast<size_t>(d)];
    if (!((t % s == 0) || (s % t == 0)))
      throw ShapeError("rescale_field: extents must be integer multiples, got " +
                       std::to_string(s) + " -> " + std::to_string(t));
    scale[static_cast<size_t>(d)] = static_cast<double>(t) / static_cast<double>(s);
  }
  if (target == src) return phi;

  std::vector<int> out_shape{rank};
  out_shape.insert(out_shape.end(), target.begin(), target.end());
  Tensor out(out_shape);

  std::int64_t tgt_vox = 1;
  for (int e : target) tgt_vox *= e;
  std::int64_t src_vox = phi.voxels();
  const float* ip = phi.values.data.data();
  float* op = out.data.data();

  for (std::int64_t v = 0; v < tgt_vox; ++v) {
    // unflatten target voxel, map each axis to a clamped source stencil
    int idx[3] = {0, 0, 0};
    std::int64_t rem = v;
    for (int d = rank - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rem % target[static_cast<size_t>(d)]);
      rem /= target[static_cast<size_t>(d)];
    }
    detail::LinStencil<float> st[3];
    for (int d = 0; d < rank; ++d) {
      const double coord =
          (static_cast<double>(idx[d]) + 0.5) / scale[static_cast<size_t>(d)] - 0.5;
      st[d] = detail::lin_stencil<float>(static_cast<float>(coord), src[static_cast<size_t>(d)]);
    }
    for (int comp = 0; comp < rank; ++comp) {
      double acc = 0.0;
      for (int corner = 0; corner < (1 << rank); ++corner) {
        double wgt = 1.0;
        std::int64_t q = 0;
        for (int d = 0; d < rank; ++d) {
          const bool hi = (corner >> d) & 1;
          wgt *= hi ? static_cast<double>(st[d].f) : 1.0 - static_cast<double>(st[d].f);
          q = q * src[static_cast<size_t>(d)] + st[d].i0 + (hi ? st[d].step : 0);
        }
        acc += wgt * static_cast<double>(ip[comp * src_vox + q]);
      }
      op[comp * tgt_vox + v] = static_cast<float>(acc * scale[static_cast<size_t>(comp)]);
    }
  }
  return DisplacementField(std::move(out));
}

Image downsample_image(const Image& x, const std::vector<int>& factors) {
  return Image(kern::downsample_avg(x.values, factors));
}

std::vector<double> sample_field(const DisplacementField& phi, const std::vector<double>& pos) {
  const auto lattice = phi.lattice();
  const int rank = phi.dim();
  if (static_cast<int>(pos.size()) != rank)
    throw ShapeError("sample_field: position rank mismatch");
  const std::int64_t vox = phi.voxels();
  detail::LinStencil<float> st[3];
  for (int d = 0; d < rank; ++d)
    st[d] = detail::lin_stencil<float>(static_cast<float>(pos[static_cast<size_t>(d)]),
                                       lattice[static_cast<size_t>(d)]);
  std::vector<double> out(static_cast<size_t>(rank), 0.0);
  for (int corner = 0; corner < (1 << rank); ++corner) {
    double wgt = 1.0;
    std::int64_t q = 0;
    for (int d = 0; d < rank; ++d) {
      const bool hi = (corner >> d) & 1;
      wgt *= hi ? static_cast<double>(st[d].f) : 1.0 - static_cast<double>(st[d].f);
      q = q * lattice[static_cast<size_t>(d)] + st[d].i0 + (hi ? st[d].step : 0);
    }
    for (int d = 0; d < rank; ++d)
      out[static_cast<size_t>(d)] += wgt * static_cast<double>(phi.values[d * vox + q]);
  }
  return out;
}

}  // namespace cm::warp
