#pragma once

#include "cyclemorph/image.hpp"
#include "cyclemorph/ops.hpp"

namespace cm::warp {

// Plain (inference-side) spatial transform: output(p) = interp of X at
// p + phi(p), multilinear, boundary-clamped. The differentiable counterpart
// for training graphs is ops::warp.
Image spatial_transform(const Image& x, const DisplacementField& phi);

// Channel-wise warp of a multi-channel image with one shared field.
Image apply_multichannel(const Image& x, const DisplacementField& phi);

enum class ComposeMode {
  kCompose,   // phi(v) = phi_b(v) + phi_a(v + phi_b(v)); a estimated first
  kPlainSum,  // phi_a + phi_b
};

DisplacementField compose_fields(const DisplacementField& phi_a, const DisplacementField& phi_b,
                                 ComposeMode mode = ComposeMode::kCompose);

// Multilinear resample of the components onto `target`, scaled per axis so the
// result stays in target-voxel units. Target extents must be integer multiples
// or divisors of the source extents. Sample mapping is center-aligned:
// src = (t + 0.5) * src_n / tgt_n - 0.5, clamped.
DisplacementField rescale_field(const DisplacementField& phi, const std::vector<int>& target);

// Block-average downsampling by integer factors per axis.
Image downsample_image(const Image& x, const std::vector<int>& factors);

// Multilinear sample of every field component at one fractional position
// (lattice axis order, clamped at the boundary).
std::vector<double> sample_field(const DisplacementField& phi, const std::vector<double>& pos);

}  // namespace cm::warp
