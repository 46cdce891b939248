#pragma once

#include "cyclemorph/kernels.hpp"
#include "cyclemorph/tape.hpp"

namespace cm::ops {

// Differentiable primitives. Forward values are computed eagerly; each call
// records a backward rule on the operands' tape. Binary ops require exactly
// matching shapes (no broadcasting); scalar coefficients go through the
// *_scalar variants.

inline constexpr double kDefaultEps = 1e-5;

template <typename T> VarT<T> add(VarT<T> a, VarT<T> b);
template <typename T> VarT<T> sub(VarT<T> a, VarT<T> b);
template <typename T> VarT<T> mul(VarT<T> a, VarT<T> b);
// a / (b + eps); eps keeps the denominator away from zero
template <typename T> VarT<T> div(VarT<T> a, VarT<T> b, double eps = kDefaultEps);
template <typename T> VarT<T> neg(VarT<T> a);
template <typename T> VarT<T> square(VarT<T> a);
// sqrt(a + eps)
template <typename T> VarT<T> sqrt(VarT<T> a, double eps = kDefaultEps);
template <typename T> VarT<T> abs(VarT<T> a);
template <typename T> VarT<T> leaky_relu(VarT<T> a, double slope);
template <typename T> VarT<T> add_scalar(VarT<T> a, double c);
template <typename T> VarT<T> mul_scalar(VarT<T> a, double c);

template <typename T> VarT<T> sum(VarT<T> a);             // -> scalar [1]
template <typename T> VarT<T> mean(VarT<T> a);            // -> scalar [1]
template <typename T> VarT<T> sum_axis(VarT<T> a, int axis);

// clipped box-window sum of edge 2*radius+1 along one axis
template <typename T> VarT<T> window_sum1d(VarT<T> a, int axis, int radius);
// separable window sum over all spatial axes of a [C,spatial...] tensor
template <typename T> VarT<T> window_sum_spatial(VarT<T> a, int radius);

// forward difference along `axis` with zero in the last slot
template <typename T> VarT<T> forward_diff(VarT<T> a, int axis);

template <typename T>
VarT<T> conv(VarT<T> x, VarT<T> weight, VarT<T> bias, int stride = 1);
template <typename T> VarT<T> upsample_nearest(VarT<T> x, int factor);
template <typename T> VarT<T> downsample_avg(VarT<T> x, const std::vector<int>& factors);
template <typename T> VarT<T> concat_channels(VarT<T> a, VarT<T> b);
// spatial crop/zero-pad on the trailing spatial axes of [C,spatial...]
template <typename T>
VarT<T> crop_spatial(VarT<T> x, const std::vector<int>& lo, const std::vector<int>& size);
template <typename T>
VarT<T> pad_spatial(VarT<T> x, const std::vector<int>& lo, const std::vector<int>& hi);

// multilinear warp of img:[C,S...] by displacement phi:[d,S...] (voxel units)
template <typename T> VarT<T> warp(VarT<T> img, VarT<T> phi);

}  // namespace cm::ops
