#pragma once

#include <cstdint>

#include "cyclemorph/tensor.hpp"

namespace cm {

// Dense compute kernels behind the tensor ops. `kern` is the OpenMP-parallel
// production path; `kern_ref` is a straightforward serial implementation kept
// for equivalence tests and the kernel benchmark. Both paths are deterministic
// for a fixed input; `kern` additionally gives results independent of the
// worker-thread count (reductions run over fixed-size chunks).

struct ConvSpec {
  int stride = 1;  // same stride on every spatial axis
  // zero padding of (k-1)/2 per axis is implied; kernels must have odd edge
};

// Output extent of a padded strided convolution along one axis.
inline int conv_out_extent(int n, int k, int stride) {
  int pad = (k - 1) / 2;
  return (n + 2 * pad - k) / stride + 1;
}

namespace kern {

// in:[Cin,S...] weight:[Cout,Cin,k^d] bias:[Cout] -> out:[Cout,S'...]
template <typename T>
TensorT<T> conv_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                        ConvSpec spec);
template <typename T>
TensorT<T> conv_grad_input(const TensorT<T>& grad_out, const TensorT<T>& weight,
                           const std::vector<int>& in_shape, ConvSpec spec);
template <typename T>
void conv_grad_params(const TensorT<T>& grad_out, const TensorT<T>& in, ConvSpec spec,
                      TensorT<T>& grad_weight, TensorT<T>& grad_bias);

// Clipped box-window sum of width 2r+1 along one tensor axis (self-adjoint).
template <typename T>
TensorT<T> window_sum1d(const TensorT<T>& in, int axis, int radius);

// Multilinear warp: out(p)[c] = interp of img channel c at p + phi(p).
// img:[C,S...], phi:[d,S...]; sample points clamp to the lattice boundary.
template <typename T>
TensorT<T> warp_forward(const TensorT<T>& img, const TensorT<T>& phi);
template <typename T>
void warp_grad(const TensorT<T>& img, const TensorT<T>& phi, const TensorT<T>& grad_out,
               TensorT<T>* grad_img, TensorT<T>* grad_phi);

template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& in, int factor);
template <typename T>
TensorT<T> upsample_nearest_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                                 int factor);

// Block-average downsampling by integer factors per spatial axis.
template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& in, const std::vector<int>& factors);
template <typename T>
TensorT<T> downsample_avg_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                               const std::vector<int>& factors);

// Deterministic sum: fixed-size chunk partials combined in order, so the
// result does not depend on the thread count.
template <typename T>
double reduce_sum(const TensorT<T>& in);

}  // namespace kern

namespace kern_ref {

template <typename T>
TensorT<T> conv_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                        ConvSpec spec);
template <typename T>
TensorT<T> conv_grad_input(const TensorT<T>& grad_out, const TensorT<T>& weight,
                           const std::vector<int>& in_shape, ConvSpec spec);
template <typename T>
void conv_grad_params(const TensorT<T>& grad_out, const TensorT<T>& in, ConvSpec spec,
                      TensorT<T>& grad_weight, TensorT<T>& grad_bias);
template <typename T>
TensorT<T> window_sum1d(const TensorT<T>& in, int axis, int radius);
template <typename T>
TensorT<T> warp_forward(const TensorT<T>& img, const TensorT<T>& phi);
template <typename T>
void warp_grad(const TensorT<T>& img, const TensorT<T>& phi, const TensorT<T>& grad_out,
               TensorT<T>* grad_img, TensorT<T>* grad_phi);
template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& in, int factor);
template <typename T>
TensorT<T> upsample_nearest_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                                 int factor);
template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& in, const std::vector<int>& factors);
template <typename T>
TensorT<T> downsample_avg_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                               const std::vector<int>& factors);
template <typename T>
double reduce_sum(const TensorT<T>& in);

}  // namespace kern_ref

namespace detail {

// Shared shape validation for both kernel paths.
void check_conv_shapes(const char* who, const std::vector<int>& in,
                       const std::vector<int>& weight, const std::vector<int>& bias,
                       ConvSpec spec);
void check_warp_shapes(const char* who, const std::vector<int>& img,
                       const std::vector<int>& phi);

// Per-axis clamped linear interpolation stencil. `step` is 0 on degenerate
// axes so the zero-weight corner read still lands in bounds.
template <typename T>
struct LinStencil {
  int i0;
  T f;        // weight of the i0+step corner
  int step;   // 1, or 0 when the axis has a single voxel
  bool live;  // false when the pre-clamp coordinate fell outside the lattice
};

template <typename T>
inline LinStencil<T> lin_stencil(T coord, int n) {
  LinStencil<T> s;
  s.live = coord >= T(0) && coord <= T(n - 1);
  if (n == 1) {
    s.i0 = 0;
    s.f = T(0);
    s.step = 0;
    s.live = false;
    return s;
  }
  T c = coord < T(0) ? T(0) : (coord > T(n - 1) ? T(n - 1) : coord);
  int i0 = static_cast<int>(c);
  if (i0 > n - 2) i0 = n - 2;
  s.i0 = i0;
  s.f = c - T(i0);
  s.step = 1;
  return s;
}

}  // namespace detail

}  // namespace cm
