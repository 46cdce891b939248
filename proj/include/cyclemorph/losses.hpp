#pragma once

#include <functional>

#include "cyclemorph/ops.hpp"

namespace cm::losses {

enum class Normalization { kSum, kMean };

// Loss weights and similarity-window settings shared across training runs.
struct HyperParams {
  double alpha = 0.1;   // cycle weight
  double beta = 0.5;    // identity weight
  double lambda = 1.0;  // smoothness weight
  int ncc_window = 9;   // window edge in voxels, odd
  double eps = 1e-5;    // stabilizer for the correlation denominator
  Normalization normalization = Normalization::kMean;
  // identity passes feed each network its own self-pair instead of the
  // opposite one (the default keeps the cross pairing)
  bool identity_same_net = false;

  void validate() const;
};

// A network as seen by the losses: (moving, fixed) -> displacement field.
template <typename T>
using NetFn = std::function<VarT<T>(VarT<T>, VarT<T>)>;

// Windowed squared correlation ratio, aggregated over the lattice.
// Per voxel: (sum (A-mA)(B-mB))^2 / ((sum (A-mA)^2)(sum (B-mB)^2) + eps),
// windows clipped at the boundary. Single-channel [1,spatial...] inputs.
template <typename T>
VarT<T> local_ncc(VarT<T> a, VarT<T> b, int window, double eps,
                  Normalization norm = Normalization::kMean);

// Sum (or mean) of squared forward differences of every field component along
// every spatial axis; the last difference along each axis is zero.
template <typename T>
VarT<T> smoothness(VarT<T> phi, Normalization norm = Normalization::kMean);

// -local_ncc(T(x, phi), y) + lambda * smoothness(phi)
template <typename T>
VarT<T> registration_loss(VarT<T> x, VarT<T> y, VarT<T> phi, const HyperParams& hp);

// L1(T(y_hat, phi_hat_rev) - x) + L1(T(x_hat, phi_hat_fwd) - y)
template <typename T>
VarT<T> cycle_loss(VarT<T> x, VarT<T> y, VarT<T> x_hat, VarT<T> y_hat, VarT<T> phi_hat_fwd,
                   VarT<T> phi_hat_rev, Normalization norm = Normalization::kMean);

// -ncc(T(y, net_fwd(y,y)), y) - ncc(T(x, net_rev(x,x)), x)
template <typename T>
VarT<T> identity_loss(VarT<T> x, VarT<T> y, const NetFn<T>& net_fwd, const NetFn<T>& net_rev,
                      const HyperParams& hp);

template <typename T>
struct TotalLoss {
  VarT<T> total;      // graph node driving the backward pass
  VarT<T> disp_fwd;   // first-pass fields, handy for diagnostics
  VarT<T> disp_rev;
  double reg_fwd = 0;    // component values (always computed, even when
  double reg_rev = 0;    // their weight is zero)
  double cycle = 0;
  double identity = 0;
  double total_value = 0;  // reg_fwd + reg_rev + alpha*cycle + beta*identity
};

// Full objective: both registration losses, the switched-order cycle pass and
// the identity passes. Zero-weight terms are still evaluated for logging but
// are left out of the backward graph.
template <typename T>
TotalLoss<T> total_loss(VarT<T> x, VarT<T> y, const NetFn<T>& net_fwd, const NetFn<T>& net_rev,
                        const HyperParams& hp);

}  // namespace cm::losses
