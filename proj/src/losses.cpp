#include "cyclemorph/losses.hpp"

namespace cm::losses {

void HyperParams::validate() const {
  if (alpha < 0 || beta < 0 || lambda < 0)
    throw ConfigError("hyperparams: alpha, beta, lambda must be >= 0");
  if (ncc_window < 3 || ncc_window % 2 == 0)
    throw ConfigError("hyperparams: ncc window must be odd and >= 3");
  if (eps <= 0) throw ConfigError("hyperparams: eps must be > 0");
}

namespace {

template <typename T>
VarT<T> aggregate(VarT<T> per_voxel, Normalization norm) {
  return norm == Normalization::kMean ? ops::mean(per_voxel) : ops::sum(per_voxel);
}

// window_sum of ones = per-voxel effective window size (clipped at borders)
template <typename T>
VarT<T> window_counts(TapeT<T>& tape, const std::vector<int>& shape, int radius) {
  TensorT<T> ones(shape, T(1));
  TensorT<T> counts = ones;
  for (int axis = 1; axis < static_cast<int>(shape.size()); ++axis)
    counts = kern::window_sum1d(counts, axis, radius);
  return tape.leaf(std::move(counts));
}

}  // namespace

template <typename T>
VarT<T> local_ncc(VarT<T> a, VarT<T> b, int window, double eps, Normalization norm) {
  const auto& av = a.value();
  if (av.shape != b.value().shape) throw_shape_error("local_ncc", av.shape, b.value().shape);
  if (av.shape[0] != 1)
    throw ShapeError("local_ncc: expects single-channel images, got " + shape_str(av.shape));
  if (window % 2 == 0 || window < 3) throw ShapeError("local_ncc: window must be odd and >= 3");
  const int r = (window - 1) / 2;

  auto ws = [r](VarT<T> v) { return ops::window_sum_spatial(v, r); };
  VarT<T> sa = ws(a);
  VarT<T> sb = ws(b);
  VarT<T> saa = ws(ops::square(a));
  VarT<T> sbb = ws(ops::square(b));
  VarT<T> sab = ws(ops::mul(a, b));
  VarT<T> counts = window_counts(*a.tape, av.shape, r);

  // cross = sum(AB) - sum(A)sum(B)/n ; var terms analogous (counts >= 1)
  VarT<T> cross = ops::sub(sab, ops::div(ops::mul(sa, sb), counts, 0.0));
  VarT<T> var_a = ops::sub(saa, ops::div(ops::square(sa), counts, 0.0));
  VarT<T> var_b = ops::sub(sbb, ops::div(ops::square(sb), counts, 0.0));
  VarT<T> cc = ops::div(ops::square(cross), ops::mul(var_a, var_b), eps);
  return aggregate(cc, norm);
}

template <typename T>
VarT<T> smoothness(VarT<T> phi, Normalization norm) {
  const auto& pv = phi.value();
  const int axes = pv.rank() - 1;
  VarT<T> acc;
  for (int axis = 1; axis <= axes; ++axis) {
    VarT<T> term = ops::sum(ops::square(ops::forward_diff(phi, axis)));
    acc = axis == 1 ? term : ops::add(acc, term);
  }
  if (norm == Normalization::kMean) {
    // mean over every (voxel, component, axis) difference entry
    acc = ops::mul_scalar(acc, 1.0 / (static_cast<double>(pv.numel()) * axes));
  }
  return acc;
}

template <typename T>
VarT<T> registration_loss(VarT<T> x, VarT<T> y, VarT<T> phi, const HyperParams& hp) {
  VarT<T> warped = ops::warp(x, phi);
  VarT<T> sim = ops::neg(local_ncc(warped, y, hp.ncc_window, hp.eps, hp.normalization));
  if (hp.lambda == 0.0) return sim;
  return ops::add(sim, ops::mul_scalar(smoothness(phi, hp.normalization), hp.lambda));
}

template <typename T>
VarT<T> cycle_loss(VarT<T> x, VarT<T> y, VarT<T> x_hat, VarT<T> y_hat, VarT<T> phi_hat_fwd,
                   VarT<T> phi_hat_rev, Normalization norm) {
  if (x.shape() != y.shape()) throw_shape_error("cycle_loss", x.shape(), y.shape());
  VarT<T> back_to_x = ops::warp(y_hat, phi_hat_rev);
  VarT<T> back_to_y = ops::warp(x_hat, phi_hat_fwd);
  VarT<T> l1_x = aggregate(ops::abs(ops::sub(back_to_x, x)), norm);
  VarT<T> l1_y = aggregate(ops::abs(ops::sub(back_to_y, y)), norm);
  return ops::add(l1_x, l1_y);
}

template <typename T>
VarT<T> identity_loss(VarT<T> x, VarT<T> y, const NetFn<T>& net_fwd, const NetFn<T>& net_rev,
                      const HyperParams& hp) {
  VarT<T> self_y = hp.identity_same_net ? net_rev(y, y) : net_fwd(y, y);
  VarT<T> self_x = hp.identity_same_net ? net_fwd(x, x) : net_rev(x, x);
  VarT<T> ncc_y =
      local_ncc(ops::warp(y, self_y), y, hp.ncc_window, hp.eps, hp.normalization);
  VarT<T> ncc_x =
      local_ncc(ops::warp(x, self_x), x, hp.ncc_window, hp.eps, hp.normalization);
  return ops::neg(ops::add(ncc_y, ncc_x));
}

template <typename T>
TotalLoss<T> total_loss(VarT<T> x, VarT<T> y, const NetFn<T>& net_fwd, const NetFn<T>& net_rev,
                        const HyperParams& hp) {
  hp.validate();
  TotalLoss<T> out;

  // first pass
  out.disp_fwd = net_fwd(x, y);
  out.disp_rev = net_rev(y, x);
  VarT<T> y_hat = ops::warp(x, out.disp_fwd);
  VarT<T> x_hat = ops::warp(y, out.disp_rev);

  VarT<T> reg_fwd = ops::add(
      ops::neg(local_ncc(y_hat, y, hp.ncc_window, hp.eps, hp.normalization)),
      ops::mul_scalar(smoothness(out.disp_fwd, hp.normalization), hp.lambda));
  VarT<T> reg_rev = ops::add(
      ops::neg(local_ncc(x_hat, x, hp.ncc_window, hp.eps, hp.normalization)),
      ops::mul_scalar(smoothness(out.disp_rev, hp.normalization), hp.lambda));

  // second pass on the deformed pair with the order switched
  VarT<T> phi_hat_rev = net_rev(y_hat, x_hat);
  VarT<T> phi_hat_fwd = net_fwd(x_hat, y_hat);
  VarT<T> cyc = cycle_loss(x, y, x_hat, y_hat, phi_hat_fwd, phi_hat_rev, hp.normalization);

  VarT<T> ident = identity_loss(x, y, net_fwd, net_rev, hp);

  out.reg_fwd = static_cast<double>(reg_fwd.scalar());
  out.reg_rev = static_cast<double>(reg_rev.scalar());
  out.cycle = static_cast<double>(cyc.scalar());
  out.identity = static_cast<double>(ident.scalar());
  out.total_value =
      out.reg_fwd + out.reg_rev + hp.alpha * out.cycle + hp.beta * out.identity;

  // zero-weight terms stay out of the graph so backward skips their subtrees
  VarT<T> total = ops::add(reg_fwd, reg_rev);
  if (hp.alpha > 0) total = ops::add(total, ops::mul_scalar(cyc, hp.alpha));
  if (hp.beta > 0) total = ops::add(total, ops::mul_scalar(ident, hp.beta));
  out.total = total;
  return out;
}

#define CM_INSTANTIATE_LOSSES(T)                                                         \
  template VarT<T> local_ncc<T>(VarT<T>, VarT<T>, int, double, Normalization);           \
  template VarT<T> smoothness<T>(VarT<T>, Normalization);                                \
  template VarT<T> registration_loss<T>(VarT<T>, VarT<T>, VarT<T>, const HyperParams&);  \
  template VarT<T> cycle_loss<T>(VarT<T>, VarT<T>, VarT<T>, VarT<T>, VarT<T>, VarT<T>,   \
                                 Normalization);                                         \
  template VarT<T> identity_loss<T>(VarT<T>, VarT<T>, const NetFn<T>&, const NetFn<T>&,  \
                                    const HyperParams&);                                 \
  template TotalLoss<T> total_loss<T>(VarT<T>, VarT<T>, const NetFn<T>&, const NetFn<T>&, \
                                      const HyperParams&);

CM_INSTANTIATE_LOSSES(float)
CM_INSTANTIATE_LOSSES(double)
#undef CM_INSTANTIATE_LOSSES

}  // namespace cm::losses
