#include <cmath>

#include "cyclemorph/kernels.hpp"

// Serial reference path: textbook loops, no tiling, no parallel pragmas.
// Used by the kernel equivalence tests and by tools/bench_kernels.

namespace cm::kern_ref {

using detail::lin_stencil;

namespace {

// generic spatial index helpers (rank 2 or 3 spatial axes)
struct Grid {
  int rank = 0;      // spatial rank
  int n[3] = {1, 1, 1};
  std::int64_t voxels() const {
    std::int64_t v = 1;
    for (int i = 0; i < rank; ++i) v *= n[i];
    return v;
  }
};

Grid spatial_of(const std::vector<int>& shape) {
  Grid g;
  g.rank = static_cast<int>(shape.size()) - 1;
  for (int i = 0; i < g.rank; ++i) g.n[i] = shape[static_cast<size_t>(i + 1)];
  return g;
}

void unflatten(std::int64_t v, const Grid& g, int idx[3]) {
  for (int i = g.rank - 1; i >= 0; --i) {
    idx[i] = static_cast<int>(v % g.n[i]);
    v /= g.n[i];
  }
}

std::int64_t flatten(const int idx[3], const Grid& g) {
  std::int64_t v = 0;
  for (int i = 0; i < g.rank; ++i) v = v * g.n[i] + idx[i];
  return v;
}

}  // namespace

template <typename T>
TensorT<T> conv_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                        ConvSpec spec) {
  detail::check_conv_shapes("conv", in.shape, weight.shape, bias.shape, spec);
  const int cin = in.shape[0], cout = weight.shape[0], k = weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;
  Grid gi = spatial_of(in.shape);
  std::vector<int> out_shape{cout};
  for (int i = 0; i < gi.rank; ++i) out_shape.push_back(conv_out_extent(gi.n[i], k, s));
  TensorT<T> out(out_shape);
  Grid go = spatial_of(out_shape);
  const int taps = gi.rank == 2 ? k * k : k * k * k;

  for (int oc = 0; oc < cout; ++oc) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3];
      unflatten(ov, go, op);
      double acc = static_cast<double>(bias.data[static_cast<size_t>(oc)]);
      for (int ic = 0; ic < cin; ++ic) {
        for (int t = 0; t < taps; ++t) {
          int kp[3], ip[3];
          int rem = t;
          for (int a = gi.rank - 1; a >= 0; --a) {
            kp[a] = rem % k;
            rem /= k;
          }
          bool inside = true;
          for (int a = 0; a < gi.rank; ++a) {
            ip[a] = op[a] * s + kp[a] - pad;
            if (ip[a] < 0 || ip[a] >= gi.n[a]) inside = false;
          }
          if (!inside) continue;
          const std::int64_t widx = (static_cast<std::int64_t>(oc) * cin + ic) * taps + t;
          acc += static_cast<double>(weight.data[static_cast<size_t>(widx)]) *
                 static_cast<double>(in.data[static_cast<size_t>(ic * gi.voxels() + flatten(ip, gi))]);
        }
      }
      out.data[static_cast<size_t>(oc * go.voxels() + ov)] = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
TensorT<T> conv_grad_input(const TensorT<T>& grad_out, const TensorT<T>& weight,
                           const std::vector<int>& in_shape, ConvSpec spec) {
  const int cin = in_shape[0], cout = weight.shape[0], k = weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;
  TensorT<T> gin(in_shape);
  Grid gi = spatial_of(in_shape);
  Grid go = spatial_of(grad_out.shape);
  const int taps = gi.rank == 2 ? k * k : k * k * k;

  for (int oc = 0; oc < cout; ++oc) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3];
      unflatten(ov, go, op);
      const double g = static_cast<double>(grad_out.data[static_cast<size_t>(oc * go.voxels() + ov)]);
      for (int ic = 0; ic < cin; ++ic) {
        for (int t = 0; t < taps; ++t) {
          int kp[3], ip[3];
          int rem = t;
          for (int a = gi.rank - 1; a >= 0; --a) {
            kp[a] = rem % k;
            rem /= k;
          }
          bool inside = true;
          for (int a = 0; a < gi.rank; ++a) {
            ip[a] = op[a] * s + kp[a] - pad;
            if (ip[a] < 0 || ip[a] >= gi.n[a]) inside = false;
          }
          if (!inside) continue;
          const std::int64_t widx = (static_cast<std::int64_t>(oc) * cin + ic) * taps + t;
          gin.data[static_cast<size_t>(ic * gi.voxels() + flatten(ip, gi))] +=
              static_cast<T>(g * static_cast<double>(weight.data[static_cast<size_t>(widx)]));
        }
      }
    }
  }
  return gin;
}

template <typename T>
void conv_grad_params(const TensorT<T>& grad_out, const TensorT<T>& in, ConvSpec spec,
                      TensorT<T>& grad_weight, TensorT<T>& grad_bias) {
  const int cin = in.shape[0], cout = grad_weight.shape[0], k = grad_weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;
  Grid gi = spatial_of(in.shape);
  Grid go = spatial_of(grad_out.shape);
  const int taps = gi.rank == 2 ? k * k : k * k * k;
  std::vector<double> wacc(grad_weight.data.size(), 0.0);
  std::vector<double> bacc(static_cast<size_t>(cout), 0.0);

  for (int oc = 0; oc < cout; ++oc) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3];
      unflatten(ov, go, op);
      const double g = static_cast<double>(grad_out.data[static_cast<size_t>(oc * go.voxels() + ov)]);
      bacc[static_cast<size_t>(oc)] += g;
      for (int ic = 0; ic < cin; ++ic) {
        for (int t = 0; t < taps; ++t) {
          int kp[3], ip[3];
          int rem = t;
          for (int a = gi.rank - 1; a >= 0; --a) {
            kp[a] = rem % k;
            rem /= k;
          }
          bool inside = true;
          for (int a = 0; a < gi.rank; ++a) {
            ip[a] = op[a] * s + kp[a] - pad;
            if (ip[a] < 0 || ip[a] >= gi.n[a]) inside = false;
          }
          if (!inside) continue;
          wacc[static_cast<size_t>((static_cast<std::int64_t>(oc) * cin + ic) * taps + t)] +=
              g * static_cast<double>(in.data[static_cast<size_t>(ic * gi.voxels() + flatten(ip, gi))]);
        }
      }
    }
  }
  for (size_t i = 0; i < wacc.size(); ++i) grad_weight.data[i] = static_cast<T>(wacc[i]);
  for (int oc = 0; oc < cout; ++oc)
    grad_bias.data[static_cast<size_t>(oc)] = static_cast<T>(bacc[static_cast<size_t>(oc)]);
}

template <typename T>
TensorT<T> window_sum1d(const TensorT<T>& in, int axis, int radius) {
  if (axis < 0 || axis >= in.rank())
    throw ShapeError("window_sum: axis out of range for " + shape_str(in.shape));
  const int n = in.shape[static_cast<size_t>(axis)];
  auto st = in.strides();
  const std::int64_t stride = st[static_cast<size_t>(axis)];
  TensorT<T> out(in.shape);
  for (std::int64_t idx = 0; idx < in.numel(); ++idx) {
    const int pos = static_cast<int>((idx / stride) % n);
    double acc = 0.0;
    for (int j = std::max(0, pos - radius); j <= std::min(n - 1, pos + radius); ++j)
      acc += static_cast<double>(in.data[static_cast<size_t>(idx + (j - pos) * stride)]);
    out.data[static_cast<size_t>(idx)] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
TensorT<T> warp_forward(const TensorT<T>& img, const TensorT<T>& phi) {
  detail::check_warp_shapes("spatial_transform", img.shape, phi.shape);
  const int c = img.shape[0];
  Grid g = spatial_of(img.shape);
  const std::int64_t vox = g.voxels();
  TensorT<T> out(img.shape);
  for (std::int64_t v = 0; v < vox; ++v) {
    int p[3];
    unflatten(v, g, p);
    detail::LinStencil<T> st[3];
    for (int a = 0; a < g.rank; ++a)
      st[a] = lin_stencil<T>(T(p[a]) + phi.data[static_cast<size_t>(a * vox + v)], g.n[a]);
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int corner = 0; corner < (1 << g.rank); ++corner) {
        double wgt = 1.0;
        int q[3];
        for (int a = 0; a < g.rank; ++a) {
          const bool hi = (corner >> a) & 1;
          wgt *= hi ? static_cast<double>(st[a].f) : 1.0 - static_cast<double>(st[a].f);
          q[a] = st[a].i0 + (hi ? st[a].step : 0);
        }
        acc += wgt * static_cast<double>(img.data[static_cast<size_t>(ch * vox + flatten(q, g))]);
      }
      out.data[static_cast<size_t>(ch * vox + v)] = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
void warp_grad(const TensorT<T>& img, const TensorT<T>& phi, const TensorT<T>& grad_out,
               TensorT<T>* grad_img, TensorT<T>* grad_phi) {
  detail::check_warp_shapes("spatial_transform", img.shape, phi.shape);
  const int c = img.shape[0];
  Grid g = spatial_of(img.shape);
  const std::int64_t vox = g.voxels();
  for (std::int64_t v = 0; v < vox; ++v) {
    int p[3];
    unflatten(v, g, p);
    detail::LinStencil<T> st[3];
    for (int a = 0; a < g.rank; ++a)
      st[a] = lin_stencil<T>(T(p[a]) + phi.data[static_cast<size_t>(a * vox + v)], g.n[a]);
    for (int ch = 0; ch < c; ++ch) {
      const double gout = static_cast<double>(grad_out.data[static_cast<size_t>(ch * vox + v)]);
      for (int corner = 0; corner < (1 << g.rank); ++corner) {
        int q[3];
        double wgt = 1.0;
        for (int a = 0; a < g.rank; ++a) {
          const bool hi = (corner >> a) & 1;
          wgt *= hi ? static_cast<double>(st[a].f) : 1.0 - static_cast<double>(st[a].f);
          q[a] = st[a].i0 + (hi ? st[a].step : 0);
        }
        const std::int64_t qi = ch * vox + flatten(q, g);
        if (grad_img) grad_img->data[static_cast<size_t>(qi)] += static_cast<T>(gout * wgt);
        if (grad_phi) {
          for (int a = 0; a < g.rank; ++a) {
            if (!st[a].live) continue;
            const bool hi = (corner >> a) & 1;
            double dw = hi ? 1.0 : -1.0;
            for (int b = 0; b < g.rank; ++b) {
              if (b == a) continue;
              const bool bh = (corner >> b) & 1;
              dw *= bh ? static_cast<double>(st[b].f) : 1.0 - static_cast<double>(st[b].f);
            }
            grad_phi->data[static_cast<size_t>(a * vox + v)] += static_cast<T>(
                gout * dw * static_cast<double>(img.data[static_cast<size_t>(qi)]));
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& in, int factor) {
  if (factor < 1) throw ShapeError("upsample: factor must be >= 1");
  std::vector<int> os = in.shape;
  for (size_t i = 1; i < os.size(); ++i) os[i] *= factor;
  TensorT<T> out(os);
  Grid go = spatial_of(os);
  Grid gi = spatial_of(in.shape);
  const int c = in.shape[0];
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3], ip[3];
      unflatten(ov, go, op);
      for (int a = 0; a < go.rank; ++a) ip[a] = op[a] / factor;
      out.data[static_cast<size_t>(ch * go.voxels() + ov)] =
          in.data[static_cast<size_t>(ch * gi.voxels() + flatten(ip, gi))];
    }
  }
  return out;
}

template <typename T>
TensorT<T> upsample_nearest_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                                 int factor) {
  TensorT<T> gin(in_shape);
  Grid go = spatial_of(grad_out.shape);
  Grid gi = spatial_of(in_shape);
  const int c = in_shape[0];
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3], ip[3];
      unflatten(ov, go, op);
      for (int a = 0; a < go.rank; ++a) ip[a] = op[a] / factor;
      gin.data[static_cast<size_t>(ch * gi.voxels() + flatten(ip, gi))] +=
          grad_out.data[static_cast<size_t>(ch * go.voxels() + ov)];
    }
  }
  return gin;
}

template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& in, const std::vector<int>& factors) {
  const int rank = in.rank();
  if (static_cast<int>(factors.size()) != rank - 1)
    throw ShapeError("downsample: need one factor per spatial axis");
  std::vector<int> os = in.shape;
  for (int i = 1; i < rank; ++i) {
    if (os[static_cast<size_t>(i)] % factors[static_cast<size_t>(i - 1)] != 0)
      throw ShapeError("downsample: extents must divide by factors");
    os[static_cast<size_t>(i)] /= factors[static_cast<size_t>(i - 1)];
  }
  TensorT<T> out(os);
  Grid go = spatial_of(os);
  Grid gi = spatial_of(in.shape);
  const int c = in.shape[0];
  std::int64_t block = 1;
  for (int f : factors) block *= f;
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t ov = 0; ov < go.voxels(); ++ov) {
      int op[3];
      unflatten(ov, go, op);
      double acc = 0.0;
      for (std::int64_t b = 0; b < block; ++b) {
        int ip[3];
        std::int64_t rem = b;
        for (int a = go.rank - 1; a >= 0; --a) {
          const int f = factors[static_cast<size_t>(a)];
          ip[a] = op[a] * f + static_cast<int>(rem % f);
          rem /= f;
        }
        acc += static_cast<double>(in.data[static_cast<size_t>(ch * gi.voxels() + flatten(ip, gi))]);
      }
      out.data[static_cast<size_t>(ch * go.voxels() + ov)] =
          static_cast<T>(acc / static_cast<double>(block));
    }
  }
  return out;
}

template <typename T>
TensorT<T> downsample_avg_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                               const std::vector<int>& factors) {
  TensorT<T> gin(in_shape);
  Grid gi = spatial_of(in_shape);
  Grid go = spatial_of(grad_out.shape);
  const int c = in_shape[0];
  std::int64_t block = 1;
  for (int f : factors) block *= f;
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t iv = 0; iv < gi.voxels(); ++iv) {
      int ip[3], op[3];
      unflatten(iv, gi, ip);
      for (int a = 0; a < gi.rank; ++a) op[a] = ip[a] / factors[static_cast<size_t>(a)];
      gin.data[static_cast<size_t>(ch * gi.voxels() + iv)] =
          grad_out.data[static_cast<size_t>(ch * go.voxels() + flatten(op, go))] /
          static_cast<T>(block);
    }
  }
  return gin;
}

template <typename T>
double reduce_sum(const TensorT<T>& in) {
  double acc = 0.0;
  for (const T& v : in.data) acc += static_cast<double>(v);
  return acc;
}

#define CM_INSTANTIATE_REF(T)                                                                  \
  template TensorT<T> conv_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                      ConvSpec);                                               \
  template TensorT<T> conv_grad_input<T>(const TensorT<T>&, const TensorT<T>&,                 \
                                         const std::vector<int>&, ConvSpec);                   \
  template void conv_grad_params<T>(const TensorT<T>&, const TensorT<T>&, ConvSpec,            \
                                    TensorT<T>&, TensorT<T>&);                                 \
  template TensorT<T> window_sum1d<T>(const TensorT<T>&, int, int);                            \
  template TensorT<T> warp_forward<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template void warp_grad<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,          \
                             TensorT<T>*, TensorT<T>*);                                        \
  template TensorT<T> upsample_nearest<T>(const TensorT<T>&, int);                             \
  template TensorT<T> upsample_nearest_grad<T>(const TensorT<T>&, const std::vector<int>&,     \
                                               int);                                           \
  template TensorT<T> downsample_avg<T>(const TensorT<T>&, const std::vector<int>&);           \
  template TensorT<T> downsample_avg_grad<T>(const TensorT<T>&, const std::vector<int>&,       \
                                             const std::vector<int>&);                         \
  template double reduce_sum<T>(const TensorT<T>&);

CM_INSTANTIATE_REF(float)
CM_INSTANTIATE_REF(double)
#undef CM_INSTANTIATE_REF

}  // namespace cm::kern_ref
