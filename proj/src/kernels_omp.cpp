#include <omp.h>

#include <algorithm>
#include <cmath>

#include "cyclemorph/kernels.hpp"

namespace cm {

namespace detail {

void check_conv_shapes(const char* who, const std::vector<int>& in,
                       const std::vector<int>& weight, const std::vector<int>& bias,
                       ConvSpec spec) {
  const int rank = static_cast<int>(in.size());
  if (rank != 3 && rank != 4)
    throw ShapeError(std::string(who) + ": input must be [C,H,W] or [C,D,H,W], got " +
                     shape_str(in));
  if (static_cast<int>(weight.size()) != rank + 1 || weight[1] != in[0])
    throw_shape_error(who, in, weight);
  const int k = weight[2];
  for (size_t i = 2; i < weight.size(); ++i)
    if (weight[i] != k) throw ShapeError(std::string(who) + ": kernel must be cubic, got " +
                                         shape_str(weight));
  if (k % 2 == 0) throw ShapeError(std::string(who) + ": kernel edge must be odd");
  if (bias.size() != 1 || bias[0] != weight[0]) throw_shape_error(who, weight, bias);
  if (spec.stride < 1) throw ShapeError(std::string(who) + ": stride must be >= 1");
}

void check_warp_shapes(const char* who, const std::vector<int>& img,
                       const std::vector<int>& phi) {
  const int rank = static_cast<int>(img.size());
  if (rank != 3 && rank != 4)
    throw ShapeError(std::string(who) + ": image must be [C,H,W] or [C,D,H,W], got " +
                     shape_str(img));
  if (phi.size() != img.size() || phi[0] != rank - 1)
    throw_shape_error(who, img, phi);
  for (int d = 1; d < rank; ++d)
    if (phi[static_cast<size_t>(d)] != img[static_cast<size_t>(d)])
      throw_shape_error(who, img, phi);
}

}  // namespace detail

namespace kern {

using detail::lin_stencil;
using detail::LinStencil;

namespace {

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Valid output range [lo,hi] so that ix = ox*stride + kx - pad stays in [0, n).
inline void valid_range(int n_in, int n_out, int stride, int pad, int kx, int& lo, int& hi) {
  lo = std::max(0, ceil_div(pad - kx, stride));
  hi = std::min(n_out - 1, (n_in - 1 + pad - kx) / stride);
}

}  // namespace

template <typename T>
TensorT<T> conv_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                        ConvSpec spec) {
  detail::check_conv_shapes("conv", in.shape, weight.shape, bias.shape, spec);
  const int rank = in.rank();
  const int cin = in.shape[0], cout = weight.shape[0], k = weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;

  if (rank == 3) {
    const int ih = in.shape[1], iw = in.shape[2];
    const int oh = conv_out_extent(ih, k, s), ow = conv_out_extent(iw, k, s);
    TensorT<T> out({cout, oh, ow});
    const T* ip = in.data.data();
    const T* wp = weight.data.data();
    T* op = out.data.data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int oc = 0; oc < cout; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        T* orow = op + (static_cast<std::int64_t>(oc) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) orow[ox] = bias.data[static_cast<size_t>(oc)];
        for (int ic = 0; ic < cin; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s + ky - pad;
            if (iy < 0 || iy >= ih) continue;
            const T* irow = ip + (static_cast<std::int64_t>(ic) * ih + iy) * iw;
            const T* wrow = wp + ((static_cast<std::int64_t>(oc) * cin + ic) * k + ky) * k;
            for (int kx = 0; kx < k; ++kx) {
              const T wv = wrow[kx];
              int lo, hi;
              valid_range(iw, ow, s, pad, kx, lo, hi);
              const int off = kx - pad;
              for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * s + off];
            }
          }
        }
      }
    }
    return out;
  }

  const int id = in.shape[1], ih = in.shape[2], iw = in.shape[3];
  const int od = conv_out_extent(id, k, s), oh = conv_out_extent(ih, k, s),
            ow = conv_out_extent(iw, k, s);
  TensorT<T> out({cout, od, oh, ow});
  const T* ip = in.data.data();
  const T* wp = weight.data.data();
  T* op = out.data.data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
  for (int oc = 0; oc < cout; ++oc) {
    for (int oz = 0; oz < od; ++oz) {
      for (int oy = 0; oy < oh; ++oy) {
        T* orow = op + ((static_cast<std::int64_t>(oc) * od + oz) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) orow[ox] = bias.data[static_cast<size_t>(oc)];
      }
      for (int ic = 0; ic < cin; ++ic) {
        for (int kz = 0; kz < k; ++kz) {
          const int iz = oz * s + kz - pad;
          if (iz < 0 || iz >= id) continue;
          for (int oy = 0; oy < oh; ++oy) {
            T* orow = op + ((static_cast<std::int64_t>(oc) * od + oz) * oh + oy) * ow;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * s + ky - pad;
              if (iy < 0 || iy >= ih) continue;
              const T* irow = ip + ((static_cast<std::int64_t>(ic) * id + iz) * ih + iy) * iw;
              const T* wrow =
                  wp + (((static_cast<std::int64_t>(oc) * cin + ic) * k + kz) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const T wv = wrow[kx];
                int lo, hi;
                valid_range(iw, ow, s, pad, kx, lo, hi);
                const int off = kx - pad;
                for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * s + off];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> conv_grad_input(const TensorT<T>& grad_out, const TensorT<T>& weight,
                           const std::vector<int>& in_shape, ConvSpec spec) {
  const int rank = static_cast<int>(in_shape.size());
  const int cin = in_shape[0], cout = weight.shape[0], k = weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;
  TensorT<T> gin(in_shape);
  const T* gp = grad_out.data.data();
  const T* wp = weight.data.data();
  T* ginp = gin.data.data();

  if (rank == 3) {
    const int ih = in_shape[1], iw = in_shape[2];
    const int oh = grad_out.shape[1], ow = grad_out.shape[2];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ic = 0; ic < cin; ++ic) {
      for (int iy = 0; iy < ih; ++iy) {
        T* grow = ginp + (static_cast<std::int64_t>(ic) * ih + iy) * iw;
        for (int ky = 0; ky < k; ++ky) {
          const int ty = iy + pad - ky;
          if (ty < 0 || ty % s != 0) continue;
          const int oy = ty / s;
          if (oy >= oh) continue;
          for (int kx = 0; kx < k; ++kx) {
            for (int oc = 0; oc < cout; ++oc) {
              const T wv = wp[((static_cast<std::int64_t>(oc) * cin + ic) * k + ky) * k + kx];
              const T* grad_row = gp + (static_cast<std::int64_t>(oc) * oh + oy) * ow;
              int lo, hi;
              valid_range(iw, ow, s, pad, kx, lo, hi);
              const int off = kx - pad;
              for (int ox = lo; ox <= hi; ++ox) grow[ox * s + off] += wv * grad_row[ox];
            }
          }
        }
      }
    }
    return gin;
  }

  const int id = in_shape[1], ih = in_shape[2], iw = in_shape[3];
  const int od = grad_out.shape[1], oh = grad_out.shape[2], ow = grad_out.shape[3];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
  for (int ic = 0; ic < cin; ++ic) {
    for (int iz = 0; iz < id; ++iz) {
      for (int kz = 0; kz < k; ++kz) {
        const int tz = iz + pad - kz;
        if (tz < 0 || tz % s != 0) continue;
        const int oz = tz / s;
        if (oz >= od) continue;
        for (int iy = 0; iy < ih; ++iy) {
          T* grow = ginp + ((static_cast<std::int64_t>(ic) * id + iz) * ih + iy) * iw;
          for (int ky = 0; ky < k; ++ky) {
            const int ty = iy + pad - ky;
            if (ty < 0 || ty % s != 0) continue;
            const int oy = ty / s;
            if (oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              for (int oc = 0; oc < cout; ++oc) {
                const T wv =
                    wp[(((static_cast<std::int64_t>(oc) * cin + ic) * k + kz) * k + ky) * k + kx];
                const T* grad_row =
                    gp + ((static_cast<std::int64_t>(oc) * od + oz) * oh + oy) * ow;
                int lo, hi;
                valid_range(iw, ow, s, pad, kx, lo, hi);
                const int off = kx - pad;
                for (int ox = lo; ox <= hi; ++ox) grow[ox * s + off] += wv * grad_row[ox];
              }
            }
          }
        }
      }
    }
  }
  return gin;
}

template <typename T>
void conv_grad_params(const TensorT<T>& grad_out, const TensorT<T>& in, ConvSpec spec,
                      TensorT<T>& grad_weight, TensorT<T>& grad_bias) {
  const int rank = in.rank();
  const int cin = in.shape[0], cout = grad_weight.shape[0], k = grad_weight.shape[2];
  const int pad = (k - 1) / 2, s = spec.stride;
  const T* gp = grad_out.data.data();
  const T* ip = in.data.data();

  if (rank == 3) {
    const int ih = in.shape[1], iw = in.shape[2];
    const int oh = grad_out.shape[1], ow = grad_out.shape[2];
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int oc = 0; oc < cout; ++oc) {
      double bacc = 0.0;
      const T* gplane = gp + static_cast<std::int64_t>(oc) * oh * ow;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i)
        bacc += static_cast<double>(gplane[i]);
      grad_bias.data[static_cast<size_t>(oc)] = static_cast<T>(bacc);
      for (int ic = 0; ic < cin; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            int lo, hi;
            valid_range(iw, ow, s, pad, kx, lo, hi);
            const int off = kx - pad;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * s + ky - pad;
              if (iy < 0 || iy >= ih) continue;
              const T* irow = ip + (static_cast<std::int64_t>(ic) * ih + iy) * iw;
              const T* grow = gplane + static_cast<std::int64_t>(oy) * ow;
              for (int ox = lo; ox <= hi; ++ox)
                acc += static_cast<double>(grow[ox]) * static_cast<double>(irow[ox * s + off]);
            }
            grad_weight.data[static_cast<size_t>(
                ((static_cast<std::int64_t>(oc) * cin + ic) * k + ky) * k + kx)] =
                static_cast<T>(acc);
          }
        }
      }
    }
    return;
  }

  const int id = in.shape[1], ih = in.shape[2], iw = in.shape[3];
  const int od = grad_out.shape[1], oh = grad_out.shape[2], ow = grad_out.shape[3];
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (int oc = 0; oc < cout; ++oc) {
    double bacc = 0.0;
    const T* gplane = gp + static_cast<std::int64_t>(oc) * od * oh * ow;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(od) * oh * ow; ++i)
      bacc += static_cast<double>(gplane[i]);
    grad_bias.data[static_cast<size_t>(oc)] = static_cast<T>(bacc);
    for (int ic = 0; ic < cin; ++ic) {
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            int lo, hi;
            valid_range(iw, ow, s, pad, kx, lo, hi);
            const int off = kx - pad;
            for (int oz = 0; oz < od; ++oz) {
              const int iz = oz * s + kz - pad;
              if (iz < 0 || iz >= id) continue;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * s + ky - pad;
                if (iy < 0 || iy >= ih) continue;
                const T* irow = ip + ((static_cast<std::int64_t>(ic) * id + iz) * ih + iy) * iw;
                const T* grow = gplane + (static_cast<std::int64_t>(oz) * oh + oy) * ow;
                for (int ox = lo; ox <= hi; ++ox)
                  acc += static_cast<double>(grow[ox]) * static_cast<double>(irow[ox * s + off]);
              }
            }
            grad_weight.data[static_cast<size_t>(
                (((static_cast<std::int64_t>(oc) * cin + ic) * k + kz) * k + ky) * k + kx)] =
                static_cast<T>(acc);
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> window_sum1d(const TensorT<T>& in, int axis, int radius) {
  if (axis < 0 || axis >= in.rank())
    throw ShapeError("window_sum: axis out of range for " + shape_str(in.shape));
  if (radius < 0) throw ShapeError("window_sum: negative radius");
  const int n = in.shape[static_cast<size_t>(axis)];
  auto st = in.strides();
  const std::int64_t stride = st[static_cast<size_t>(axis)];
  const std::int64_t lines = in.numel() / n;
  TensorT<T> out(in.shape);
  const T* ip = in.data.data();
  T* op = out.data.data();
  // Lines along `axis`: outer index iterates the axes before it, inner the
  // axes after it (which are contiguous with extent == stride).
  const std::int64_t inner = stride;
  const std::int64_t outer = lines / inner;
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * n * inner + i;
      double acc = 0.0;
      const int head = std::min(radius, n - 1);
      for (int j = 0; j <= head; ++j) acc += static_cast<double>(ip[base + j * stride]);
      for (int pos = 0; pos < n; ++pos) {
        op[base + pos * stride] = static_cast<T>(acc);
        const int add = pos + radius + 1;
        if (add < n) acc += static_cast<double>(ip[base + add * stride]);
        const int sub = pos - radius;
        if (sub >= 0) acc -= static_cast<double>(ip[base + sub * stride]);
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> warp_forward(const TensorT<T>& img, const TensorT<T>& phi) {
  detail::check_warp_shapes("spatial_transform", img.shape, phi.shape);
  const int rank = img.rank() - 1;
  const int c = img.shape[0];
  TensorT<T> out(img.shape);
  const T* ip = img.data.data();
  const T* pp = phi.data.data();
  T* op = out.data.data();

  if (rank == 2) {
    const int h = img.shape[1], w = img.shape[2];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t v = static_cast<std::int64_t>(y) * w + x;
        auto sy = lin_stencil<T>(T(y) + pp[v], h);
        auto sx = lin_stencil<T>(T(x) + pp[plane + v], w);
        const std::int64_t q00 = static_cast<std::int64_t>(sy.i0) * w + sx.i0;
        const int xs = sx.step, ys = sy.step * w;
        const T wy1 = sy.f, wy0 = T(1) - sy.f;
        const T wx1 = sx.f, wx0 = T(1) - sx.f;
        for (int ch = 0; ch < c; ++ch) {
          const T* base = ip + ch * plane + q00;
          op[ch * plane + v] = wy0 * (wx0 * base[0] + wx1 * base[xs]) +
                               wy1 * (wx0 * base[ys] + wx1 * base[ys + xs]);
        }
      }
    }
    return out;
  }

  const int d = img.shape[1], h = img.shape[2], w = img.shape[3];
  const std::int64_t vol = static_cast<std::int64_t>(d) * h * w;
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t v = (static_cast<std::int64_t>(z) * h + y) * w + x;
        auto sz = lin_stencil<T>(T(z) + pp[v], d);
        auto sy = lin_stencil<T>(T(y) + pp[vol + v], h);
        auto sx = lin_stencil<T>(T(x) + pp[2 * vol + v], w);
        const std::int64_t q = (static_cast<std::int64_t>(sz.i0) * h + sy.i0) * w + sx.i0;
        const T wz1 = sz.f, wz0 = T(1) - sz.f;
        const T wy1 = sy.f, wy0 = T(1) - sy.f;
        const T wx1 = sx.f, wx0 = T(1) - sx.f;
        const std::int64_t hw = static_cast<std::int64_t>(h) * w;
        const std::int64_t xs = sx.step, ys = sy.step * w, zs = sz.step * hw;
        for (int ch = 0; ch < c; ++ch) {
          const T* b = ip + ch * vol + q;
          const T c00 = wx0 * b[0] + wx1 * b[xs];
          const T c01 = wx0 * b[ys] + wx1 * b[ys + xs];
          const T c10 = wx0 * b[zs] + wx1 * b[zs + xs];
          const T c11 = wx0 * b[zs + ys] + wx1 * b[zs + ys + xs];
          op[ch * vol + v] = wz0 * (wy0 * c00 + wy1 * c01) + wz1 * (wy0 * c10 + wy1 * c11);
        }
      }
    }
  }
  return out;
}

template <typename T>
void warp_grad(const TensorT<T>& img, const TensorT<T>& phi, const TensorT<T>& grad_out,
               TensorT<T>* grad_img, TensorT<T>* grad_phi) {
  detail::check_warp_shapes("spatial_transform", img.shape, phi.shape);
  const int rank = img.rank() - 1;
  const int c = img.shape[0];
  const T* ip = img.data.data();
  const T* pp = phi.data.data();
  const T* gp = grad_out.data.data();

  if (rank == 2) {
    const int h = img.shape[1], w = img.shape[2];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    if (grad_phi) {
#pragma omp parallel for schedule(static) num_threads(thread_count())
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::int64_t v = static_cast<std::int64_t>(y) * w + x;
          auto sy = lin_stencil<T>(T(y) + pp[v], h);
          auto sx = lin_stencil<T>(T(x) + pp[plane + v], w);
          const std::int64_t q00 = static_cast<std::int64_t>(sy.i0) * w + sx.i0;
          const int xs = sx.step, ys = sy.step * w;
          T gy = T(0), gx = T(0);
          for (int ch = 0; ch < c; ++ch) {
            const T* base = ip + ch * plane + q00;
            const T g = gp[ch * plane + v];
            // d/dsy: difference of x-interpolated rows; d/dsx symmetric
            gy += g * ((T(1) - sx.f) * (base[ys] - base[0]) + sx.f * (base[ys + xs] - base[xs]));
            gx += g * ((T(1) - sy.f) * (base[xs] - base[0]) + sy.f * (base[ys + xs] - base[ys]));
          }
          grad_phi->data[static_cast<size_t>(v)] = sy.live ? gy : T(0);
          grad_phi->data[static_cast<size_t>(plane + v)] = sx.live ? gx : T(0);
        }
      }
    }
    if (grad_img) {
      // serial scatter keeps accumulation order fixed
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::int64_t v = static_cast<std::int64_t>(y) * w + x;
          auto sy = lin_stencil<T>(T(y) + pp[v], h);
          auto sx = lin_stencil<T>(T(x) + pp[plane + v], w);
          const std::int64_t q00 = static_cast<std::int64_t>(sy.i0) * w + sx.i0;
          const int xs = sx.step, ys = sy.step * w;
          const T wy1 = sy.f, wy0 = T(1) - sy.f;
          const T wx1 = sx.f, wx0 = T(1) - sx.f;
          for (int ch = 0; ch < c; ++ch) {
            T* base = grad_img->data.data() + ch * plane + q00;
            const T g = gp[ch * plane + v];
            base[0] += g * wy0 * wx0;
            base[xs] += g * wy0 * wx1;
            base[ys] += g * wy1 * wx0;
            base[ys + xs] += g * wy1 * wx1;
          }
        }
      }
    }
    return;
  }

  const int d = img.shape[1], h = img.shape[2], w = img.shape[3];
  const std::int64_t vol = static_cast<std::int64_t>(d) * h * w;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  if (grad_phi) {
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::int64_t v = (static_cast<std::int64_t>(z) * h + y) * w + x;
          auto sz = lin_stencil<T>(T(z) + pp[v], d);
          auto sy = lin_stencil<T>(T(y) + pp[vol + v], h);
          auto sx = lin_stencil<T>(T(x) + pp[2 * vol + v], w);
          const std::int64_t q = (static_cast<std::int64_t>(sz.i0) * h + sy.i0) * w + sx.i0;
          const std::int64_t xs = sx.step, ys = sy.step * w, zs = sz.step * hw;
          const T wz1 = sz.f, wz0 = T(1) - sz.f;
          const T wy1 = sy.f, wy0 = T(1) - sy.f;
          const T wx1 = sx.f, wx0 = T(1) - sx.f;
          T gz = T(0), gy = T(0), gx = T(0);
          for (int ch = 0; ch < c; ++ch) {
            const T* b = ip + ch * vol + q;
            const T g = gp[ch * vol + v];
            const T c00 = wx0 * b[0] + wx1 * b[xs];
            const T c01 = wx0 * b[ys] + wx1 * b[ys + xs];
            const T c10 = wx0 * b[zs] + wx1 * b[zs + xs];
            const T c11 = wx0 * b[zs + ys] + wx1 * b[zs + ys + xs];
            gz += g * (wy0 * (c10 - c00) + wy1 * (c11 - c01));
            gy += g * (wz0 * (c01 - c00) + wz1 * (c11 - c10));
            const T dx00 = b[xs] - b[0];
            const T dx01 = b[ys + xs] - b[ys];
            const T dx10 = b[zs + xs] - b[zs];
            const T dx11 = b[zs + ys + xs] - b[zs + ys];
            gx += g * (wz0 * (wy0 * dx00 + wy1 * dx01) + wz1 * (wy0 * dx10 + wy1 * dx11));
          }
          grad_phi->data[static_cast<size_t>(v)] = sz.live ? gz : T(0);
          grad_phi->data[static_cast<size_t>(vol + v)] = sy.live ? gy : T(0);
          grad_phi->data[static_cast<size_t>(2 * vol + v)] = sx.live ? gx : T(0);
        }
      }
    }
  }
  if (grad_img) {
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::int64_t v = (static_cast<std::int64_t>(z) * h + y) * w + x;
          auto sz = lin_stencil<T>(T(z) + pp[v], d);
          auto sy = lin_stencil<T>(T(y) + pp[vol + v], h);
          auto sx = lin_stencil<T>(T(x) + pp[2 * vol + v], w);
          const std::int64_t q = (static_cast<std::int64_t>(sz.i0) * h + sy.i0) * w + sx.i0;
          const std::int64_t xs = sx.step, ys = sy.step * w, zs = sz.step * hw;
          const T wz1 = sz.f, wz0 = T(1) - sz.f;
          const T wy1 = sy.f, wy0 = T(1) - sy.f;
          const T wx1 = sx.f, wx0 = T(1) - sx.f;
          for (int ch = 0; ch < c; ++ch) {
            T* b = grad_img->data.data() + ch * vol + q;
            const T g = gp[ch * vol + v];
            b[0] += g * wz0 * wy0 * wx0;
            b[xs] += g * wz0 * wy0 * wx1;
            b[ys] += g * wz0 * wy1 * wx0;
            b[ys + xs] += g * wz0 * wy1 * wx1;
            b[zs] += g * wz1 * wy0 * wx0;
            b[zs + xs] += g * wz1 * wy0 * wx1;
            b[zs + ys] += g * wz1 * wy1 * wx0;
            b[zs + ys + xs] += g * wz1 * wy1 * wx1;
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& in, int factor) {
  if (factor < 1) throw ShapeError("upsample: factor must be >= 1");
  const int rank = in.rank();
  if (rank != 3 && rank != 4) throw ShapeError("upsample: expected [C,spatial...]");
  std::vector<int> os = in.shape;
  for (int i = 1; i < rank; ++i) os[static_cast<size_t>(i)] *= factor;
  TensorT<T> out(os);
  const T* ip = in.data.data();
  T* op = out.data.data();
  if (rank == 3) {
    const int c = in.shape[0], ih = in.shape[1], iw = in.shape[2];
    const int oh = os[1], ow = os[2];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        const T* irow = ip + (static_cast<std::int64_t>(ch) * ih + oy / factor) * iw;
        T* orow = op + (static_cast<std::int64_t>(ch) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) orow[ox] = irow[ox / factor];
      }
    }
  } else {
    const int c = in.shape[0], id = in.shape[1], ih = in.shape[2], iw = in.shape[3];
    const int od = os[1], oh = os[2], ow = os[3];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int oz = 0; oz < od; ++oz) {
        for (int oy = 0; oy < oh; ++oy) {
          const T* irow =
              ip + ((static_cast<std::int64_t>(ch) * id + oz / factor) * ih + oy / factor) * iw;
          T* orow = op + ((static_cast<std::int64_t>(ch) * od + oz) * oh + oy) * ow;
          for (int ox = 0; ox < ow; ++ox) orow[ox] = irow[ox / factor];
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> upsample_nearest_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                                 int factor) {
  TensorT<T> gin(in_shape);
  const int rank = static_cast<int>(in_shape.size());
  const T* gp = grad_out.data.data();
  T* ip = gin.data.data();
  if (rank == 3) {
    const int c = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int ow = grad_out.shape[2];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int iy = 0; iy < ih; ++iy) {
        T* irow = ip + (static_cast<std::int64_t>(ch) * ih + iy) * iw;
        for (int ix = 0; ix < iw; ++ix) {
          double acc = 0.0;
          for (int fy = 0; fy < factor; ++fy) {
            const T* grow =
                gp + (static_cast<std::int64_t>(ch) * ih * factor + iy * factor + fy) * ow +
                static_cast<std::int64_t>(ix) * factor;
            for (int fx = 0; fx < factor; ++fx) acc += static_cast<double>(grow[fx]);
          }
          irow[ix] = static_cast<T>(acc);
        }
      }
    }
  } else {
    const int c = in_shape[0], id = in_shape[1], ih = in_shape[2], iw = in_shape[3];
    const int od = grad_out.shape[1], oh = grad_out.shape[2], ow = grad_out.shape[3];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int iz = 0; iz < id; ++iz) {
        for (int iy = 0; iy < ih; ++iy) {
          T* irow = ip + ((static_cast<std::int64_t>(ch) * id + iz) * ih + iy) * iw;
          for (int ix = 0; ix < iw; ++ix) {
            double acc = 0.0;
            for (int fz = 0; fz < factor; ++fz) {
              for (int fy = 0; fy < factor; ++fy) {
                const T* grow = gp + ((static_cast<std::int64_t>(ch) * od + iz * factor + fz) * oh +
                                      iy * factor + fy) *
                                         ow +
                                static_cast<std::int64_t>(ix) * factor;
                for (int fx = 0; fx < factor; ++fx) acc += static_cast<double>(grow[fx]);
              }
            }
            irow[ix] = static_cast<T>(acc);
          }
        }
      }
    }
  }
  return gin;
}

template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& in, const std::vector<int>& factors) {
  const int rank = in.rank();
  if (rank != 3 && rank != 4) throw ShapeError("downsample: expected [C,spatial...]");
  if (static_cast<int>(factors.size()) != rank - 1)
    throw ShapeError("downsample: need one factor per spatial axis");
  std::vector<int> os = in.shape;
  for (int i = 1; i < rank; ++i) {
    const int f = factors[static_cast<size_t>(i - 1)];
    if (f < 1) throw ShapeError("downsample: factors must be >= 1");
    if (os[static_cast<size_t>(i)] % f != 0)
      throw ShapeError("downsample: extent " + std::to_string(os[static_cast<size_t>(i)]) +
                       " not divisible by factor " + std::to_string(f));
    os[static_cast<size_t>(i)] /= f;
  }
  TensorT<T> out(os);
  const T* ip = in.data.data();
  T* op = out.data.data();
  if (rank == 3) {
    const int c = in.shape[0], iw = in.shape[2];
    const int oh = os[1], ow = os[2];
    const int fy = factors[0], fx = factors[1];
    const double inv = 1.0 / (fy * fx);
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        T* orow = op + (static_cast<std::int64_t>(ch) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int dy = 0; dy < fy; ++dy) {
            const T* irow =
                ip + (static_cast<std::int64_t>(ch) * in.shape[1] + oy * fy + dy) * iw +
                static_cast<std::int64_t>(ox) * fx;
            for (int dx = 0; dx < fx; ++dx) acc += static_cast<double>(irow[dx]);
          }
          orow[ox] = static_cast<T>(acc * inv);
        }
      }
    }
  } else {
    const int c = in.shape[0], id = in.shape[1], ih = in.shape[2], iw = in.shape[3];
    const int od = os[1], oh = os[2], ow = os[3];
    const int fz = factors[0], fy = factors[1], fx = factors[2];
    const double inv = 1.0 / (fz * fy * fx);
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int oz = 0; oz < od; ++oz) {
        for (int oy = 0; oy < oh; ++oy) {
          T* orow = op + ((static_cast<std::int64_t>(ch) * od + oz) * oh + oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int dz = 0; dz < fz; ++dz) {
              for (int dy = 0; dy < fy; ++dy) {
                const T* irow =
                    ip + ((static_cast<std::int64_t>(ch) * id + oz * fz + dz) * ih + oy * fy + dy) *
                             iw +
                    static_cast<std::int64_t>(ox) * fx;
                for (int dx = 0; dx < fx; ++dx) acc += static_cast<double>(irow[dx]);
              }
            }
            orow[ox] = static_cast<T>(acc * inv);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> downsample_avg_grad(const TensorT<T>& grad_out, const std::vector<int>& in_shape,
                               const std::vector<int>& factors) {
  TensorT<T> gin(in_shape);
  const int rank = static_cast<int>(in_shape.size());
  double block = 1.0;
  for (int f : factors) block *= f;
  const T scale = static_cast<T>(1.0 / block);
  const T* gp = grad_out.data.data();
  T* ip = gin.data.data();
  if (rank == 3) {
    const int c = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int ow = grad_out.shape[2];
    const int fy = factors[0], fx = factors[1];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int iy = 0; iy < ih; ++iy) {
        const T* grow =
            gp + (static_cast<std::int64_t>(ch) * grad_out.shape[1] + iy / fy) * ow;
        T* irow = ip + (static_cast<std::int64_t>(ch) * ih + iy) * iw;
        for (int ix = 0; ix < iw; ++ix) irow[ix] = grow[ix / fx] * scale;
      }
    }
  } else {
    const int c = in_shape[0], id = in_shape[1], ih = in_shape[2], iw = in_shape[3];
    const int od = grad_out.shape[1], oh = grad_out.shape[2], ow = grad_out.shape[3];
    const int fz = factors[0], fy = factors[1], fx = factors[2];
#pragma omp parallel for collapse(2) schedule(static) num_threads(thread_count())
    for (int ch = 0; ch < c; ++ch) {
      for (int iz = 0; iz < id; ++iz) {
        for (int iy = 0; iy < ih; ++iy) {
          const T* grow = gp + ((static_cast<std::int64_t>(ch) * od + iz / fz) * oh + iy / fy) * ow;
          T* irow = ip + ((static_cast<std::int64_t>(ch) * id + iz) * ih + iy) * iw;
          for (int ix = 0; ix < iw; ++ix) irow[ix] = grow[ix / fx] * scale;
        }
      }
    }
  }
  return gin;
}

template <typename T>
double reduce_sum(const TensorT<T>& in) {
  constexpr std::int64_t kChunk = 4096;
  const std::int64_t n = in.numel();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
  const T* p = in.data.data();
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::int64_t c = 0; c < chunks; ++c) {
    double acc = 0.0;
    const std::int64_t hi = std::min(n, (c + 1) * kChunk);
    for (std::int64_t i = c * kChunk; i < hi; ++i) acc += static_cast<double>(p[i]);
    partial[static_cast<size_t>(c)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

// explicit instantiations: float engine + double gradient-check mode
#define CM_INSTANTIATE_KERNELS(T)                                                              \
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

CM_INSTANTIATE_KERNELS(float)
CM_INSTANTIATE_KERNELS(double)
#undef CM_INSTANTIATE_KERNELS

}  // namespace kern

}  // namespace cm
