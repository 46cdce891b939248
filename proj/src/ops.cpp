#include "cyclemorph/ops.hpp"

#include <cmath>

namespace cm::ops {

namespace {

template <typename T>
void check_same_shape(const char* op, const VarT<T>& a, const VarT<T>& b) {
  if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands from different tapes");
  if (a.shape() != b.shape()) throw_shape_error(op, a.shape(), b.shape());
}

template <typename T>
void accumulate(TensorT<T>& dst, const TensorT<T>& src) {
  T* d = dst.data.data();
  const T* s = src.data.data();
  const std::int64_t n = dst.numel();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

// elementwise helper: out[i] = f(a[i], b[i])
template <typename T, typename F>
TensorT<T> zip(const char* op, const TensorT<T>& a, const TensorT<T>& b, F f) {
  TensorT<T> out(a.shape);
  const std::int64_t n = a.numel();
  const T* pa = a.data.data();
  const T* pb = b.data.data();
  T* po = out.data.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  check_finite(op, out);
  return out;
}

template <typename T, typename F>
TensorT<T> map(const char* op, const TensorT<T>& a, F f) {
  TensorT<T> out(a.shape);
  const std::int64_t n = a.numel();
  const T* pa = a.data.data();
  T* po = out.data.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  check_finite(op, out);
  return out;
}

}  // namespace

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  check_same_shape("add", a, b);
  auto out = zip("add", a.value(), b.value(), [](T x, T y) { return x + y; });
  return a.tape->push(std::move(out), {a.id, b.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) accumulate(*g, ctx.grad_out());
    if (auto* g = ctx.grad(1)) accumulate(*g, ctx.grad_out());
  });
}

template <typename T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
  check_same_shape("sub", a, b);
  auto out = zip("sub", a.value(), b.value(), [](T x, T y) { return x - y; });
  return a.tape->push(std::move(out), {a.id, b.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) accumulate(*g, ctx.grad_out());
    if (auto* g = ctx.grad(1)) {
      const T* s = ctx.grad_out().data.data();
      T* d = g->data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) d[i] -= s[i];
    }
  });
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  check_same_shape("mul", a, b);
  auto out = zip("mul", a.value(), b.value(), [](T x, T y) { return x * y; });
  return a.tape->push(std::move(out), {a.id, b.id}, [](typename TapeT<T>::Ctx& ctx) {
    const TensorT<T>& go = ctx.grad_out();
    if (auto* g = ctx.grad(0)) {
      const T* other = ctx.value(1).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] += go[i] * other[i];
    }
    if (auto* g = ctx.grad(1)) {
      const T* other = ctx.value(0).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] += go[i] * other[i];
    }
  });
}

template <typename T>
VarT<T> div(VarT<T> a, VarT<T> b, double eps) {
  check_same_shape("div", a, b);
  const T e = static_cast<T>(eps);
  auto out = zip("div", a.value(), b.value(), [e](T x, T y) { return x / (y + e); });
  return a.tape->push(std::move(out), {a.id, b.id}, [e](typename TapeT<T>::Ctx& ctx) {
    const TensorT<T>& go = ctx.grad_out();
    const T* pa = ctx.value(0).data.data();
    const T* pb = ctx.value(1).data.data();
    if (auto* g = ctx.grad(0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i)
        g->data[static_cast<size_t>(i)] += go[i] / (pb[i] + e);
    }
    if (auto* g = ctx.grad(1)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        const T den = pb[i] + e;
        g->data[static_cast<size_t>(i)] -= go[i] * pa[i] / (den * den);
      }
    }
  });
}

template <typename T>
VarT<T> neg(VarT<T> a) {
  auto out = map("neg", a.value(), [](T x) { return -x; });
  return a.tape->push(std::move(out), {a.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] -= s[i];
    }
  });
}

template <typename T>
VarT<T> square(VarT<T> a) {
  auto out = map("square", a.value(), [](T x) { return x * x; });
  return a.tape->push(std::move(out), {a.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      const T* v = ctx.value(0).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i)
        g->data[static_cast<size_t>(i)] += T(2) * v[i] * s[i];
    }
  });
}

template <typename T>
VarT<T> sqrt(VarT<T> a, double eps) {
  const T e = static_cast<T>(eps);
  auto out = map("sqrt", a.value(), [e](T x) { return std::sqrt(x + e); });
  return a.tape->push(std::move(out), {a.id}, [e](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      const T* v = ctx.value(0).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i)
        g->data[static_cast<size_t>(i)] += s[i] * T(0.5) / std::sqrt(v[i] + e);
    }
  });
}

template <typename T>
VarT<T> abs(VarT<T> a) {
  auto out = map("abs", a.value(), [](T x) { return x < T(0) ? -x : x; });
  return a.tape->push(std::move(out), {a.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      const T* v = ctx.value(0).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        const T sign = v[i] > T(0) ? T(1) : (v[i] < T(0) ? T(-1) : T(0));
        g->data[static_cast<size_t>(i)] += s[i] * sign;
      }
    }
  });
}

template <typename T>
VarT<T> leaky_relu(VarT<T> a, double slope) {
  const T sl = static_cast<T>(slope);
  auto out = map("leaky_relu", a.value(), [sl](T x) { return x > T(0) ? x : sl * x; });
  return a.tape->push(std::move(out), {a.id}, [sl](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      const T* v = ctx.value(0).data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i)
        g->data[static_cast<size_t>(i)] += s[i] * (v[i] > T(0) ? T(1) : sl);
    }
  });
}

template <typename T>
VarT<T> add_scalar(VarT<T> a, double c) {
  const T cc = static_cast<T>(c);
  auto out = map("add_scalar", a.value(), [cc](T x) { return x + cc; });
  return a.tape->push(std::move(out), {a.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) accumulate(*g, ctx.grad_out());
  });
}

template <typename T>
VarT<T> mul_scalar(VarT<T> a, double c) {
  const T cc = static_cast<T>(c);
  auto out = map("mul_scalar", a.value(), [cc](T x) { return x * cc; });
  return a.tape->push(std::move(out), {a.id}, [cc](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T* s = ctx.grad_out().data.data();
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] += s[i] * cc;
    }
  });
}

template <typename T>
VarT<T> sum(VarT<T> a) {
  TensorT<T> out({1});
  out.data[0] = static_cast<T>(kern::reduce_sum(a.value()));
  check_finite("sum", out);
  return a.tape->push(std::move(out), {a.id}, [](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T go = ctx.grad_out().data[0];
      for (auto& v : g->data) v += go;
    }
  });
}

template <typename T>
VarT<T> mean(VarT<T> a) {
  const std::int64_t n = a.value().numel();
  TensorT<T> out({1});
  out.data[0] = static_cast<T>(kern::reduce_sum(a.value()) / static_cast<double>(n));
  check_finite("mean", out);
  return a.tape->push(std::move(out), {a.id}, [n](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const T go = ctx.grad_out().data[0] / static_cast<T>(n);
      for (auto& v : g->data) v += go;
    }
  });
}

template <typename T>
VarT<T> sum_axis(VarT<T> a, int axis) {
  const auto& in = a.value();
  if (axis < 0 || axis >= in.rank())
    throw ShapeError("sum_axis: axis out of range for " + shape_str(in.shape));
  const int n = in.shape[static_cast<size_t>(axis)];
  auto st = in.strides();
  const std::int64_t stride = st[static_cast<size_t>(axis)];
  const std::int64_t inner = stride;
  const std::int64_t outer = in.numel() / (static_cast<std::int64_t>(n) * inner);
  std::vector<int> oshape;
  for (int i = 0; i < in.rank(); ++i)
    if (i != axis) oshape.push_back(in.shape[static_cast<size_t>(i)]);
  if (oshape.empty()) oshape.push_back(1);
  TensorT<T> out(oshape);
  const T* ip = in.data.data();
  T* op = out.data.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        acc += static_cast<double>(ip[o * n * inner + j * stride + i]);
      op[o * inner + i] = static_cast<T>(acc);
    }
  check_finite("sum_axis", out);
  return a.tape->push(std::move(out), {a.id},
                      [n, inner, outer, stride](typename TapeT<T>::Ctx& ctx) {
                        if (auto* g = ctx.grad(0)) {
                          const T* go = ctx.grad_out().data.data();
                          for (std::int64_t o = 0; o < outer; ++o)
                            for (std::int64_t i = 0; i < inner; ++i) {
                              const T gv = go[o * inner + i];
                              for (int j = 0; j < n; ++j)
                                g->data[static_cast<size_t>(o * n * inner + j * stride + i)] += gv;
                            }
                        }
                      });
}

template <typename T>
VarT<T> window_sum1d(VarT<T> a, int axis, int radius) {
  auto out = kern::window_sum1d(a.value(), axis, radius);
  check_finite("window_sum", out);
  return a.tape->push(std::move(out), {a.id}, [axis, radius](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      // clipped symmetric box sums are self-adjoint
      accumulate(*g, kern::window_sum1d(ctx.grad_out(), axis, radius));
    }
  });
}

template <typename T>
VarT<T> window_sum_spatial(VarT<T> a, int radius) {
  VarT<T> cur = a;
  for (int axis = 1; axis < a.value().rank(); ++axis) cur = window_sum1d(cur, axis, radius);
  return cur;
}

template <typename T>
VarT<T> forward_diff(VarT<T> a, int axis) {
  const auto& in = a.value();
  if (axis < 0 || axis >= in.rank())
    throw ShapeError("forward_diff: axis out of range for " + shape_str(in.shape));
  const int n = in.shape[static_cast<size_t>(axis)];
  auto st = in.strides();
  const std::int64_t stride = st[static_cast<size_t>(axis)];
  const std::int64_t inner = stride;
  const std::int64_t outer = in.numel() / (static_cast<std::int64_t>(n) * inner);
  TensorT<T> out(in.shape);
  const T* ip = in.data.data();
  T* op = out.data.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (int j = 0; j < n; ++j)
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t at = o * n * inner + j * stride + i;
        op[at] = (j + 1 < n) ? ip[at + stride] - ip[at] : T(0);
      }
  return a.tape->push(std::move(out), {a.id},
                      [n, inner, outer, stride](typename TapeT<T>::Ctx& ctx) {
                        if (auto* g = ctx.grad(0)) {
                          const T* go = ctx.grad_out().data.data();
                          for (std::int64_t o = 0; o < outer; ++o)
                            for (int j = 0; j < n; ++j)
                              for (std::int64_t i = 0; i < inner; ++i) {
                                const std::int64_t at = o * n * inner + j * stride + i;
                                T acc = T(0);
                                if (j > 0) acc += go[at - stride];
                                if (j + 1 < n) acc -= go[at];
                                g->data[static_cast<size_t>(at)] += acc;
                              }
                        }
                      });
}

template <typename T>
VarT<T> conv(VarT<T> x, VarT<T> weight, VarT<T> bias, int stride) {
  if (x.tape != weight.tape || x.tape != bias.tape)
    throw ShapeError("conv: operands from different tapes");
  ConvSpec spec{stride};
  auto out = kern::conv_forward(x.value(), weight.value(), bias.value(), spec);
  check_finite("conv", out);
  return x.tape->push(std::move(out), {x.id, weight.id, bias.id},
                      [spec](typename TapeT<T>::Ctx& ctx) {
                        const TensorT<T>& go = ctx.grad_out();
                        if (auto* gx = ctx.grad(0)) {
                          accumulate(*gx, kern::conv_grad_input(go, ctx.value(1),
                                                                ctx.value(0).shape, spec));
                        }
                        TensorT<T>* gw = ctx.grad(1);
                        TensorT<T>* gb = ctx.grad(2);
                        if (gw || gb) {
                          TensorT<T> dw(ctx.value(1).shape);
                          TensorT<T> db(ctx.value(2).shape);
                          kern::conv_grad_params(go, ctx.value(0), spec, dw, db);
                          if (gw) accumulate(*gw, dw);
                          if (gb) accumulate(*gb, db);
                        }
                      });
}

template <typename T>
VarT<T> upsample_nearest(VarT<T> x, int factor) {
  auto out = kern::upsample_nearest(x.value(), factor);
  const auto in_shape = x.value().shape;
  return x.tape->push(std::move(out), {x.id}, [in_shape, factor](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0))
      accumulate(*g, kern::upsample_nearest_grad(ctx.grad_out(), in_shape, factor));
  });
}

template <typename T>
VarT<T> downsample_avg(VarT<T> x, const std::vector<int>& factors) {
  auto out = kern::downsample_avg(x.value(), factors);
  const auto in_shape = x.value().shape;
  return x.tape->push(std::move(out), {x.id}, [in_shape, factors](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0))
      accumulate(*g, kern::downsample_avg_grad(ctx.grad_out(), in_shape, factors));
  });
}

template <typename T>
VarT<T> concat_channels(VarT<T> a, VarT<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.tape != b.tape) throw ShapeError("concat: operands from different tapes");
  if (av.rank() != bv.rank()) throw_shape_error("concat", av.shape, bv.shape);
  for (int i = 1; i < av.rank(); ++i)
    if (av.shape[static_cast<size_t>(i)] != bv.shape[static_cast<size_t>(i)])
      throw_shape_error("concat", av.shape, bv.shape);
  std::vector<int> os = av.shape;
  os[0] += bv.shape[0];
  TensorT<T> out(os);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
  const std::int64_t na = av.numel();
  return a.tape->push(std::move(out), {a.id, b.id}, [na](typename TapeT<T>::Ctx& ctx) {
    const T* go = ctx.grad_out().data.data();
    if (auto* g = ctx.grad(0))
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] += go[i];
    if (auto* g = ctx.grad(1))
      for (std::int64_t i = 0; i < g->numel(); ++i) g->data[static_cast<size_t>(i)] += go[na + i];
  });
}

namespace {

// shared index walker for crop/pad over trailing spatial axes
template <typename T, typename F>
void for_each_window(const TensorT<T>& small, const std::vector<int>& big_shape,
                     const std::vector<int>& lo, F f) {
  const int rank = small.rank();
  const int c = small.shape[0];
  std::vector<std::int64_t> bst(static_cast<size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    bst[static_cast<size_t>(i)] = bst[static_cast<size_t>(i + 1)] *
                                  big_shape[static_cast<size_t>(i + 1)];
  if (rank == 3) {
    const int h = small.shape[1], w = small.shape[2];
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::int64_t si = (static_cast<std::int64_t>(ch) * h + y) * w + x;
          const std::int64_t bi = ch * bst[0] + (y + lo[0]) * bst[1] + (x + lo[1]);
          f(si, bi);
        }
  } else {
    const int d = small.shape[1], h = small.shape[2], w = small.shape[3];
    for (int ch = 0; ch < c; ++ch)
      for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const std::int64_t si = ((static_cast<std::int64_t>(ch) * d + z) * h + y) * w + x;
            const std::int64_t bi =
                ch * bst[0] + (z + lo[0]) * bst[1] + (y + lo[1]) * bst[2] + (x + lo[2]);
            f(si, bi);
          }
  }
}

}  // namespace

template <typename T>
VarT<T> crop_spatial(VarT<T> x, const std::vector<int>& lo, const std::vector<int>& size) {
  const auto& in = x.value();
  const int rank = in.rank();
  if (rank != 3 && rank != 4) throw ShapeError("crop: expected [C,spatial...]");
  if (static_cast<int>(lo.size()) != rank - 1 || lo.size() != size.size())
    throw ShapeError("crop: offsets/sizes must cover spatial axes");
  std::vector<int> os{in.shape[0]};
  for (int i = 0; i < rank - 1; ++i) {
    if (lo[static_cast<size_t>(i)] < 0 ||
        lo[static_cast<size_t>(i)] + size[static_cast<size_t>(i)] >
            in.shape[static_cast<size_t>(i + 1)])
      throw ShapeError("crop: window exceeds " + shape_str(in.shape));
    os.push_back(size[static_cast<size_t>(i)]);
  }
  TensorT<T> out(os);
  const auto in_shape = in.shape;
  for_each_window(out, in_shape, lo,
                  [&](std::int64_t si, std::int64_t bi) { out.data[static_cast<size_t>(si)] = in.data[static_cast<size_t>(bi)]; });
  return x.tape->push(std::move(out), {x.id}, [in_shape, lo](typename TapeT<T>::Ctx& ctx) {
    if (auto* g = ctx.grad(0)) {
      const auto& go = ctx.grad_out();
      for_each_window(go, in_shape, lo, [&](std::int64_t si, std::int64_t bi) {
        g->data[static_cast<size_t>(bi)] += go.data[static_cast<size_t>(si)];
      });
    }
  });
}

template <typename T>
VarT<T> pad_spatial(VarT<T> x, const std::vector<int>& lo, const std::vector<int>& hi) {
  const auto& in = x.value();
  const int rank = in.rank();
  if (rank != 3 && rank != 4) throw ShapeError("pad: expected [C,spatial...]");
  if (static_cast<int>(lo.size()) != rank - 1 || lo.size() != hi.size())
    throw ShapeError("pad: offsets must cover spatial axes");
  std::vector<int> os{in.shape[0]};
  for (int i = 0; i < rank - 1; ++i) {
    if (lo[static_cast<size_t>(i)] < 0 || hi[static_cast<size_t>(i)] < 0)
      throw ShapeError("pad: negative padding");
    os.push_back(in.shape[static_cast<size_t>(i + 1)] + lo[static_cast<size_t>(i)] +
                 hi[static_cast<size_t>(i)]);
  }
  TensorT<T> out(os);
  const auto out_shape = os;
  for_each_window(in, out_shape, lo, [&](std::int64_t si, std::int64_t bi) {
    out.data[static_cast<size_t>(bi)] = in.data[static_cast<size_t>(si)];
  });
  const auto in_shape = in.shape;
  return x.tape->push(std::move(out), {x.id},
                      [out_shape, in_shape, lo](typename TapeT<T>::Ctx& ctx) {
                        if (auto* g = ctx.grad(0)) {
                          const auto& go = ctx.grad_out();
                          for_each_window(*g, out_shape, lo, [&](std::int64_t si, std::int64_t bi) {
                            g->data[static_cast<size_t>(si)] += go.data[static_cast<size_t>(bi)];
                          });
                        }
                      });
}

template <typename T>
VarT<T> warp(VarT<T> img, VarT<T> phi) {
  if (img.tape != phi.tape) throw ShapeError("spatial_transform: operands from different tapes");
  auto out = kern::warp_forward(img.value(), phi.value());
  check_finite("spatial_transform", out);
  return img.tape->push(std::move(out), {img.id, phi.id}, [](typename TapeT<T>::Ctx& ctx) {
    TensorT<T>* gi = ctx.grad(0);
    TensorT<T>* gp = ctx.grad(1);
    if (!gi && !gp) return;
    TensorT<T> di, dp;
    if (gi) di = TensorT<T>(ctx.value(0).shape);
    if (gp) dp = TensorT<T>(ctx.value(1).shape);
    kern::warp_grad(ctx.value(0), ctx.value(1), ctx.grad_out(), gi ? &di : nullptr,
                    gp ? &dp : nullptr);
    if (gi) accumulate(*gi, di);
    if (gp) accumulate(*gp, dp);
  });
}

#define CM_INSTANTIATE_OPS(T)                                                          \
  template VarT<T> add<T>(VarT<T>, VarT<T>);                                           \
  template VarT<T> sub<T>(VarT<T>, VarT<T>);                                           \
  template VarT<T> mul<T>(VarT<T>, VarT<T>);                                           \
  template VarT<T> div<T>(VarT<T>, VarT<T>, double);                                   \
  template VarT<T> neg<T>(VarT<T>);                                                    \
  template VarT<T> square<T>(VarT<T>);                                                 \
  template VarT<T> sqrt<T>(VarT<T>, double);                                           \
  template VarT<T> abs<T>(VarT<T>);                                                    \
  template VarT<T> leaky_relu<T>(VarT<T>, double);                                     \
  template VarT<T> add_scalar<T>(VarT<T>, double);                                     \
  template VarT<T> mul_scalar<T>(VarT<T>, double);                                     \
  template VarT<T> sum<T>(VarT<T>);                                                    \
  template VarT<T> mean<T>(VarT<T>);                                                   \
  template VarT<T> sum_axis<T>(VarT<T>, int);                                          \
  template VarT<T> window_sum1d<T>(VarT<T>, int, int);                                 \
  template VarT<T> window_sum_spatial<T>(VarT<T>, int);                                \
  template VarT<T> forward_diff<T>(VarT<T>, int);                                      \
  template VarT<T> conv<T>(VarT<T>, VarT<T>, VarT<T>, int);                            \
  template VarT<T> upsample_nearest<T>(VarT<T>, int);                                  \
  template VarT<T> downsample_avg<T>(VarT<T>, const std::vector<int>&);                \
  template VarT<T> concat_channels<T>(VarT<T>, VarT<T>);                               \
  template VarT<T> crop_spatial<T>(VarT<T>, const std::vector<int>&,                   \
                                   const std::vector<int>&);                           \
  template VarT<T> pad_spatial<T>(VarT<T>, const std::vector<int>&,                    \
                                  const std::vector<int>&);                            \
  template VarT<T> warp<T>(VarT<T>, VarT<T>);

CM_INSTANTIATE_OPS(float)
CM_INSTANTIATE_OPS(double)
#undef CM_INSTANTIATE_OPS

}  // namespace cm::ops
