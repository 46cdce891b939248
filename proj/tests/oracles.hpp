#pragma once

// Brute-force reference computations for the test suite. Everything here is
// written as directly as possible from the definitions, in double precision,
// independent of the library's kernels and graph machinery.

#include <cmath>
#include <functional>
#include <vector>

#include "cyclemorph/rng.hpp"
#include "cyclemorph/tape.hpp"

namespace oracle {

using cm::TensorT;

inline int idx_of(const std::vector<int>& idx, const std::vector<int>& extents) {
  int flat = 0;
  for (size_t d = 0; d < extents.size(); ++d) flat = flat * extents[d] + idx[d];
  return flat;
}

inline void unflatten(std::int64_t v, const std::vector<int>& extents, std::vector<int>& idx) {
  idx.assign(extents.size(), 0);
  for (int d = static_cast<int>(extents.size()) - 1; d >= 0; --d) {
    idx[static_cast<size_t>(d)] = static_cast<int>(v % extents[static_cast<size_t>(d)]);
    v /= extents[static_cast<size_t>(d)];
  }
}

// multilinear interpolation with clamped coordinates, any rank
template <typename T>
double interp_at(const std::vector<T>& data, const std::vector<int>& extents,
                 std::vector<double> pos) {
  const int rank = static_cast<int>(extents.size());
  for (int d = 0; d < rank; ++d) {
    const double hi = static_cast<double>(extents[static_cast<size_t>(d)] - 1);
    if (pos[static_cast<size_t>(d)] < 0) pos[static_cast<size_t>(d)] = 0;
    if (pos[static_cast<size_t>(d)] > hi) pos[static_cast<size_t>(d)] = hi;
  }
  double acc = 0.0;
  const int corners = 1 << rank;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::vector<int> q(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) {
      const int n = extents[static_cast<size_t>(d)];
      double p = pos[static_cast<size_t>(d)];
      int i0 = static_cast<int>(std::floor(p));
      if (i0 > n - 2) i0 = n - 2;
      if (i0 < 0) i0 = 0;
      const double f = n == 1 ? 0.0 : p - i0;
      const bool hi = (c >> d) & 1;
      w *= hi ? f : 1.0 - f;
      q[static_cast<size_t>(d)] = n == 1 ? 0 : i0 + (hi ? 1 : 0);
    }
    acc += w * static_cast<double>(data[static_cast<size_t>(idx_of(q, extents))]);
  }
  return acc;
}

// warp: out(p)[c] = img[c] interpolated at p + phi(p)
template <typename T>
TensorT<double> direct_warp(const TensorT<T>& img, const TensorT<T>& phi) {
  const int c = img.shape[0];
  std::vector<int> extents(img.shape.begin() + 1, img.shape.end());
  const int rank = static_cast<int>(extents.size());
  std::int64_t vox = 1;
  for (int e : extents) vox *= e;
  TensorT<double> out;
  out.shape = img.shape;
  out.data.assign(img.data.size(), 0.0);
  std::vector<int> idx;
  for (std::int64_t v = 0; v < vox; ++v) {
    unflatten(v, extents, idx);
    std::vector<double> pos(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d)
      pos[static_cast<size_t>(d)] =
          idx[static_cast<size_t>(d)] + static_cast<double>(phi.data[static_cast<size_t>(d * vox + v)]);
    for (int ch = 0; ch < c; ++ch) {
      std::vector<T> plane(img.data.begin() + ch * vox, img.data.begin() + (ch + 1) * vox);
      out.data[static_cast<size_t>(ch * vox + v)] = interp_at(plane, extents, pos);
    }
  }
  return out;
}

// local cross-correlation: per-voxel window means computed directly
template <typename T>
double direct_ncc(const TensorT<T>& a, const TensorT<T>& b, int window, double eps,
                  bool mean_mode) {
  std::vector<int> extents(a.shape.begin() + 1, a.shape.end());
  const int rank = static_cast<int>(extents.size());
  const int r = (window - 1) / 2;
  std::int64_t vox = 1;
  for (int e : extents) vox *= e;
  double total = 0.0;
  std::vector<int> idx;
  for (std::int64_t v = 0; v < vox; ++v) {
    unflatten(v, extents, idx);
    // gather the clipped window
    std::vector<double> av, bv;
    std::vector<int> it(idx.size());
    std::function<void(int)> visit = [&](int d) {
      if (d == rank) {
        const int flat = idx_of(it, extents);
        av.push_back(static_cast<double>(a.data[static_cast<size_t>(flat)]));
        bv.push_back(static_cast<double>(b.data[static_cast<size_t>(flat)]));
        return;
      }
      const int lo = std::max(0, idx[static_cast<size_t>(d)] - r);
      const int hi = std::min(extents[static_cast<size_t>(d)] - 1, idx[static_cast<size_t>(d)] + r);
      for (int j = lo; j <= hi; ++j) {
        it[static_cast<size_t>(d)] = j;
        visit(d + 1);
      }
    };
    visit(0);
    const double n = static_cast<double>(av.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < av.size(); ++i) {
      ma += av[i];
      mb += bv[i];
    }
    ma /= n;
    mb /= n;
    double cross = 0, va = 0, vb = 0;
    for (size_t i = 0; i < av.size(); ++i) {
      cross += (av[i] - ma) * (bv[i] - mb);
      va += (av[i] - ma) * (av[i] - ma);
      vb += (bv[i] - mb) * (bv[i] - mb);
    }
    total += cross * cross / (va * vb + eps);
  }
  return mean_mode ? total / static_cast<double>(vox) : total;
}

// squared forward differences of every component along every axis
template <typename T>
double direct_smoothness(const TensorT<T>& phi, bool mean_mode) {
  std::vector<int> extents(phi.shape.begin() + 1, phi.shape.end());
  const int rank = static_cast<int>(extents.size());
  std::int64_t vox = 1;
  for (int e : extents) vox *= e;
  double total = 0.0;
  std::vector<int> idx;
  for (int comp = 0; comp < phi.shape[0]; ++comp) {
    for (std::int64_t v = 0; v < vox; ++v) {
      unflatten(v, extents, idx);
      for (int axis = 0; axis < rank; ++axis) {
        if (idx[static_cast<size_t>(axis)] + 1 >= extents[static_cast<size_t>(axis)]) continue;
        std::vector<int> nxt = idx;
        ++nxt[static_cast<size_t>(axis)];
        const double d =
            static_cast<double>(phi.data[static_cast<size_t>(comp * vox + idx_of(nxt, extents))]) -
            static_cast<double>(phi.data[static_cast<size_t>(comp * vox + v)]);
        total += d * d;
      }
    }
  }
  if (mean_mode) total /= static_cast<double>(phi.numel() * rank);
  return total;
}

// folding: central-difference Jacobian of v + phi(v) at interior voxels
template <typename T>
double direct_folding(const TensorT<T>& phi, bool literal) {
  std::vector<int> extents(phi.shape.begin() + 1, phi.shape.end());
  const int rank = static_cast<int>(extents.size());
  std::int64_t vox = 1;
  for (int e : extents) vox *= e;
  std::int64_t interior = 0, folded = 0;
  std::vector<int> idx;
  for (std::int64_t v = 0; v < vox; ++v) {
    unflatten(v, extents, idx);
    bool inner = true;
    for (int d = 0; d < rank; ++d)
      inner = inner && idx[static_cast<size_t>(d)] >= 1 &&
              idx[static_cast<size_t>(d)] <= extents[static_cast<size_t>(d)] - 2;
    if (!inner) continue;
    double j[3][3] = {{0}};
    for (int i = 0; i < rank; ++i) {
      for (int k = 0; k < rank; ++k) {
        std::vector<int> plus = idx, minus = idx;
        ++plus[static_cast<size_t>(k)];
        --minus[static_cast<size_t>(k)];
        j[i][k] = (i == k && !literal ? 1.0 : 0.0) +
                  0.5 * (static_cast<double>(
                             phi.data[static_cast<size_t>(i * vox + idx_of(plus, extents))]) -
                         static_cast<double>(
                             phi.data[static_cast<size_t>(i * vox + idx_of(minus, extents))]));
      }
    }
    double det;
    if (rank == 2)
      det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    else
      det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
            j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
            j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    ++interior;
    if (det <= 0) ++folded;
  }
  return 100.0 * static_cast<double>(folded) / static_cast<double>(interior);
}

inline double direct_nmse(const std::vector<float>& a, const std::vector<float>& b) {
  double num = 0, den = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    den += static_cast<double>(b[i]) * b[i];
  }
  return num / den;
}

// SSIM over clipped 7-edge uniform windows, population statistics
inline double direct_ssim(const std::vector<float>& a, const std::vector<float>& b,
                          const std::vector<int>& extents) {
  const int rank = static_cast<int>(extents.size());
  const int r = 3;
  const double c1 = 0.0001, c2 = 0.0009;
  std::int64_t vox = 1;
  for (int e : extents) vox *= e;
  double total = 0.0;
  std::vector<int> idx;
  for (std::int64_t v = 0; v < vox; ++v) {
    unflatten(v, extents, idx);
    std::vector<double> av, bv;
    std::vector<int> it(idx.size());
    std::function<void(int)> visit = [&](int d) {
      if (d == rank) {
        const int flat = idx_of(it, extents);
        av.push_back(a[static_cast<size_t>(flat)]);
        bv.push_back(b[static_cast<size_t>(flat)]);
        return;
      }
      const int lo = std::max(0, idx[static_cast<size_t>(d)] - r);
      const int hi = std::min(extents[static_cast<size_t>(d)] - 1, idx[static_cast<size_t>(d)] + r);
      for (int j = lo; j <= hi; ++j) {
        it[static_cast<size_t>(d)] = j;
        visit(d + 1);
      }
    };
    visit(0);
    const double n = static_cast<double>(av.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < av.size(); ++i) {
      ma += av[i];
      mb += bv[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < av.size(); ++i) {
      va += (av[i] - ma) * (av[i] - ma);
      vb += (bv[i] - mb) * (bv[i] - mb);
      cov += (av[i] - ma) * (bv[i] - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(vox);
}

// direct convolution, zero padding (k-1)/2, cubic kernel, any stride
template <typename T>
TensorT<double> direct_conv(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                            int stride) {
  const int cin = in.shape[0], cout = w.shape[0], k = w.shape[2];
  const int pad = (k - 1) / 2;
  std::vector<int> sp(in.shape.begin() + 1, in.shape.end());
  const int rank = static_cast<int>(sp.size());
  std::vector<int> osp;
  for (int e : sp) osp.push_back((e + 2 * pad - k) / stride + 1);
  std::vector<int> oshape{cout};
  for (int e : osp) oshape.push_back(e);
  TensorT<double> out;
  out.shape = oshape;
  std::int64_t ovox = 1;
  for (int e : osp) ovox *= e;
  std::int64_t ivox = 1;
  for (int e : sp) ivox *= e;
  out.data.assign(static_cast<size_t>(ovox) * cout, 0.0);
  std::vector<int> oidx, kidx;
  const std::int64_t taps = rank == 2 ? k * k : static_cast<std::int64_t>(k) * k * k;
  std::vector<int> kext(static_cast<size_t>(rank), k);
  for (int oc = 0; oc < cout; ++oc) {
    for (std::int64_t ov = 0; ov < ovox; ++ov) {
      unflatten(ov, osp, oidx);
      double acc = static_cast<double>(b.data[static_cast<size_t>(oc)]);
      for (int ic = 0; ic < cin; ++ic) {
        for (std::int64_t t = 0; t < taps; ++t) {
          unflatten(t, kext, kidx);
          std::vector<int> iidx(static_cast<size_t>(rank));
          bool inside = true;
          for (int d = 0; d < rank; ++d) {
            iidx[static_cast<size_t>(d)] = oidx[static_cast<size_t>(d)] * stride +
                                           kidx[static_cast<size_t>(d)] - pad;
            inside = inside && iidx[static_cast<size_t>(d)] >= 0 &&
                     iidx[static_cast<size_t>(d)] < sp[static_cast<size_t>(d)];
          }
          if (!inside) continue;
          acc += static_cast<double>(
                     w.data[static_cast<size_t>((static_cast<std::int64_t>(oc) * cin + ic) * taps + t)]) *
                 static_cast<double>(in.data[static_cast<size_t>(ic * ivox + idx_of(iidx, sp))]);
        }
      }
      out.data[static_cast<size_t>(oc * ovox + ov)] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// central finite-difference gradient checker (64-bit graph instantiation)

struct FdReport {
  double max_rel = 0.0;   // worst relative error where gradients are sizable
  double max_abs = 0.0;   // worst absolute error where gradients are tiny
  bool ok = true;
  std::string detail;
};

// build(tape, leaves) -> scalar loss; inputs become requires_grad leaves
using BuildFn = std::function<cm::VarT<double>(cm::TapeT<double>&,
                                               std::vector<cm::VarT<double>>&)>;

inline FdReport fd_check(std::vector<TensorT<double>> inputs, const BuildFn& build,
                         double h = 1e-3) {
  FdReport report;
  std::vector<TensorT<double>> analytic;
  {
    cm::TapeT<double> tape;
    std::vector<cm::VarT<double>> leaves;
    std::vector<int> ids;
    for (auto t : inputs) {
      t.requires_grad = true;
      auto leaf = tape.leaf(std::move(t));
      ids.push_back(leaf.id);
      leaves.push_back(leaf);
    }
    auto loss = build(tape, leaves);
    auto grads = tape.backward(loss);
    for (int id : ids) analytic.push_back(std::move(grads.at(id)));
  }

  auto eval = [&](const std::vector<TensorT<double>>& pts) {
    cm::TapeT<double> tape;
    std::vector<cm::VarT<double>> leaves;
    for (const auto& t : pts) leaves.push_back(tape.leaf(t));
    return static_cast<double>(build(tape, leaves).value().data[0]);
  };

  for (size_t which = 0; which < inputs.size(); ++which) {
    for (size_t i = 0; i < inputs[which].data.size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[which].data[i] += h;
      minus[which].data[i] -= h;
      const double fd = (eval(plus) - eval(minus)) / (2 * h);
      const double an = analytic[which].data[i];
      const double denom = std::max(std::abs(fd), std::abs(an));
      if (denom < 1e-3) {
        const double abs_err = std::abs(fd - an);
        report.max_abs = std::max(report.max_abs, abs_err);
        if (abs_err > 1e-6) {
          report.ok = false;
          report.detail = "abs err " + std::to_string(abs_err) + " at input " +
                          std::to_string(which) + "[" + std::to_string(i) + "]";
        }
      } else {
        const double rel = std::abs(fd - an) / denom;
        report.max_rel = std::max(report.max_rel, rel);
        if (rel > 1e-4) {
          report.ok = false;
          report.detail = "rel err " + std::to_string(rel) + " at input " +
                          std::to_string(which) + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  return report;
}

template <typename T>
TensorT<T> random_tensor(const std::vector<int>& shape, cm::RandomStream& rng, double lo = -1.0,
                         double hi = 1.0) {
  TensorT<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace oracle
