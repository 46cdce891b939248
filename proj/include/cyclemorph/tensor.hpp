#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cyclemorph/common.hpp"

namespace cm {

// Dense row-major tensor. Storage is float32 in the engine; the double
// instantiation exists for the gradient-check mode of the test harness.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;

  TensorT() = default;
  TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    for (int e : shape)
      if (e <= 0) throw ShapeError("tensor: non-positive extent " + shape_str(shape));
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
      throw ShapeError("tensor: payload size does not match " + shape_str(shape));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  T& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Row-major strides, innermost axis last.
  std::vector<std::int64_t> strides() const {
    std::vector<std::int64_t> st(shape.size());
    std::int64_t acc = 1;
    for (int i = rank() - 1; i >= 0; --i) {
      st[static_cast<size_t>(i)] = acc;
      acc *= shape[static_cast<size_t>(i)];
    }
    return st;
  }

  bool all_finite() const {
    double acc = 0.0;
    for (const T& v : data) acc += std::abs(static_cast<double>(v));
    return std::isfinite(acc);
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.requires_grad = requires_grad;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
void check_finite(const char* op, const TensorT<T>& t) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
}

}  // namespace cm
