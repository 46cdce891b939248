#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cyclemorph/tensor.hpp"

namespace cm {

template <typename T>
class TapeT;

// Handle to a node on a tape. Values are immutable once recorded.
template <typename T>
struct VarT {
  TapeT<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorT<T>& value() const;
  const std::vector<int>& shape() const { return value().shape; }
  T scalar() const { return value().data[0]; }
};

// Reverse-mode tape. Records one forward graph and replays it backward once;
// a tape is confined to a single thread.
template <typename T>
class TapeT {
 public:
  using GradMap = std::unordered_map<int, TensorT<T>>;

  // Backward-rule context: read recorded values, accumulate into parents.
  class Ctx {
   public:
    Ctx(TapeT& tape, const TensorT<T>& grad_out, const std::vector<int>& parents)
        : tape_(tape), grad_out_(grad_out), parents_(parents) {}

    const TensorT<T>& grad_out() const { return grad_out_; }
    const TensorT<T>& value(int slot) const { return tape_.value_of(parents_[static_cast<size_t>(slot)]); }

    // Gradient accumulator of parent `slot`, or nullptr when that parent
    // needs no gradient (rules should skip the work then).
    TensorT<T>* grad(int slot) {
      const int id = parents_[static_cast<size_t>(slot)];
      if (!tape_.nodes_[static_cast<size_t>(id)].needs) return nullptr;
      return &tape_.grad_accumulator(id);
    }

   private:
    TapeT& tape_;
    const TensorT<T>& grad_out_;
    const std::vector<int>& parents_;
  };

  using BackFn = std::function<void(Ctx&)>;

  VarT<T> leaf(TensorT<T> value) {
    const bool needs = value.requires_grad;
    return push(std::move(value), {}, nullptr, needs);
  }

  VarT<T> push(TensorT<T> value, std::vector<int> parents, BackFn back, bool needs_override = false) {
    bool needs = needs_override;
    for (int p : parents) needs = needs || nodes_[static_cast<size_t>(p)].needs;
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back), needs});
    return VarT<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const TensorT<T>& value_of(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Gradients of all requires_grad leaves reachable from `loss`; unreachable
  // leaves get zeros. The tape is consumed afterwards.
  GradMap backward(const VarT<T>& loss) {
    if (loss.tape != this) throw ShapeError("backward: loss from a different tape");
    if (consumed_) throw NumericError("backward: tape already consumed");
    const TensorT<T>& lv = value_of(loss.id);
    if (lv.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(lv.shape));
    consumed_ = true;

    grads_.assign(nodes_.size(), TensorT<T>{});
    has_grad_.assign(nodes_.size(), 0);
    grad_accumulator(loss.id).data[0] = T(1);

    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!has_grad_[static_cast<size_t>(i)] || !n.back || !n.needs) continue;
      Ctx ctx(*this, grads_[static_cast<size_t>(i)], n.parents);
      n.back(ctx);
      if (i != loss.id) {
        // free intermediate gradient storage as soon as it has been consumed
        grads_[static_cast<size_t>(i)] = TensorT<T>{};
      }
    }

    GradMap out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.back || !n.needs) continue;  // only requires_grad leaves
      if (has_grad_[i])
        out.emplace(static_cast<int>(i), std::move(grads_[i]));
      else
        out.emplace(static_cast<int>(i), TensorT<T>(n.value.shape));
    }
    grads_.clear();
    has_grad_.clear();
    return out;
  }

 private:
  friend class Ctx;

  struct Node {
    TensorT<T> value;
    std::vector<int> parents;
    BackFn back;
    bool needs = false;
  };

  TensorT<T>& grad_accumulator(int id) {
    if (!has_grad_[static_cast<size_t>(id)]) {
      grads_[static_cast<size_t>(id)] = TensorT<T>(nodes_[static_cast<size_t>(id)].value.shape);
      has_grad_[static_cast<size_t>(id)] = 1;
    }
    return grads_[static_cast<size_t>(id)];
  }

  std::vector<Node> nodes_;
  std::vector<TensorT<T>> grads_;
  std::vector<char> has_grad_;
  bool consumed_ = false;
};

template <typename T>
const TensorT<T>& VarT<T>::value() const {
  return tape->value_of(id);
}

using Tape = TapeT<float>;
using Var = VarT<float>;

}  // namespace cm
