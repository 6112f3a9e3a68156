#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idc/tensor.hpp"

namespace idc {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Per-channel normalization statistics, treated as constants.
template <class T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> var;

  std::size_t channels() const noexcept { return mean.size(); }
};

/// Ordered record of executed operations (a Wengert list). The reverse pass
/// walks records newest-to-oldest, so gradients are reproducible bit-for-bit
/// for a given forward pass.
template <class T>
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes contributions to
  /// its inputs through `accumulate`.
  using BackwardFn = std::function<void(const Tensor<T>& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records an op output. `backward` is dropped when no input needs a
  /// gradient. Throws NumericError naming `op` if the value is not finite.
  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of a requires-grad leaf after backward(); nullptr otherwise.
  const Tensor<T>* grad(Var<T> v) const;

  /// Adds `g` into the gradient buffer of `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor<T>& g);
  /// Mutable gradient buffer for `id`, allocated zeroed on first use;
  /// nullptr when `id` does not require a gradient.
  Tensor<T>* grad_buffer(std::size_t id);

  /// Reverse pass from a scalar loss. Afterwards only leaves keep gradients.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(id);
}

namespace ops {

/// Stride-1 cross-correlation with zero "same" padding of (k-1)/2.
/// input [N,c,h,w], filter [C_out,c,k,k] -> [N,C_out,h,w]. The filter is a
/// constant; gradients flow to the input only.
template <class T>
Var<T> conv2d(Var<T> input, const Tensor<T>& filter);

template <class T>
Var<T> leaky_relu(Var<T> input, T slope);

inline constexpr double kBatchNormEps = 1e-5;

/// (x - mean_c) / sqrt(var_c + 1e-5), no affine. Stats are constants.
template <class T>
Var<T> batch_norm(Var<T> features, const ChannelStats<T>& stats);

/// Splits each [C,h,w] map into ceil(h/p)*ceil(w/p) p-by-p tiles (zero padded
/// at the border) and emits one row of C features per tile position:
/// [N*gh*gw*p*p, C]. Rows of a tile are contiguous.
template <class T>
Var<T> partition_unfold(Var<T> input, std::size_t p);

/// Same tiling, but each tile becomes a single row [N*gh*gw, C*p*p].
template <class T>
Var<T> partition_flatten(Var<T> input, std::size_t p);

/// Selects rows of a rank-2 value.
template <class T>
Var<T> gather_rows(Var<T> rows, std::span<const std::size_t> indices);

template <class T>
Var<T> sum(Var<T> input);

template <class T>
Var<T> scale(Var<T> input, T factor);

template <class T>
Var<T> add(Var<T> a, Var<T> b);

/// mean |input - target| over all elements (scalar).
template <class T>
Var<T> l1_mean(Var<T> input, const Tensor<T>& target);

}  // namespace ops

/// Batch statistics of a [N,c,h,w] tensor: mean and biased variance over
/// N, h, w.
template <class T>
ChannelStats<T> channel_stats(const Tensor<T>& features);

/// Debug hook for the gradient checker's mutation test: when enabled, the
/// conv2d reverse pass returns the negated gradient.
void set_conv_backward_sign_fault(bool enabled) noexcept;
bool conv_backward_sign_fault() noexcept;

}  // namespace idc
