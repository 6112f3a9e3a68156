#pragma once

#include <cstddef>
#include <vector>

#include "idc/tensor.hpp"

namespace idc {

enum class OptimizerKind { adam, sgd };

/// Adam moment buffers plus step counter.
template <class T>
struct OptimState {
  std::vector<T> m;
  std::vector<T> v;
  std::size_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update in place. Throws NumericError (params left
/// untouched) if any gradient is non-finite.
template <class T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, OptimState<T>& state, T lr);

/// Plain gradient descent: params -= lr * grads.
template <class T>
void sgd_step(Tensor<T>& params, const Tensor<T>& grads, T lr);

}  // namespace idc
