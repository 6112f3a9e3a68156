#include "idc/optim.hpp"

#include <cmath>

namespace idc {

template <class T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, OptimState<T>& state, T lr) {
  require_shape(grads, params.shape(), "adam_step grads");
  if (state.m.empty() && state.step == 0) {
    state.m.assign(params.size(), T{0});
    state.v.assign(params.size(), T{0});
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ConfigError("adam_step: optimizer state does not match parameter count");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const T b1 = static_cast<T>(kAdamBeta1), b2 = static_cast<T>(kAdamBeta2);
  const T eps = static_cast<T>(kAdamEps);
  const T c1 = T{1} - std::pow(b1, static_cast<T>(state.step));
  const T c2 = T{1} - std::pow(b2, static_cast<T>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const T mhat = state.m[i] / c1;
    const T vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <class T>
void sgd_step(Tensor<T>& params, const Tensor<T>& grads, T lr) {
  require_shape(grads, params.shape(), "sgd_step grads");
  if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

template void adam_step(Tensor<float>&, const Tensor<float>&, OptimState<float>&, float);
template void adam_step(Tensor<double>&, const Tensor<double>&, OptimState<double>&, double);
template void sgd_step(Tensor<float>&, const Tensor<float>&, float);
template void sgd_step(Tensor<double>&, const Tensor<double>&, double);

}  // namespace idc
