#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vqr/autodiff.hpp"

namespace vqr {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one parameter list. Buffers are created zeroed on the
/// first step and matched to parameters by position.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. `lr` overrides hyper.lr when positive (warm-up schedules).
/// Throws NumericError on a non-finite gradient.
template <typename T>
void adam_step(std::span<ad::Var<T>> params, AdamState<T>& state, double lr = -1.0);

/// Single-buffer form used by the multi-parameter overload.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamHyper& hyper, double lr);

/// Largest |analytic − central difference| / max(1, |analytic|) over all
/// coordinates of `point`. Runs in double precision.
double grad_check(const std::function<ad::Var<double>(const ad::Var<double>&)>& fn,
                  const ad::Shape& shape, std::span<const double> point, double h = 1e-5);

}  // namespace vqr
