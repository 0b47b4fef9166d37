#include "vqr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vqr/error.hpp"

namespace vqr {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamHyper& hyper, double lr) {
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + hyper.eps);
    param[i] = static_cast<T>(param[i] - update);
  }
}

template <typename T>
void adam_step(std::span<ad::Var<T>> params, AdamState<T>& state, double lr) {
  if (state.step == std::numeric_limits<std::uint64_t>::max())
    throw NumericError("adam_step: step counter overflow");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T(0));
      state.second_moment.emplace_back(p.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k].size())
      throw ShapeError("adam_step: moment buffer size mismatch for parameter " +
                       std::to_string(k));
    for (T g : params[k].grad())
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k));
  }
  ++state.step;
  const double rate = lr > 0 ? lr : state.hyper.lr;
  for (std::size_t k = 0; k < params.size(); ++k) {
    adam_update<T>(params[k].mutable_values(), params[k].grad(), state.first_moment[k],
                   state.second_moment[k], state.step, state.hyper, rate);
  }
}

double grad_check(const std::function<ad::Var<double>(const ad::Var<double>&)>& fn,
                  const ad::Shape& shape, std::span<const double> point, double h) {
  auto x = ad::Var<double>::parameter(shape, std::vector<double>(point.begin(), point.end()));
  ad::Var<double> loss = fn(x);
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite value at point");
  ad::backward(loss);
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  std::vector<double> probe(point.begin(), point.end());
  auto eval = [&](const std::vector<double>& at) {
    const double v = fn(ad::Var<double>::constant(shape, at)).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value at probe point");
    return v;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval(probe);
    probe[i] = orig - h;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

template void adam_step<float>(std::span<ad::Var<float>>, AdamState<float>&, double);
template void adam_step<double>(std::span<ad::Var<double>>, AdamState<double>&, double);
template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                 std::span<float>, std::uint64_t, const AdamHyper&, double);
template void adam_update<double>(std::span<double>, std::span<const double>,
                                  std::span<double>, std::span<double>, std::uint64_t,
                                  const AdamHyper&, double);

}  // namespace vqr
