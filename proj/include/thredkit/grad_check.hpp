#ifndef THREDKIT_GRAD_CHECK_HPP
#define THREDKIT_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "thredkit/autodiff.hpp"

namespace thredkit::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() against central differences for every coordinate of
/// `params`. `f` must rebuild the scalar loss from the current parameter
/// values on every call (and be deterministic). Per-coordinate error is
/// |a - n| / max(floor, |a| + |n|), where floor = max(1e-8, 1e5 * u * max(1, |f|) / eps)
/// and u is the machine epsilon: the denominator never drops below 1e5
/// times the rounding noise of the difference quotient itself.
inline GradCheckResult grad_check(const std::function<Var()>& f, std::span<Var> params,
                                  double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  auto evaluate = [&f]() {
    const double v = f().item();
    if (!std::isfinite(v)) throw DomainError("grad_check: non-finite function value");
    return v;
  };

  for (Var& p : params) p.zero_grad();
  double f0 = 0.0;
  {
    Var loss = f();
    if (!std::isfinite(loss.item())) throw DomainError("grad_check: non-finite function value");
    backward(loss);
    f0 = loss.item();
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Var& p : params) analytic.push_back(p.grad());

  const double floor =
      std::max(1e-8, 1e5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / eps);
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k].mutable_value().storage();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = evaluate();
      data[i] = saved - eps;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(floor, std::abs(a) + std::abs(numeric));
      if (err > result.max_rel_error) {
        result = {err, k, i, a, numeric};
      }
    }
  }
  return result;
}

/// Single-tensor convenience form: `f` maps a parameter Var to a scalar loss.
inline GradCheckResult grad_check(const std::function<Var(const Var&)>& f, const Tensor& theta,
                                  double eps) {
  std::vector<Var> params{parameter(theta)};
  return grad_check([&] { return f(params[0]); }, params, eps);
}

}  // namespace thredkit::ad

#endif  // THREDKIT_GRAD_CHECK_HPP
