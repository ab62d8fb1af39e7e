#include "pivotcap/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace pivotcap {

double numeric_grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (!x.is_leaf()) throw Error("numeric_grad_check: x must be a leaf tensor");
  if (!(eps > 0.0) || eps > 1e-2) throw Error("numeric_grad_check: eps must lie in (0, 1e-2]");

  const bool had_requires_grad = x.requires_grad();
  x.node()->requires_grad = true;
  x.zero_grad();

  Tensor y = f(x);
  if (y.numel() != 1) throw ShapeError("numeric_grad_check: f must be scalar, got " + shape_str(y.shape()));
  if (!std::isfinite(y.item())) return kInf;
  backward(y);
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.zero_grad();
  x.node()->requires_grad = had_requires_grad;

  auto values = x.mutable_data();
  auto eval = [&](std::size_t i, double delta, double original) {
    values[i] = original + delta;
    NoGradGuard guard;
    return f(x).item();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    const double fp1 = eval(i, eps, original);
    const double fm1 = eval(i, -eps, original);
    const double fp2 = eval(i, 2.0 * eps, original);
    const double fm2 = eval(i, -2.0 * eps, original);
    values[i] = original;
    if (!std::isfinite(fp1) || !std::isfinite(fm1) || !std::isfinite(fp2) || !std::isfinite(fm2)) return kInf;
    const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pivotcap
