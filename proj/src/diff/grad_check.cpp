#include "spotlight/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace spotlight::diff {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckResult grad_check(const ScalarFunction& f, const Tensor<double>& x,
                           double h) {
  auto point = x.clone(true);
  auto loss = f(point);
  backward(loss);
  const auto analytic = point.grad();

  GradCheckResult result;
  auto probe = x.clone(false);
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f(probe).item();
    values[i] = saved - h;
    const double down = f(probe).item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > result.max_rel_error || i == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace spotlight::diff
