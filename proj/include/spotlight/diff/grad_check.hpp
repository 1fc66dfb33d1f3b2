#pragma once

#include <cstddef>
#include <functional>

#include "spotlight/diff/tensor.hpp"

namespace spotlight::diff {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // tape gradient at worst_index
  double numeric = 0.0;   // central difference at worst_index
};

using ScalarFunction = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the tape gradient of `f` at `x` against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate, in double
/// precision. Relative error uses max(|a|, |b|, 1e-8) as the denominator.
GradCheckResult grad_check(const ScalarFunction& f, const Tensor<double>& x,
                           double h = 1e-3);

/// Relative error as used by grad_check.
double relative_error(double a, double b);

}  // namespace spotlight::diff
