#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "medcore/autograd.hpp"

namespace medcore {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

using ScalarFn = std::function<Var(Tape&, Var)>;
using MultiScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares tape gradients with central differences, coordinate by coordinate.
/// Error per coordinate is |a - c| / (|a| + |c| + 1e-12); the maximum is returned.
/// `h` must lie in [1e-7, 1e-3]. Throws NumericError if `f` is non-finite.
GradCheckResult grad_check(const ScalarFn& f, const Tensor& theta, double h);
GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& thetas, double h);

}  // namespace medcore
