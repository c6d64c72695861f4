#include "medcore/gradcheck.hpp"

#include <cmath>

#include "medcore/error.hpp"

namespace medcore {

namespace {

double evaluate(const MultiScalarFn& f, const std::vector<Tensor>& thetas) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(thetas.size());
  for (const auto& t : thetas) vars.push_back(tape.constant(t));
  const double v = f(tape, vars).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function returned a non-finite value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& thetas, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ArgumentError("grad_check: step h must lie in [1e-7, 1e-3]");

  Tape tape(true);
  std::vector<Var> vars;
  for (std::size_t k = 0; k < thetas.size(); ++k) vars.push_back(tape.parameter("theta" + std::to_string(k), thetas[k]));
  Var loss = f(tape, vars);
  if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: function returned a non-finite value");
  Gradients grads = tape.backward(loss);

  GradCheckResult result;
  std::vector<Tensor> probe = thetas;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    const Tensor analytic = grads.wrt(vars[k]);
    for (std::size_t i = 0; i < thetas[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + h;
      const double fp = evaluate(f, probe);
      probe[k][i] = orig - h;
      const double fm = evaluate(f, probe);
      probe[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      ++result.coordinates;
      if (err > result.max_rel_error) {
        result = {err, k, i, a, numeric, result.coordinates};
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& theta, double h) {
  return grad_check([&f](Tape& t, const std::vector<Var>& v) { return f(t, v[0]); }, std::vector<Tensor>{theta}, h);
}

}  // namespace medcore
