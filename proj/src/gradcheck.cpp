#include "csa/gradcheck.hpp"

#include <cmath>

#include "csa/error.hpp"

namespace csa {

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                               double eps) {
  if (eps <= 0.0) throw ContractError("finite_difference_check: eps must be positive");
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = f(x);
    if (loss.ndim() != 0)
      throw ContractError("finite_difference_check: f must return a scalar, got shape " +
                          to_string(loss.shape()));
    tape.backward(loss);
  }
  Array analytic = x.grad();
  x.zero_grad();

  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.value()(i);
    double fp, fm;
    x.value()(i) = orig + eps;
    {
      NoGrad guard;
      fp = f(x).item();
    }
    x.value()(i) = orig - eps;
    {
      NoGrad guard;
      fm = f(x).item();
    }
    x.value()(i) = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel =
        std::abs(analytic(i) - numeric) / std::max(1e-8, std::abs(analytic(i)) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  if (!had_grad) x.set_requires_grad(false);
  return worst;
}

}  // namespace csa
