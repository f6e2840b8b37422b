#include "fpr/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace fpr {

FdCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                                      double h, double tol) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
  if (!x.requires_grad()) {
    throw std::invalid_argument("finite_difference_check: x must require grad");
  }

  x.zero_grad();
  Tensor loss = f(x);
  backward(loss);
  const std::vector<double> analytic = x.grad();

  FdCheckResult res;
  std::size_t within = 0;
  const std::size_t n = x.size();
  for (std::size_t c = 0; c < n; ++c) {
    const double saved = x.values()[c];
    x.values()[c] = saved + h;
    const double fp = f(x).item();
    x.values()[c] = saved - h;
    const double fm = f(x).item();
    x.values()[c] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double ad = analytic[c];
    const double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
    const double rel = std::abs(ad - fd) / denom;
    if (rel <= tol) ++within;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = c;
      res.worst_analytic = ad;
      res.worst_numeric = fd;
    }
  }
  res.frac_within = n == 0 ? 1.0 : static_cast<double>(within) / static_cast<double>(n);
  return res;
}

std::vector<double> softmax_jacobian_row(const std::vector<double>& p) {
  const std::size_t n = p.size();
  std::vector<double> jac(n * n);
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < n; ++k)
      jac[m * n + k] = (m == k) ? p[m] * (1.0 - p[m]) : -p[m] * p[k];
  return jac;
}

GradCheckReport run_gradcheck_suite(const std::vector<GradCheck>& checks) {
  GradCheckReport report;
  for (const auto& check : checks) {
    GradCheckOutcome out;
    out.name = check.name;
    out.tolerance = check.tolerance;
    out.max_err = check.run();
    out.pass = out.max_err < check.tolerance;
    report.all_pass = report.all_pass && out.pass;
    report.outcomes.push_back(std::move(out));
  }
  return report;
}

}  // namespace fpr
