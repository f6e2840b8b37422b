#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpr/tensor.hpp"

namespace fpr {

// Independent oracle for every gradient claim in the project: central finite
// differences compared coordinate-by-coordinate against one reverse sweep.

struct FdCheckResult {
  double max_rel_err = 0.0;
  double frac_within = 1.0;     // fraction of coordinates within `tol`
  std::size_t worst_index = 0;  // coordinate with the largest relative error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// `f` must rebuild its graph from scratch on every call and return a scalar
// loss tensor. `x` must be a requires_grad leaf; its values are perturbed in
// place and restored. Relative error per coordinate is
//   |ad - fd| / max(|ad|, |fd|, 1e-6).
FdCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                                      double h = 1e-5, double tol = 1e-4);

// Dense softmax Jacobian of one probability row: diag p_m (1 - p_m),
// off-diagonal -p_m p_n.
std::vector<double> softmax_jacobian_row(const std::vector<double>& p);

// Named check with a pinned tolerance, for the gradcheck CLI and tests.
struct GradCheck {
  std::string name;
  double tolerance;
  std::function<double()> run;  // returns the max error observed
};

struct GradCheckOutcome {
  std::string name;
  double max_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckOutcome> outcomes;
  bool all_pass = true;
};

GradCheckReport run_gradcheck_suite(const std::vector<GradCheck>& checks);

}  // namespace fpr
