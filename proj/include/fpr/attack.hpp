#pragma once

#include <cstdint>
#include <vector>

#include "fpr/refinements.hpp"
#include "fpr/tensor.hpp"
#include "fpr/vit.hpp"

namespace fpr {

struct AttackConfig {
  double epsilon = 16.0 / 255.0;    // L-inf bound in pixel units
  double step_size = 1.6 / 255.0;   // alpha
  int iterations = 10;              // T
  double momentum_decay = 1.0;      // mu
  double pixel_lo = 0.0;
  double pixel_hi = 1.0;

  void validate() const;  // eps > 0, alpha > 0, T >= 1, mu >= 0
};

struct IterationStats {
  double loss = 0.0;
  double grad_l1 = 0.0;
  double pert_linf = 0.0;
  std::vector<double> attn_grad_mean;  // per block, mean |dL/dA| over heads/entries
  bool zero_grad = false;              // normalization skipped this step
};

struct AttackTrace {
  std::vector<IterationStats> steps;
  int zero_grad_events = 0;
  // Worst constraint excursions seen at any recorded step (0 when clean).
  double max_linf_excess = 0.0;
  double max_range_excess = 0.0;
};

struct AttackResult {
  std::vector<double> x_adv;
  AttackTrace trace;
};

// Project each coordinate into [x0 - eps, x0 + eps], then clamp to
// [lo, hi]. Mutates x.
void clip_linf_inplace(std::vector<double>& x, const std::vector<double>& x0, double eps,
                       double lo, double hi);
Tensor clip_linf(const Tensor& x, const Tensor& x0, double eps, double lo = 0.0, double hi = 1.0);

// Momentum-iterative attack with the plan's forward refinements installed:
// per iteration, forward with hooks, g_t = mu g_{t-1} + grad / |grad|_1,
// x_t = clip(x_{t-1} + alpha sign(g_t)). A zero-gradient step skips the
// normalization and is recorded in the trace. `iterations == 0` is tolerated
// and returns the input unchanged (used by no-attack controls).
AttackResult fpr_attack(const VitModel& model, const std::vector<double>& image, std::size_t label,
                        const AttackConfig& cfg, const RefinementPlan& plan, std::uint64_t seed);

// fpr_attack with an empty refinement plan.
AttackResult mim_baseline(const VitModel& model, const std::vector<double>& image,
                          std::size_t label, const AttackConfig& cfg);

}  // namespace fpr
