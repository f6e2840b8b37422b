#include "fpr/attack.hpp"

#include <algorithm>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"

namespace fpr {

void AttackConfig::validate() const {
  if (epsilon <= 0.0) throw ConfigError("attack: epsilon must be > 0");
  if (step_size <= 0.0) throw ConfigError("attack: step_size must be > 0");
  if (iterations < 1) throw ConfigError("attack: iterations must be >= 1");
  if (momentum_decay < 0.0) throw ConfigError("attack: momentum decay must be >= 0");
  if (pixel_lo >= pixel_hi) throw ConfigError("attack: empty pixel range");
}

void clip_linf_inplace(std::vector<double>& x, const std::vector<double>& x0, double eps,
                       double lo, double hi) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double b_lo = x0[i] - eps, b_hi = x0[i] + eps;
    x[i] = std::clamp(std::clamp(x[i], b_lo, b_hi), lo, hi);
  }
}

Tensor clip_linf(const Tensor& x, const Tensor& x0, double eps, double lo, double hi) {
  if (x.shape() != x0.shape()) {
    throw std::invalid_argument("clip_linf: shapes differ");
  }
  Tensor out = x.detached();  // projection happens between iterations, outside the graph
  clip_linf_inplace(out.values(), x0.values(), eps, lo, hi);
  return out;
}

namespace {

// Mean |dL/dA| per block across heads; blocks whose maps received no
// gradient (detached or dropped) contribute exactly 0.
std::vector<double> attention_grad_means(const ForwardTrace& trace) {
  std::vector<double> means(trace.blocks.size(), 0.0);
  for (std::size_t b = 0; b < trace.blocks.size(); ++b) {
    double total = 0.0;
    std::size_t count = 0;
    for (const AttentionInternals& head : trace.blocks[b].heads) {
      count += head.attn.size();
      if (!head.attn.has_grad()) continue;
      for (double g : head.attn.grad()) total += std::abs(g);
    }
    means[b] = count == 0 ? 0.0 : total / static_cast<double>(count);
  }
  return means;
}

}  // namespace

AttackResult fpr_attack(const VitModel& model, const std::vector<double>& image, std::size_t label,
                        const AttackConfig& cfg, const RefinementPlan& plan, std::uint64_t seed) {
  const VitConfig& vcfg = model.cfg;
  const Shape img_shape{vcfg.channels, vcfg.image_size, vcfg.image_size};
  if (image.size() != shape_numel(img_shape)) {
    throw std::invalid_argument("attack: image size does not match model config");
  }
  plan.validate(vcfg.blocks);
  if (plan.amd && plan.amd->random_count > 0) {
    throw std::invalid_argument("attack: amd random index set must be resolved per seed first");
  }

  const VitModel surrogate =
      plan.block_drop
          ? drop_attention_blocks(model,
                                  resolve_block_drop(*plan.block_drop, vcfg.blocks, seed))
          : model;

  AttackResult result;
  result.x_adv = image;
  std::vector<double> momentum(image.size(), 0.0);
  MteState mte(plan.mte.value_or(MteConfig{}));

  for (int t = 1; t <= cfg.iterations; ++t) {
    mte.begin_iteration(t);
    const HookRegistry hooks = build_hooks(plan, vcfg, seed, t, &mte);

    Tensor x = Tensor::from(img_shape, result.x_adv, /*requires_grad=*/true);
    ForwardTrace fwd;
    Tensor logits = vit_forward(surrogate, x, &hooks, &fwd);
    Tensor loss = cross_entropy(logits, label);
    backward(loss);

    IterationStats stats;
    stats.loss = loss.item();
    stats.attn_grad_mean = attention_grad_means(fwd);

    const std::vector<double>& grad = x.grad();
    double l1 = 0.0;
    for (double g : grad) l1 += std::abs(g);
    stats.grad_l1 = l1;
    if (l1 == 0.0) {
      stats.zero_grad = true;
      ++result.trace.zero_grad_events;
      for (std::size_t i = 0; i < grad.size(); ++i) {
        momentum[i] = cfg.momentum_decay * momentum[i] + grad[i];
      }
    } else {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        momentum[i] = cfg.momentum_decay * momentum[i] + grad[i] / l1;
      }
    }

    for (std::size_t i = 0; i < result.x_adv.size(); ++i) {
      const double s = momentum[i] > 0.0 ? 1.0 : (momentum[i] < 0.0 ? -1.0 : 0.0);
      result.x_adv[i] += cfg.step_size * s;
    }
    clip_linf_inplace(result.x_adv, image, cfg.epsilon, cfg.pixel_lo, cfg.pixel_hi);

    double linf = 0.0, range_excess = 0.0;
    for (std::size_t i = 0; i < result.x_adv.size(); ++i) {
      linf = std::max(linf, std::abs(result.x_adv[i] - image[i]));
      range_excess = std::max({range_excess, cfg.pixel_lo - result.x_adv[i],
                               result.x_adv[i] - cfg.pixel_hi});
    }
    stats.pert_linf = linf;
    result.trace.max_linf_excess = std::max(result.trace.max_linf_excess, linf - cfg.epsilon);
    result.trace.max_range_excess = std::max(result.trace.max_range_excess, range_excess);
    result.trace.steps.push_back(std::move(stats));
  }
  return result;
}

AttackResult mim_baseline(const VitModel& model, const std::vector<double>& image,
                          std::size_t label, const AttackConfig& cfg) {
  return fpr_attack(model, image, label, cfg, RefinementPlan{}, 0);
}

}  // namespace fpr
