#include "fpr/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/parallel.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

constexpr std::uint64_t kSubsetTag = 0x73756273657421ULL;
constexpr std::uint64_t kAttackTag = 0x6174746b21ULL;
constexpr std::uint64_t kIndexTag = 0x72616e642d697821ULL;

// Per-seed draw of the attack subset from the test half.
std::vector<std::size_t> attack_subset(const ToyDataset& data, std::size_t count,
                                       std::uint64_t global_seed, int seed) {
  std::vector<std::size_t> pool = data.test_indices;
  if (count > pool.size()) {
    throw ConfigError("eval: requested " + std::to_string(count) + " attack images but only " +
                      std::to_string(pool.size()) + " test samples exist");
  }
  RngStream rng(mix_key(global_seed, kSubsetTag, static_cast<std::uint64_t>(seed)));
  for (std::size_t i = 0; i + 1 < pool.size() && i < count; ++i) {
    std::swap(pool[i], pool[i + rng.next_below(pool.size() - i)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Resolve per-seed randomness the plan carries (random AMD index sets).
RefinementPlan plan_for_seed(const RefinementPlan& plan, std::size_t block_count,
                             std::uint64_t global_seed, int seed) {
  RefinementPlan resolved = plan;
  if (resolved.amd && resolved.amd->random_count > 0) {
    if (resolved.amd->random_count > block_count) {
      throw ConfigError("amd: random_count exceeds block count");
    }
    std::vector<std::size_t> all(block_count);
    for (std::size_t i = 0; i < block_count; ++i) all[i] = i;
    RngStream rng(mix_key(global_seed, kIndexTag, static_cast<std::uint64_t>(seed)));
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
      std::swap(all[i], all[i + rng.next_below(all.size() - i)]);
    }
    all.resize(resolved.amd->random_count);
    std::sort(all.begin(), all.end());
    resolved.amd->index_set = std::move(all);
    resolved.amd->random_count = 0;
  }
  return resolved;
}

}  // namespace

double TransferReport::mean_transfer_asr(int seed) const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.white_box || c.seed != seed) continue;
    total += c.asr;
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double TransferReport::mean_transfer_asr() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.white_box) continue;
    total += c.asr;
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

TransferReport evaluate_transfer(const ModelZoo& zoo, const std::string& surrogate,
                                 const std::vector<std::string>& targets, const AttackConfig& cfg,
                                 const RefinementPlan& plan, const ToyDataset& data,
                                 const EvalOptions& opts) {
  const ZooEntry& surr = zoo.by_name(surrogate);
  const VitModel* vit = surr.model->as_vit();
  if (!vit) throw ConfigError("eval: surrogate '" + surrogate + "' is not an attention model");
  if (targets.empty()) throw ConfigError("eval: no targets configured");
  plan.validate(vit->cfg.blocks);

  const Shape img_shape = data.image_shape();
  TransferReport report;
  report.meta["surrogate"] = surrogate;
  report.meta["plan"] = plan.name;
  report.meta["images"] = opts.images;
  report.meta["seeds"] = opts.seeds;

  for (int seed = 0; seed < opts.seeds; ++seed) {
    const std::vector<std::size_t> subset =
        attack_subset(data, opts.images, opts.global_seed, seed);
    const RefinementPlan seed_plan =
        plan_for_seed(plan, vit->cfg.blocks, opts.global_seed, seed);

    std::vector<AttackResult> results(subset.size());
    parallel_for(subset.size(), opts.jobs, [&](std::size_t i) {
      const std::size_t s = subset[i];
      results[i] = fpr_attack(*vit, data.images[s], static_cast<std::size_t>(data.labels[s]), cfg,
                              seed_plan,
                              mix_key(opts.global_seed, kAttackTag, static_cast<std::uint64_t>(seed), s));
    });
    for (const AttackResult& r : results) {
      report.max_linf_excess = std::max(report.max_linf_excess, r.trace.max_linf_excess);
      report.max_range_excess = std::max(report.max_range_excess, r.trace.max_range_excess);
      report.zero_grad_events += r.trace.zero_grad_events;
    }

    for (const std::string& target_name : targets) {
      const ZooEntry& target = zoo.by_name(target_name);
      std::vector<char> clean_ok(subset.size(), 0), fooled(subset.size(), 0);
      parallel_for(subset.size(), opts.jobs, [&](std::size_t i) {
        const std::size_t s = subset[i];
        if (target.model->predict(data.images[s], img_shape) != data.labels[s]) return;
        clean_ok[i] = 1;
        fooled[i] =
            target.model->predict(results[i].x_adv, img_shape) != data.labels[s] ? 1 : 0;
      });
      TransferCell cell;
      cell.surrogate = surrogate;
      cell.plan = plan.name;
      cell.target = target_name;
      cell.seed = seed;
      cell.white_box = target_name == surrogate;
      for (std::size_t i = 0; i < subset.size(); ++i) {
        cell.eligible += clean_ok[i];
        cell.successes += fooled[i];
      }
      if (cell.eligible == 0) {
        throw std::runtime_error("eval: target '" + target_name +
                                 "' classified no attack image correctly; ASR undefined");
      }
      cell.asr = 100.0 * static_cast<double>(cell.successes) / static_cast<double>(cell.eligible);
      report.cells.push_back(std::move(cell));
    }

    if (opts.keep_adversarial) {
      std::vector<std::vector<double>> advs;
      advs.reserve(results.size());
      for (AttackResult& r : results) advs.push_back(std::move(r.x_adv));
      report.adversarial.push_back(std::move(advs));
      report.attack_indices.push_back(subset);
    }
  }
  return report;
}

GradientStats gradient_statistics(const ModelZoo& zoo, const std::string& surrogate,
                                  const AttackConfig& cfg, const RefinementPlan& plan,
                                  const ToyDataset& data, std::size_t images,
                                  std::vector<std::size_t> stat_blocks, std::uint64_t seed,
                                  int jobs) {
  const ZooEntry& surr = zoo.by_name(surrogate);
  const VitModel* vit = surr.model->as_vit();
  if (!vit) throw ConfigError("eval: surrogate '" + surrogate + "' has no attention maps");
  const std::size_t blocks = vit->cfg.blocks;
  const RefinementPlan resolved = plan_for_seed(plan, blocks, seed, 0);
  if (stat_blocks.empty()) {
    if (resolved.amd && !resolved.amd->index_set.empty()) {
      stat_blocks = resolved.amd->index_set;
    } else {
      for (std::size_t b = 0; b < blocks; ++b) stat_blocks.push_back(b);
    }
  }
  for (std::size_t b : stat_blocks) {
    if (b >= blocks) throw ConfigError("gradient_statistics: block index out of range");
  }

  const std::vector<std::size_t> subset = attack_subset(data, images, seed, /*seed=*/0);
  std::vector<std::vector<double>> per_image_block_sums(subset.size());
  std::vector<double> linf_excess(subset.size(), 0.0), range_excess(subset.size(), 0.0);
  parallel_for(subset.size(), jobs, [&](std::size_t i) {
    const std::size_t s = subset[i];
    AttackResult r = fpr_attack(*vit, data.images[s], static_cast<std::size_t>(data.labels[s]),
                                cfg, resolved, mix_key(seed, kAttackTag, s));
    std::vector<double> sums(blocks, 0.0);
    for (const IterationStats& step : r.trace.steps) {
      for (std::size_t b = 0; b < blocks; ++b) sums[b] += step.attn_grad_mean[b];
    }
    per_image_block_sums[i] = std::move(sums);
    linf_excess[i] = r.trace.max_linf_excess;
    range_excess[i] = r.trace.max_range_excess;
  });

  GradientStats stats;
  stats.images = subset.size();
  stats.iterations = cfg.iterations;
  stats.stat_blocks = stat_blocks;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    stats.max_linf_excess = std::max(stats.max_linf_excess, linf_excess[i]);
    stats.max_range_excess = std::max(stats.max_range_excess, range_excess[i]);
  }
  stats.per_block.assign(blocks, 0.0);
  for (const auto& sums : per_image_block_sums) {
    for (std::size_t b = 0; b < blocks; ++b) stats.per_block[b] += sums[b];
  }
  const double denom = static_cast<double>(subset.size()) * static_cast<double>(cfg.iterations);
  for (double& v : stats.per_block) v /= denom;
  for (std::size_t b : stat_blocks) stats.stat_mean += stats.per_block[b];
  stats.stat_mean /= static_cast<double>(stat_blocks.size());
  return stats;
}

std::vector<TransferReport> ablation_sweep(const ModelZoo& zoo, const std::string& surrogate,
                                           const std::vector<std::string>& targets,
                                           const AttackConfig& cfg,
                                           const std::vector<SweepPoint>& points,
                                           const ToyDataset& data, const EvalOptions& opts) {
  if (points.empty()) throw ConfigError("sweep: empty grid");
  std::vector<TransferReport> reports;
  reports.reserve(points.size());
  for (const SweepPoint& point : points) {
    TransferReport r = evaluate_transfer(zoo, surrogate, targets, cfg, point.plan, data, opts);
    r.meta["sweep_label"] = point.label;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace fpr
