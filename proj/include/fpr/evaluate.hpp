#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpr/attack.hpp"
#include "fpr/dataset.hpp"
#include "fpr/train.hpp"

namespace fpr {

struct EvalOptions {
  std::size_t images = 200;  // attack set size per seed
  int seeds = 5;
  int jobs = 0;
  std::uint64_t global_seed = 7;
  bool keep_adversarial = false;  // retain x_adv tensors in the report
};

struct TransferCell {
  std::string surrogate, plan, target;
  int seed = 0;
  double asr = 0.0;  // percent over eligible samples
  std::size_t successes = 0, eligible = 0;
  bool white_box = false;
};

struct TransferReport {
  std::vector<TransferCell> cells;
  std::string digest;  // stamped by the caller from the experiment config
  // Constraint telemetry aggregated over every attack run in this report.
  double max_linf_excess = 0.0;
  double max_range_excess = 0.0;
  int zero_grad_events = 0;
  nlohmann::json meta = nlohmann::json::object();
  // Per (seed, image) adversarial examples when keep_adversarial is set.
  std::vector<std::vector<std::vector<double>>> adversarial;
  std::vector<std::vector<std::size_t>> attack_indices;  // dataset indices per seed

  // Mean transfer ASR (white-box rows excluded) for one seed / over all seeds.
  double mean_transfer_asr(int seed) const;
  double mean_transfer_asr() const;
};

// Crafts adversarial examples on the surrogate per seed (the image subset is
// redrawn per seed), then scores every target on its originally-correct
// samples. The surrogate itself may appear in `targets`; that row is flagged
// white-box and excluded from transfer averages.
TransferReport evaluate_transfer(const ModelZoo& zoo, const std::string& surrogate,
                                 const std::vector<std::string>& targets, const AttackConfig& cfg,
                                 const RefinementPlan& plan, const ToyDataset& data,
                                 const EvalOptions& opts);

struct GradientStats {
  std::vector<double> per_block;  // mean |dL/dA| per block, all positions
  std::vector<std::size_t> stat_blocks;
  double stat_mean = 0.0;  // grand mean over stat_blocks
  std::size_t images = 0;
  int iterations = 0;
  double max_linf_excess = 0.0;
  double max_range_excess = 0.0;
};

// Mean absolute attention-map input gradient, averaged over images and
// iterations, on the given blocks (defaults to the plan's AMD index set, or
// every block when the plan has none).
GradientStats gradient_statistics(const ModelZoo& zoo, const std::string& surrogate,
                                  const AttackConfig& cfg, const RefinementPlan& plan,
                                  const ToyDataset& data, std::size_t images,
                                  std::vector<std::size_t> stat_blocks, std::uint64_t seed,
                                  int jobs = 0);

struct SweepPoint {
  std::string label;
  RefinementPlan plan;
};

// One TransferReport per grid point; a singleton grid equals a single
// evaluate_transfer call.
std::vector<TransferReport> ablation_sweep(const ModelZoo& zoo, const std::string& surrogate,
                                           const std::vector<std::string>& targets,
                                           const AttackConfig& cfg,
                                           const std::vector<SweepPoint>& points,
                                           const ToyDataset& data, const EvalOptions& opts);

}  // namespace fpr
