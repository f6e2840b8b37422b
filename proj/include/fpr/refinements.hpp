#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fpr/tensor.hpp"
#include "fpr/vit.hpp"

namespace fpr {

struct AmdConfig {
  std::vector<std::size_t> index_set;  // blocks whose attention maps are diversified
  double diversity = 25.0;             // d >= 0; entries of M ~ U(1-d, 1+d)
  std::uint64_t rng_seed = 0;          // keyed with (iteration, block, head) per draw
  std::size_t random_count = 0;        // draw this many blocks per seed instead of index_set
};

struct MteConfig {
  double scale = 0.8;        // s, weight of the current embedding
  double attenuation = 0.3;  // eta, weight of the accumulated history
};

struct DropoutConfig {
  std::vector<std::size_t> index_set;
  double rate = 0.2;  // in [0, 1)
};

struct BlockDropConfig {
  std::vector<std::size_t> indices;  // explicit blocks to drop, or
  std::size_t random_count = 0;      // draw this many distinct blocks per run
};

// Which forward refinements an attack run installs, and where.
struct RefinementPlan {
  std::string name = "mim";
  std::optional<AmdConfig> amd;
  std::optional<MteConfig> mte;
  std::optional<DropoutConfig> dropout;
  bool gradient_cut = false;  // detach every attention map (PNA-style baseline)
  std::optional<BlockDropConfig> block_drop;

  bool any_attention_transform() const { return amd || dropout || gradient_cut; }
  // Disjointness of attention-map owners, index ranges vs block count.
  void validate(std::size_t block_count) const;
};

// Constant multiplicative perturbation for one attention map. Entries are
// i.i.d. U(1-d, 1+d) and never differentiable.
struct DiversityMatrix {
  Tensor values;
  double diversity = 0.0;
};

// Deterministic in (cfg.rng_seed, iteration, block, head): the draw is
// counter-keyed, not sequential, so call order and threading cannot perturb it.
DiversityMatrix sample_diversity_matrices(const AmdConfig& cfg, const Shape& shape, int iteration,
                                          int block, int head);

// softmax(A .* M), rows sum to 1; gradient flows through A only.
Tensor amd_transform(const Tensor& attn, const DiversityMatrix& m);

// Zero entries i.i.d. with probability `rate`, rescale survivors by
// 1/(1-rate), renormalize each row to sum 1. Mask is keyed like M.
Tensor attention_dropout_transform(const Tensor& attn, double rate, std::uint64_t seed,
                                   int iteration, int block, int head);

// Forward identity; backward contributes nothing through the map.
Tensor attention_gradient_cut(const Tensor& attn);

// Accumulated token embeddings, one slot per hooked point. The stored value
// is detached: history never re-enters the differentiation graph.
class MteState {
 public:
  explicit MteState(const MteConfig& cfg) : cfg_(cfg) {}

  // Attack iterations count from 1; each must be entered exactly once.
  void begin_iteration(int t);
  int iteration() const { return iteration_; }
  const MteConfig& config() const { return cfg_; }

  // eta * E^_{t-1} + s * E_t, storing the detached result as E^_t.
  Tensor apply(const Tensor& embedding, const HookPoint& point);

 private:
  MteConfig cfg_;
  int iteration_ = 0;
  std::map<HookPoint, std::vector<double>> accumulated_;
};

Tensor mte_transform(const Tensor& embedding, MteState& state, const HookPoint& point);

// Assemble the registry for one forward pass of iteration `t`.
HookRegistry build_hooks(const RefinementPlan& plan, const VitConfig& cfg, std::uint64_t seed,
                         int iteration, MteState* mte_state);

// Blocks to drop for this run (resolves random_count draws off the seed).
std::vector<std::size_t> resolve_block_drop(const BlockDropConfig& cfg, std::size_t block_count,
                                            std::uint64_t seed);

}  // namespace fpr
