#include "fpr/refinements.hpp"

#include <algorithm>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

constexpr std::uint64_t kAmdTag = 0x616d642d6d617432ULL;
constexpr std::uint64_t kDropTag = 0x64726f702d6d736bULL;
constexpr std::uint64_t kBlockDropTag = 0x626c6b2d64726f70ULL;

void check_index_set(const std::vector<std::size_t>& set, std::size_t block_count,
                     const char* what) {
  for (std::size_t b : set) {
    if (b >= block_count) {
      throw ConfigError(std::string(what) + ": block index " + std::to_string(b) +
                        " out of range for " + std::to_string(block_count) + " blocks");
    }
  }
}

}  // namespace

void RefinementPlan::validate(std::size_t block_count) const {
  if (amd) {
    if (amd->diversity < 0.0) throw ConfigError("amd: diversity factor must be >= 0");
    check_index_set(amd->index_set, block_count, "amd");
    if (amd->random_count > block_count) {
      throw ConfigError("amd: random_count exceeds block count");
    }
  }
  if (dropout) {
    if (dropout->rate < 0.0 || dropout->rate >= 1.0) {
      throw ConfigError("dropout: rate must lie in [0, 1)");
    }
    check_index_set(dropout->index_set, block_count, "dropout");
  }
  if (block_drop) {
    check_index_set(block_drop->indices, block_count, "block_drop");
    if (block_drop->random_count > block_count) {
      throw ConfigError("block_drop: random_count exceeds block count");
    }
  }
  if (mte) {
    if (mte->scale < 0.0 || mte->attenuation < 0.0) {
      throw ConfigError("mte: scale and attenuation must be >= 0");
    }
  }
  // Each attention map has one owner.
  if (amd && dropout) {
    for (std::size_t a : amd->index_set) {
      if (std::find(dropout->index_set.begin(), dropout->index_set.end(), a) !=
          dropout->index_set.end()) {
        throw ConfigError("plan: amd and dropout overlap at block " + std::to_string(a));
      }
    }
  }
  if (gradient_cut && (amd || dropout)) {
    throw ConfigError("plan: gradient_cut claims all attention maps; amd/dropout cannot coexist");
  }
}

DiversityMatrix sample_diversity_matrices(const AmdConfig& cfg, const Shape& shape, int iteration,
                                          int block, int head) {
  if (cfg.diversity < 0.0) throw ConfigError("amd: diversity factor must be >= 0");
  DiversityMatrix m;
  m.diversity = cfg.diversity;
  if (cfg.diversity == 0.0) {
    m.values = Tensor::full(shape, 1.0);
    return m;
  }
  m.values = Tensor::zeros(shape);
  RngStream rng(mix_key(cfg.rng_seed, kAmdTag, static_cast<std::uint64_t>(iteration),
                        static_cast<std::uint64_t>(block), static_cast<std::uint64_t>(head)));
  const double lo = 1.0 - cfg.diversity, hi = 1.0 + cfg.diversity;
  for (double& v : m.values.values()) v = rng.next_uniform(lo, hi);
  return m;
}

Tensor amd_transform(const Tensor& attn, const DiversityMatrix& m) {
  if (!m.values.defined() || m.values.shape() != attn.shape()) {
    throw ConfigError("amd: diversity matrix shape does not match attention map");
  }
  if (m.values.requires_grad()) {
    throw ConfigError("amd: diversity matrix must be a constant");
  }
  return softmax_rows(mul(attn, m.values));
}

Tensor attention_dropout_transform(const Tensor& attn, double rate, std::uint64_t seed,
                                   int iteration, int block, int head) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return attn;
  Tensor mask = Tensor::zeros(attn.shape());
  RngStream rng(mix_key(seed, kDropTag, static_cast<std::uint64_t>(iteration),
                        static_cast<std::uint64_t>(block), static_cast<std::uint64_t>(head)));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.next_unit() < rate ? 0.0 : keep_scale;
  return normalize_rows(mul(attn, mask));
}

Tensor attention_gradient_cut(const Tensor& attn) { return stop_gradient(attn); }

void MteState::begin_iteration(int t) {
  if (t < 1) throw ConfigError("mte: iterations count from 1");
  if (t != iteration_ + 1) {
    throw std::runtime_error("mte: iteration " + std::to_string(t) + " entered after " +
                             std::to_string(iteration_));
  }
  iteration_ = t;
}

Tensor MteState::apply(const Tensor& embedding, const HookPoint& point) {
  if (iteration_ < 1) {
    throw std::runtime_error("mte: apply before begin_iteration");
  }
  Tensor out = mul_scalar(embedding, cfg_.scale);
  auto it = accumulated_.find(point);
  if (it != accumulated_.end()) {
    if (it->second.size() != embedding.size()) {
      throw std::runtime_error("mte: embedding shape changed across iterations at " +
                               hook_point_str(point));
    }
    if (cfg_.attenuation != 0.0) {
      Tensor history = Tensor::from(embedding.shape(), it->second);  // constant
      out = add(out, mul_scalar(history, cfg_.attenuation));
    }
  }
  accumulated_[point] = out.values();  // detached copy, E^_t
  return out;
}

Tensor mte_transform(const Tensor& embedding, MteState& state, const HookPoint& point) {
  return state.apply(embedding, point);
}

HookRegistry build_hooks(const RefinementPlan& plan, const VitConfig& cfg, std::uint64_t seed,
                         int iteration, MteState* mte_state) {
  plan.validate(cfg.blocks);
  HookRegistry hooks;
  if (plan.amd) {
    AmdConfig amd = *plan.amd;
    amd.rng_seed = mix_key(amd.rng_seed, seed);  // per-run keying on top of the config seed
    for (std::size_t b : amd.index_set) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const HookPoint point{HookKind::attention_map, static_cast<int>(b), static_cast<int>(h)};
        hooks.set(point, [amd, iteration, b, h](const Tensor& attn) {
          DiversityMatrix m = sample_diversity_matrices(amd, attn.shape(), iteration,
                                                        static_cast<int>(b), static_cast<int>(h));
          return amd_transform(attn, m);
        });
      }
    }
  }
  if (plan.dropout) {
    const DropoutConfig drop = *plan.dropout;
    for (std::size_t b : drop.index_set) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const HookPoint point{HookKind::attention_map, static_cast<int>(b), static_cast<int>(h)};
        hooks.set(point, [drop, seed, iteration, b, h](const Tensor& attn) {
          return attention_dropout_transform(attn, drop.rate, seed, iteration,
                                             static_cast<int>(b), static_cast<int>(h));
        });
      }
    }
  }
  if (plan.gradient_cut) {
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        hooks.set({HookKind::attention_map, static_cast<int>(b), static_cast<int>(h)},
                  [](const Tensor& attn) { return attention_gradient_cut(attn); });
      }
    }
  }
  if (plan.mte) {
    if (!mte_state) throw std::runtime_error("plan: mte requires a persistent MteState");
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      for (HookKind kind : {HookKind::attention_output, HookKind::mlp_output}) {
        const HookPoint point{kind, static_cast<int>(b), -1};
        hooks.set(point,
                  [mte_state, point](const Tensor& e) { return mte_state->apply(e, point); });
      }
    }
  }
  return hooks;
}

std::vector<std::size_t> resolve_block_drop(const BlockDropConfig& cfg, std::size_t block_count,
                                            std::uint64_t seed) {
  check_index_set(cfg.indices, block_count, "block_drop");
  std::vector<std::size_t> blocks = cfg.indices;
  if (cfg.random_count > 0) {
    if (cfg.random_count > block_count) {
      throw ConfigError("block_drop: random_count exceeds block count");
    }
    // Keyed Fisher-Yates over all block indices, take the prefix.
    std::vector<std::size_t> all(block_count);
    for (std::size_t i = 0; i < block_count; ++i) all[i] = i;
    RngStream rng(mix_key(seed, kBlockDropTag));
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
      const std::size_t j = i + rng.next_below(all.size() - i);
      std::swap(all[i], all[j]);
    }
    for (std::size_t i = 0; i < cfg.random_count; ++i) blocks.push_back(all[i]);
  }
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

}  // namespace fpr
