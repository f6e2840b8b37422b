#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "fpr/tensor.hpp"

namespace fpr {

struct VitConfig {
  std::size_t image_size = 16;  // H == W
  std::size_t channels = 3;
  std::size_t patch = 4;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t blocks = 4;
  std::size_t mlp_hidden = 64;
  std::size_t classes = 10;
  bool class_token = true;
  // Initialization scale of the Q/K projections. Large values start the
  // attention maps peaked, the regime big trained transformers live in.
  double qk_init_std = 0.02;

  std::size_t grid() const { return image_size / patch; }
  std::size_t patch_count() const { return grid() * grid(); }
  std::size_t tokens() const { return patch_count() + (class_token ? 1 : 0); }
  std::size_t head_dim() const { return embed_dim / heads; }
  void validate() const;  // patch | image_size, heads | embed_dim
};

// Interception points inside the forward pass. `head` is meaningful only for
// attention_map (use -1 for the output points).
enum class HookKind { attention_map, attention_output, mlp_output };

struct HookPoint {
  HookKind kind;
  int block = 0;
  int head = -1;
  auto operator<=>(const HookPoint&) const = default;
};

std::string hook_point_str(const HookPoint& p);

using HookFn = std::function<Tensor(const Tensor&)>;

// One transform per point, applied exactly once per forward, inside the
// graph. Constants a transform introduces must be non-differentiable leaves.
class HookRegistry {
 public:
  void set(const HookPoint& point, HookFn fn);  // duplicate point -> ConfigError
  const HookFn* find(const HookPoint& point) const;
  void validate(const VitConfig& cfg) const;  // unknown point -> ConfigError
  bool empty() const { return hooks_.empty(); }
  std::size_t size() const { return hooks_.size(); }

 private:
  std::map<HookPoint, HookFn> hooks_;
};

struct VitBlock {
  Tensor ln1_gain, ln1_bias;
  // Per-head projections: wq/wk/wv are (D x Dh), wo is (Dh x D); head outputs
  // are summed through wo, which equals concat-then-project.
  std::vector<Tensor> wq, bq, wk, bk, wv, bv, wo;
  Tensor bo;
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  bool attention_dropped = false;  // identity residual path instead of attention
};

struct VitModel {
  VitConfig cfg;
  Tensor patch_w, patch_b;  // (P*P*C x D), (D)
  Tensor cls_token;         // (1 x D)
  Tensor pos_embed;         // (tokens x D)
  std::vector<VitBlock> blocks;
  Tensor final_ln_gain, final_ln_bias;
  Tensor head_w, head_b;  // (D x classes), (classes)

  std::vector<Tensor> parameters() const;  // deterministic order
  void set_requires_grad(bool rg) const;
};

VitModel make_vit(const VitConfig& cfg, std::uint64_t seed);

// Deep copy of the weights (fresh leaves, same values).
VitModel clone_vit(const VitModel& model);

// Per-head internals captured during forward. `attn` is the attention map
// before any hook transform, `attn_used` the map fed into Z.
struct AttentionInternals {
  Tensor q, k, v;      // (N x Dh)
  Tensor scores;       // (N x N), QK^T / sqrt(Dh)
  Tensor attn;         // (N x N)
  Tensor attn_used;    // (N x N)
  Tensor z;            // (N x Dh)
};

struct BlockInternals {
  std::vector<AttentionInternals> heads;
  Tensor attention_out;  // post-projection, post-hook, pre-residual (undefined if dropped)
  Tensor mlp_out;        // post-hook, pre-residual
};

struct ForwardTrace {
  std::vector<BlockInternals> blocks;
  Tensor logits;
};

// Full forward pass: patch embed, class token, positional embeddings, the
// block stack, final layernorm, classifier head on the class token. Every
// registered hook transform is applied exactly once at its point.
Tensor vit_forward(const VitModel& model, const Tensor& image, const HookRegistry* hooks = nullptr,
                   ForwardTrace* trace = nullptr);

// One attention sublayer on (N x D) tokens: layernorm, per-head attention,
// output projection, residual add. Exposed for oracle tests.
Tensor attention_sublayer(const VitModel& model, std::size_t block, const Tensor& tokens,
                          const HookRegistry* hooks = nullptr, BlockInternals* internals = nullptr);

// Single-head attention core on explicit Q, K, V with optional map transform.
AttentionInternals attention_core(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                                  const HookFn* map_transform = nullptr);

// Classifier head: final layernorm + linear on the designated token row.
Tensor classifier_head(const VitModel& model, const Tensor& tokens);

// View with the listed blocks' attention sublayers replaced by the identity
// residual path (weights shared with the original model).
VitModel drop_attention_blocks(const VitModel& model, const std::vector<std::size_t>& blocks);

// Checkpoint round trip through the FPRC container (kind "vit-model").
struct Container;
Container vit_to_container(const VitModel& model);
VitModel vit_from_container(const Container& c);
void save_vit(const VitModel& model, const std::string& path);
VitModel load_vit(const std::string& path);

}  // namespace fpr
