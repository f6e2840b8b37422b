#include "fpr/vit.hpp"

#include <cassert>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"

namespace fpr {

void VitConfig::validate() const {
  if (image_size == 0 || channels == 0 || patch == 0 || embed_dim == 0 || heads == 0 ||
      blocks == 0 || mlp_hidden == 0 || classes < 2) {
    throw ConfigError("vit config: all dimensions must be positive (and classes >= 2)");
  }
  if (image_size % patch != 0) {
    throw ConfigError("vit config: patch size must divide image size");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("vit config: embed_dim must be divisible by heads");
  }
}

std::string hook_point_str(const HookPoint& p) {
  const char* kind = p.kind == HookKind::attention_map      ? "attention_map"
                     : p.kind == HookKind::attention_output ? "attention_output"
                                                            : "mlp_output";
  std::string s = std::string(kind) + "(block=" + std::to_string(p.block);
  if (p.kind == HookKind::attention_map) s += ",head=" + std::to_string(p.head);
  return s + ")";
}

void HookRegistry::set(const HookPoint& point, HookFn fn) {
  if (!fn) throw ConfigError("hook registry: empty transform for " + hook_point_str(point));
  auto [it, inserted] = hooks_.emplace(point, std::move(fn));
  (void)it;
  if (!inserted) {
    throw ConfigError("hook registry: duplicate transform at " + hook_point_str(point));
  }
}

const HookFn* HookRegistry::find(const HookPoint& point) const {
  auto it = hooks_.find(point);
  return it == hooks_.end() ? nullptr : &it->second;
}

void HookRegistry::validate(const VitConfig& cfg) const {
  for (const auto& [point, fn] : hooks_) {
    (void)fn;
    const bool block_ok = point.block >= 0 && point.block < static_cast<int>(cfg.blocks);
    bool ok = block_ok;
    if (point.kind == HookKind::attention_map) {
      ok = ok && point.head >= 0 && point.head < static_cast<int>(cfg.heads);
    } else {
      ok = ok && point.head == -1;
    }
    if (!ok) throw ConfigError("hook registry: unknown point " + hook_point_str(point));
  }
}

namespace {

Tensor init_normal(Shape shape, double stddev, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.next_normal();
  return t;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

}  // namespace

VitModel make_vit(const VitConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RngStream rng(mix_key(seed, 0x56697457ULL));
  const std::size_t d = cfg.embed_dim, dh = cfg.head_dim();
  const double w_std = 0.02;

  VitModel m;
  m.cfg = cfg;
  m.patch_w = init_normal({cfg.patch * cfg.patch * cfg.channels, d}, w_std, rng);
  m.patch_b = Tensor::zeros({d});
  m.cls_token = init_normal({1, d}, w_std, rng);
  m.pos_embed = init_normal({cfg.tokens(), d}, w_std, rng);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    VitBlock blk;
    blk.ln1_gain = Tensor::full({d}, 1.0);
    blk.ln1_bias = Tensor::zeros({d});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      blk.wq.push_back(init_normal({d, dh}, cfg.qk_init_std, rng));
      blk.bq.push_back(Tensor::zeros({dh}));
      blk.wk.push_back(init_normal({d, dh}, cfg.qk_init_std, rng));
      blk.bk.push_back(Tensor::zeros({dh}));
      blk.wv.push_back(init_normal({d, dh}, w_std, rng));
      blk.bv.push_back(Tensor::zeros({dh}));
      blk.wo.push_back(init_normal({dh, d}, w_std, rng));
    }
    blk.bo = Tensor::zeros({d});
    blk.ln2_gain = Tensor::full({d}, 1.0);
    blk.ln2_bias = Tensor::zeros({d});
    blk.mlp_w1 = init_normal({d, cfg.mlp_hidden}, w_std, rng);
    blk.mlp_b1 = Tensor::zeros({cfg.mlp_hidden});
    blk.mlp_w2 = init_normal({cfg.mlp_hidden, d}, w_std, rng);
    blk.mlp_b2 = Tensor::zeros({d});
    m.blocks.push_back(std::move(blk));
  }
  m.final_ln_gain = Tensor::full({d}, 1.0);
  m.final_ln_bias = Tensor::zeros({d});
  m.head_w = init_normal({d, cfg.classes}, w_std, rng);
  m.head_b = Tensor::zeros({cfg.classes});
  return m;
}

std::vector<Tensor> VitModel::parameters() const {
  std::vector<Tensor> ps = {patch_w, patch_b, cls_token, pos_embed};
  for (const auto& blk : blocks) {
    ps.push_back(blk.ln1_gain);
    ps.push_back(blk.ln1_bias);
    for (std::size_t h = 0; h < blk.wq.size(); ++h) {
      ps.push_back(blk.wq[h]);
      ps.push_back(blk.bq[h]);
      ps.push_back(blk.wk[h]);
      ps.push_back(blk.bk[h]);
      ps.push_back(blk.wv[h]);
      ps.push_back(blk.bv[h]);
      ps.push_back(blk.wo[h]);
    }
    ps.push_back(blk.bo);
    ps.push_back(blk.ln2_gain);
    ps.push_back(blk.ln2_bias);
    ps.push_back(blk.mlp_w1);
    ps.push_back(blk.mlp_b1);
    ps.push_back(blk.mlp_w2);
    ps.push_back(blk.mlp_b2);
  }
  ps.push_back(final_ln_gain);
  ps.push_back(final_ln_bias);
  ps.push_back(head_w);
  ps.push_back(head_b);
  return ps;
}

void VitModel::set_requires_grad(bool rg) const {
  for (Tensor t : parameters()) t.set_requires_grad(rg);
}

VitModel clone_vit(const VitModel& model) {
  VitModel copy = model;  // shares nodes
  auto fresh = [](Tensor& t) {
    Tensor d = t.detached();
    d.set_requires_grad(t.requires_grad());
    t = d;
  };
  fresh(copy.patch_w);
  fresh(copy.patch_b);
  fresh(copy.cls_token);
  fresh(copy.pos_embed);
  for (auto& blk : copy.blocks) {
    fresh(blk.ln1_gain);
    fresh(blk.ln1_bias);
    for (std::size_t h = 0; h < blk.wq.size(); ++h) {
      fresh(blk.wq[h]);
      fresh(blk.bq[h]);
      fresh(blk.wk[h]);
      fresh(blk.bk[h]);
      fresh(blk.wv[h]);
      fresh(blk.bv[h]);
      fresh(blk.wo[h]);
    }
    fresh(blk.bo);
    fresh(blk.ln2_gain);
    fresh(blk.ln2_bias);
    fresh(blk.mlp_w1);
    fresh(blk.mlp_b1);
    fresh(blk.mlp_w2);
    fresh(blk.mlp_b2);
  }
  fresh(copy.final_ln_gain);
  fresh(copy.final_ln_bias);
  fresh(copy.head_w);
  fresh(copy.head_b);
  return copy;
}

AttentionInternals attention_core(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                                  const HookFn* map_transform) {
  AttentionInternals in;
  in.q = q;
  in.k = k;
  in.v = v;
  in.scores = mul_scalar(matmul(q, transpose(k)), scale);
  in.attn = softmax_rows(in.scores);
  in.attn_used = map_transform ? (*map_transform)(in.attn) : in.attn;
  if (in.attn_used.shape() != in.attn.shape()) {
    throw ConfigError("attention_map transform changed shape " + shape_str(in.attn.shape()) +
                      " -> " + shape_str(in.attn_used.shape()));
  }
  in.z = matmul(in.attn_used, v);
  return in;
}

Tensor attention_sublayer(const VitModel& model, std::size_t block, const Tensor& tokens,
                          const HookRegistry* hooks, BlockInternals* internals) {
  const VitBlock& blk = model.blocks.at(block);
  const VitConfig& cfg = model.cfg;
  assert(tokens.rank() == 2 && tokens.shape()[0] == cfg.tokens() &&
         tokens.shape()[1] == cfg.embed_dim);

  Tensor normed = layernorm(tokens, blk.ln1_gain, blk.ln1_bias);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  Tensor proj;  // sum over heads of Z_h wo_h
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const HookFn* map_fn =
        hooks ? hooks->find({HookKind::attention_map, static_cast<int>(block), static_cast<int>(h)})
              : nullptr;
    AttentionInternals in = attention_core(linear(normed, blk.wq[h], blk.bq[h]),
                                           linear(normed, blk.wk[h], blk.bk[h]),
                                           linear(normed, blk.wv[h], blk.bv[h]), scale, map_fn);
    Tensor head_out = matmul(in.z, blk.wo[h]);
    proj = proj.defined() ? add(proj, head_out) : head_out;
    if (internals) internals->heads.push_back(std::move(in));
  }
  Tensor attn_out = add_rowvec(proj, blk.bo);
  if (hooks) {
    if (const HookFn* fn = hooks->find({HookKind::attention_output, static_cast<int>(block), -1})) {
      attn_out = (*fn)(attn_out);
      if (attn_out.shape() != Shape{cfg.tokens(), cfg.embed_dim}) {
        throw ConfigError("attention_output transform changed shape at block " +
                          std::to_string(block));
      }
    }
  }
  if (internals) internals->attention_out = attn_out;
  return add(tokens, attn_out);
}

namespace {

Tensor mlp_sublayer(const VitModel& model, std::size_t block, const Tensor& tokens,
                    const HookRegistry* hooks, BlockInternals* internals) {
  const VitBlock& blk = model.blocks[block];
  Tensor normed = layernorm(tokens, blk.ln2_gain, blk.ln2_bias);
  Tensor hidden = gelu(linear(normed, blk.mlp_w1, blk.mlp_b1));
  Tensor out = linear(hidden, blk.mlp_w2, blk.mlp_b2);
  if (hooks) {
    if (const HookFn* fn = hooks->find({HookKind::mlp_output, static_cast<int>(block), -1})) {
      out = (*fn)(out);
      if (out.shape() != tokens.shape()) {
        throw ConfigError("mlp_output transform changed shape at block " + std::to_string(block));
      }
    }
  }
  if (internals) internals->mlp_out = out;
  return add(tokens, out);
}

}  // namespace

Tensor classifier_head(const VitModel& model, const Tensor& tokens) {
  Tensor normed = layernorm(tokens, model.final_ln_gain, model.final_ln_bias);
  // Head reads only the designated token row (row 0 with a class token,
  // otherwise the mean token would be needed; we always enable the token).
  Tensor cls = slice_rows(normed, 0, 1);
  return add_rowvec(matmul(cls, model.head_w), model.head_b);
}

Tensor vit_forward(const VitModel& model, const Tensor& image, const HookRegistry* hooks,
                   ForwardTrace* trace) {
  const VitConfig& cfg = model.cfg;
  if (image.shape() != Shape{cfg.channels, cfg.image_size, cfg.image_size}) {
    throw std::invalid_argument("vit_forward: image shape " + shape_str(image.shape()) +
                                " does not match config");
  }
  if (hooks) hooks->validate(cfg);

  Tensor tok = linear(image_to_patches(image, cfg.patch), model.patch_w, model.patch_b);
  if (cfg.class_token) tok = concat_rows(model.cls_token, tok);
  tok = add(tok, model.pos_embed);

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    BlockInternals* internals = nullptr;
    if (trace) {
      trace->blocks.emplace_back();
      internals = &trace->blocks.back();
    }
    if (!model.blocks[b].attention_dropped) {
      tok = attention_sublayer(model, b, tok, hooks, internals);
    }
    tok = mlp_sublayer(model, b, tok, hooks, internals);
    assert(tok.shape()[0] == cfg.tokens() && tok.shape()[1] == cfg.embed_dim);
  }

  Tensor logits = classifier_head(model, tok);
  if (trace) trace->logits = logits;
  return logits;
}

VitModel drop_attention_blocks(const VitModel& model, const std::vector<std::size_t>& blocks) {
  VitModel view = model;  // weights shared
  for (std::size_t b : blocks) {
    if (b >= view.blocks.size()) {
      throw ConfigError("drop_attention_blocks: block " + std::to_string(b) + " out of range");
    }
    view.blocks[b].attention_dropped = true;
  }
  return view;
}

}  // namespace fpr
