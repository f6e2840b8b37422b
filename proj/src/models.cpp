#include "fpr/models.hpp"

#include <algorithm>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"

namespace fpr {

int Model::predict(const std::vector<double>& image, const Shape& shape) const {
  Tensor x = Tensor::from(shape, image);
  Tensor logits = forward(x);
  const auto& v = logits.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void Model::set_requires_grad(bool rg) const {
  for (Tensor t : parameters()) t.set_requires_grad(rg);
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

void fresh_leaf(Tensor& t) {
  Tensor d = t.detached();
  d.set_requires_grad(t.requires_grad());
  t = d;
}

// ---------------------------------------------------------------------------
// ViT wrapper

class VitZooModel : public Model {
 public:
  explicit VitZooModel(VitModel model) : model_(std::move(model)) {}

  std::string kind() const override { return "vit"; }

  nlohmann::json arch_json() const override {
    const VitConfig& c = model_.cfg;
    return {{"kind", "vit"},           {"image_size", c.image_size}, {"channels", c.channels},
            {"patch", c.patch},        {"embed_dim", c.embed_dim},   {"heads", c.heads},
            {"blocks", c.blocks},      {"mlp_hidden", c.mlp_hidden}, {"classes", c.classes},
            {"class_token", c.class_token},  {"qk_init_std", c.qk_init_std}};
  }

  Tensor forward(const Tensor& image) const override { return vit_forward(model_, image); }
  std::vector<Tensor> parameters() const override { return model_.parameters(); }

  std::unique_ptr<Model> clone() const override {
    auto copy = std::make_unique<VitZooModel>(clone_vit(model_));
    copy->set_name(name());
    return copy;
  }

  Container to_container() const override {
    Container c = vit_to_container(model_);
    c.meta["name"] = name();
    return c;
  }

  const VitModel* as_vit() const override { return &model_; }

 private:
  VitModel model_;
};

// ---------------------------------------------------------------------------
// Token/channel-mixing MLP on patches; the non-attention transformer-shaped
// target.

struct MixerConfig {
  std::size_t image_size = 16, channels = 3, patch = 4;
  std::size_t dim = 32, depth = 2, token_hidden = 32, channel_hidden = 64, classes = 10;
  std::size_t tokens() const { return (image_size / patch) * (image_size / patch); }
};

class MixerModel : public Model {
 public:
  struct Block {
    Tensor ln1_g, ln1_b, tok_w1, tok_b1, tok_w2, tok_b2;
    Tensor ln2_g, ln2_b, ch_w1, ch_b1, ch_w2, ch_b2;
  };

  MixerModel(const MixerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(mix_key(seed, 0x6d69786572ULL));
    const double w_std = 0.02;
    const std::size_t d = cfg.dim, n = cfg.tokens();
    patch_w_ = init_normal({cfg.patch * cfg.patch * cfg.channels, d}, w_std, rng);
    patch_b_ = Tensor::zeros({d});
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      Block blk;
      blk.ln1_g = Tensor::full({d}, 1.0);
      blk.ln1_b = Tensor::zeros({d});
      blk.tok_w1 = init_normal({n, cfg.token_hidden}, w_std, rng);
      blk.tok_b1 = Tensor::zeros({cfg.token_hidden});
      blk.tok_w2 = init_normal({cfg.token_hidden, n}, w_std, rng);
      blk.tok_b2 = Tensor::zeros({n});
      blk.ln2_g = Tensor::full({d}, 1.0);
      blk.ln2_b = Tensor::zeros({d});
      blk.ch_w1 = init_normal({d, cfg.channel_hidden}, w_std, rng);
      blk.ch_b1 = Tensor::zeros({cfg.channel_hidden});
      blk.ch_w2 = init_normal({cfg.channel_hidden, d}, w_std, rng);
      blk.ch_b2 = Tensor::zeros({d});
      blocks_.push_back(std::move(blk));
    }
    final_g_ = Tensor::full({d}, 1.0);
    final_b_ = Tensor::zeros({d});
    head_w_ = init_normal({d, cfg.classes}, w_std, rng);
    head_b_ = Tensor::zeros({cfg.classes});
    pool_ = Tensor::full({1, n}, 1.0 / static_cast<double>(n));  // mean over tokens
  }

  std::string kind() const override { return "mixer"; }

  nlohmann::json arch_json() const override {
    return {{"kind", "mixer"},
            {"image_size", cfg_.image_size},
            {"channels", cfg_.channels},
            {"patch", cfg_.patch},
            {"dim", cfg_.dim},
            {"depth", cfg_.depth},
            {"token_hidden", cfg_.token_hidden},
            {"channel_hidden", cfg_.channel_hidden},
            {"classes", cfg_.classes}};
  }

  Tensor forward(const Tensor& image) const override {
    Tensor tok = linear(image_to_patches(image, cfg_.patch), patch_w_, patch_b_);
    for (const Block& blk : blocks_) {
      Tensor t = transpose(layernorm(tok, blk.ln1_g, blk.ln1_b));  // (D x N)
      t = linear(gelu(linear(t, blk.tok_w1, blk.tok_b1)), blk.tok_w2, blk.tok_b2);
      tok = add(tok, transpose(t));
      Tensor c = layernorm(tok, blk.ln2_g, blk.ln2_b);
      c = linear(gelu(linear(c, blk.ch_w1, blk.ch_b1)), blk.ch_w2, blk.ch_b2);
      tok = add(tok, c);
    }
    Tensor pooled = matmul(pool_, layernorm(tok, final_g_, final_b_));
    return linear(pooled, head_w_, head_b_);
  }

  std::vector<Tensor> parameters() const override {
    std::vector<Tensor> ps = {patch_w_, patch_b_};
    for (const Block& b : blocks_) {
      for (const Tensor& t : {b.ln1_g, b.ln1_b, b.tok_w1, b.tok_b1, b.tok_w2, b.tok_b2,
                              b.ln2_g, b.ln2_b, b.ch_w1, b.ch_b1, b.ch_w2, b.ch_b2}) {
        ps.push_back(t);
      }
    }
    ps.push_back(final_g_);
    ps.push_back(final_b_);
    ps.push_back(head_w_);
    ps.push_back(head_b_);
    return ps;
  }

  std::unique_ptr<Model> clone() const override {
    auto copy = std::make_unique<MixerModel>(*this);
    fresh_leaf(copy->patch_w_);
    fresh_leaf(copy->patch_b_);
    for (Block& b : copy->blocks_) {
      for (Tensor* t : {&b.ln1_g, &b.ln1_b, &b.tok_w1, &b.tok_b1, &b.tok_w2, &b.tok_b2,
                        &b.ln2_g, &b.ln2_b, &b.ch_w1, &b.ch_b1, &b.ch_w2, &b.ch_b2}) {
        fresh_leaf(*t);
      }
    }
    fresh_leaf(copy->final_g_);
    fresh_leaf(copy->final_b_);
    fresh_leaf(copy->head_w_);
    fresh_leaf(copy->head_b_);
    return copy;
  }

  Container to_container() const override {
    Container c;
    c.kind = "mixer-model";
    c.meta["name"] = name();
    c.meta["arch"] = arch_json();
    const auto ps = parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      c.arrays.push_back({"p" + std::to_string(i), ps[i].shape(), ps[i].values()});
    }
    return c;
  }

 private:
  MixerConfig cfg_;
  Tensor patch_w_, patch_b_;
  std::vector<Block> blocks_;
  Tensor final_g_, final_b_, head_w_, head_b_;
  Tensor pool_;
};

// ---------------------------------------------------------------------------
// Small convolutional net (conv as unfold + matmul), the CNN-shaped target.

struct ConvConfig {
  std::size_t image_size = 16, channels = 3, classes = 10;
  std::size_t c1 = 8, c2 = 16;  // conv channel widths, 3x3 kernels, two 2x2 pools
};

class ConvModel : public Model {
 public:
  ConvModel(const ConvConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    RngStream rng(mix_key(seed, 0x636f6e76ULL));
    conv1_w_ = init_normal({9 * cfg.channels, cfg.c1}, 0.15, rng);
    conv1_b_ = Tensor::zeros({cfg.c1});
    conv2_w_ = init_normal({9 * cfg.c1, cfg.c2}, 0.08, rng);
    conv2_b_ = Tensor::zeros({cfg.c2});
    const std::size_t flat = cfg.c2 * (cfg.image_size / 4) * (cfg.image_size / 4);
    head_w_ = init_normal({flat, cfg.classes}, 0.05, rng);
    head_b_ = Tensor::zeros({cfg.classes});
  }

  std::string kind() const override { return "conv"; }

  nlohmann::json arch_json() const override {
    return {{"kind", "conv"},          {"image_size", cfg_.image_size},
            {"channels", cfg_.channels}, {"c1", cfg_.c1},
            {"c2", cfg_.c2},           {"classes", cfg_.classes}};
  }

  Tensor forward(const Tensor& image) const override {
    const std::size_t n = cfg_.image_size;
    Tensor h = conv(image, conv1_w_, conv1_b_, cfg_.c1, n);
    h = avg_pool2x2(gelu(h));
    h = conv(h, conv2_w_, conv2_b_, cfg_.c2, n / 2);
    h = avg_pool2x2(gelu(h));
    Tensor flat = reshape(h, {1, h.size()});
    return linear(flat, head_w_, head_b_);
  }

  std::vector<Tensor> parameters() const override {
    return {conv1_w_, conv1_b_, conv2_w_, conv2_b_, head_w_, head_b_};
  }

  std::unique_ptr<Model> clone() const override {
    auto copy = std::make_unique<ConvModel>(*this);
    for (Tensor* t : {&copy->conv1_w_, &copy->conv1_b_, &copy->conv2_w_, &copy->conv2_b_,
                      &copy->head_w_, &copy->head_b_}) {
      fresh_leaf(*t);
    }
    return copy;
  }

  Container to_container() const override {
    Container c;
    c.kind = "conv-model";
    c.meta["name"] = name();
    c.meta["arch"] = arch_json();
    const auto ps = parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      c.arrays.push_back({"p" + std::to_string(i), ps[i].shape(), ps[i].values()});
    }
    return c;
  }

 private:
  static Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t out_ch,
                     std::size_t side) {
    Tensor cols = unfold_conv(x, 3, 1);                  // (side*side x 9*C)
    Tensor y = add_rowvec(matmul(cols, w), b);           // (side*side x out_ch)
    return reshape(transpose(y), {out_ch, side, side});
  }

  ConvConfig cfg_;
  Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_, head_w_, head_b_;
};

void load_flat_params(Model& model, const Container& c) {
  const auto ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const ArrayEntry& e = c.array("p" + std::to_string(i));
    if (e.shape != ps[i].shape()) {
      throw ConfigError("model checkpoint: array p" + std::to_string(i) + " has shape " +
                        shape_str(e.shape) + ", expected " + shape_str(ps[i].shape()));
    }
    Tensor t = ps[i];
    t.values() = e.data;
  }
}

MixerConfig mixer_config_from_json(const nlohmann::json& arch) {
  MixerConfig c;
  c.image_size = arch.value("image_size", c.image_size);
  c.channels = arch.value("channels", c.channels);
  c.patch = arch.value("patch", c.patch);
  c.dim = arch.value("dim", c.dim);
  c.depth = arch.value("depth", c.depth);
  c.token_hidden = arch.value("token_hidden", c.token_hidden);
  c.channel_hidden = arch.value("channel_hidden", c.channel_hidden);
  c.classes = arch.value("classes", c.classes);
  if (c.patch == 0 || c.image_size % c.patch != 0) {
    throw ConfigError("mixer arch: patch must divide image_size");
  }
  return c;
}

ConvConfig conv_config_from_json(const nlohmann::json& arch) {
  ConvConfig c;
  c.image_size = arch.value("image_size", c.image_size);
  c.channels = arch.value("channels", c.channels);
  c.c1 = arch.value("c1", c.c1);
  c.c2 = arch.value("c2", c.c2);
  c.classes = arch.value("classes", c.classes);
  if (c.image_size % 4 != 0) throw ConfigError("conv arch: image_size must be divisible by 4");
  return c;
}

VitConfig vit_config_from_json(const nlohmann::json& arch) {
  VitConfig c;
  c.image_size = arch.value("image_size", c.image_size);
  c.channels = arch.value("channels", c.channels);
  c.patch = arch.value("patch", c.patch);
  c.embed_dim = arch.value("embed_dim", c.embed_dim);
  c.heads = arch.value("heads", c.heads);
  c.blocks = arch.value("blocks", c.blocks);
  c.mlp_hidden = arch.value("mlp_hidden", c.mlp_hidden);
  c.classes = arch.value("classes", c.classes);
  c.class_token = arch.value("class_token", c.class_token);
  c.qk_init_std = arch.value("qk_init_std", c.qk_init_std);
  c.validate();
  return c;
}

}  // namespace

std::unique_ptr<Model> make_model(const nlohmann::json& arch, std::uint64_t seed) {
  const std::string kind = arch.value("kind", "");
  std::unique_ptr<Model> model;
  if (kind == "vit") {
    model = std::make_unique<VitZooModel>(make_vit(vit_config_from_json(arch), seed));
  } else if (kind == "mixer") {
    model = std::make_unique<MixerModel>(mixer_config_from_json(arch), seed);
  } else if (kind == "conv") {
    model = std::make_unique<ConvModel>(conv_config_from_json(arch), seed);
  } else {
    throw ConfigError("arch: unknown model kind '" + kind + "'");
  }
  model->set_name(arch.value("name", kind));
  return model;
}

std::unique_ptr<Model> model_from_container(const Container& c) {
  if (c.kind == "vit-model") {
    auto model = std::make_unique<VitZooModel>(vit_from_container(c));
    model->set_name(c.meta.value("name", "vit"));
    return model;
  }
  if (c.kind == "mixer-model" || c.kind == "conv-model") {
    auto model = make_model(c.meta.at("arch"), 0);
    model->set_name(c.meta.value("name", model->kind()));
    load_flat_params(*model, c);
    return model;
  }
  throw ConfigError("container kind '" + c.kind + "' is not a model");
}

std::unique_ptr<Model> load_model(const std::string& path) {
  return model_from_container(read_container(path));
}

void save_model(const Model& model, const std::string& path) {
  write_container(path, model.to_container());
}

}  // namespace fpr
