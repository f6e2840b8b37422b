#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"

#include "fpr/checkpoint.hpp"
#include "fpr/errors.hpp"
#include "fpr/gradcheck.hpp"
#include "fpr/gradcheck_suite.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"
#include "fpr/vit.hpp"

using namespace fpr;

namespace {

VitConfig toy_config() { return VitConfig{}; }  // 16x16x3, P=4, D=32, 2 heads, 4 blocks

Tensor random_image(const VitConfig& cfg, std::uint64_t seed, bool requires_grad = false) {
  Tensor img = Tensor::zeros({cfg.channels, cfg.image_size, cfg.image_size}, requires_grad);
  RngStream rng(seed);
  for (double& v : img.values()) v = rng.next_unit();
  return img;
}

}  // namespace

TEST_CASE("config validation") {
  VitConfig cfg = toy_config();
  CHECK(cfg.tokens() == 17);
  CHECK(cfg.head_dim() == 16);
  cfg.patch = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("plain forward: finite logits, attention rows sum to 1") {
  VitModel model = make_vit(toy_config(), 42);
  ForwardTrace trace;
  Tensor logits = vit_forward(model, random_image(model.cfg, 1), nullptr, &trace);
  CHECK(logits.size() == model.cfg.classes);
  for (double v : logits.values()) CHECK(std::isfinite(v));

  for (const auto& block : trace.blocks) {
    CHECK(block.heads.size() == model.cfg.heads);
    for (const auto& head : block.heads) {
      const std::size_t n = model.cfg.tokens();
      CHECK(head.attn.shape() == Shape{n, n});
      for (std::size_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < n; ++c) sum += head.attn.values()[r * n + c];
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
      // no transform installed: Z literally reuses the map
      CHECK(head.attn_used.node() == head.attn.node());
    }
  }
}

TEST_CASE("forward is a pure function: repeated calls bit-identical") {
  VitModel model = make_vit(toy_config(), 7);
  Tensor img = random_image(model.cfg, 2);
  Tensor a = vit_forward(model, img);
  Tensor b = vit_forward(model, img);
  CHECK(a.values() == b.values());
}

TEST_CASE("identity transforms leave logits bit-identical") {
  VitModel model = make_vit(toy_config(), 11);
  Tensor img = random_image(model.cfg, 3);
  Tensor plain = vit_forward(model, img);

  HookRegistry hooks;
  for (std::size_t b = 0; b < model.cfg.blocks; ++b) {
    for (std::size_t h = 0; h < model.cfg.heads; ++h) {
      hooks.set({HookKind::attention_map, static_cast<int>(b), static_cast<int>(h)},
                [](const Tensor& t) { return t; });
    }
    hooks.set({HookKind::attention_output, static_cast<int>(b), -1},
              [](const Tensor& t) { return t; });
    hooks.set({HookKind::mlp_output, static_cast<int>(b), -1}, [](const Tensor& t) { return t; });
  }
  Tensor hooked = vit_forward(model, img, &hooks);
  CHECK(hooked.values() == plain.values());
}

TEST_CASE("unknown hook points are rejected") {
  VitModel model = make_vit(toy_config(), 11);
  Tensor img = random_image(model.cfg, 3);

  HookRegistry bad_block;
  bad_block.set({HookKind::mlp_output, 9, -1}, [](const Tensor& t) { return t; });
  CHECK_THROWS_AS(vit_forward(model, img, &bad_block), ConfigError);

  HookRegistry bad_head;
  bad_head.set({HookKind::attention_map, 0, 5}, [](const Tensor& t) { return t; });
  CHECK_THROWS_AS(vit_forward(model, img, &bad_head), ConfigError);

  HookRegistry head_on_output;
  head_on_output.set({HookKind::attention_output, 0, 1}, [](const Tensor& t) { return t; });
  CHECK_THROWS_AS(vit_forward(model, img, &head_on_output), ConfigError);

  HookRegistry dup;
  dup.set({HookKind::mlp_output, 0, -1}, [](const Tensor& t) { return t; });
  CHECK_THROWS_AS(dup.set({HookKind::mlp_output, 0, -1}, [](const Tensor& t) { return t; }),
                  ConfigError);
}

TEST_CASE("zeroing a block's attention output equals dropping that block") {
  VitModel model = make_vit(toy_config(), 13);
  Tensor img = random_image(model.cfg, 4);

  HookRegistry hooks;
  hooks.set({HookKind::attention_output, 2, -1},
            [](const Tensor& t) { return Tensor::zeros(t.shape()); });
  Tensor zeroed = vit_forward(model, img, &hooks);

  VitModel dropped = drop_attention_blocks(model, {2});
  Tensor skipped = vit_forward(dropped, img);
  for (std::size_t i = 0; i < zeroed.size(); ++i) {
    CHECK(zeroed.values()[i] == doctest::Approx(skipped.values()[i]).epsilon(1e-15));
  }
}

TEST_CASE("drop_attention_blocks: empty set, all blocks, bad index") {
  VitModel model = make_vit(toy_config(), 17);
  Tensor img = random_image(model.cfg, 5);

  VitModel same = drop_attention_blocks(model, {});
  CHECK(vit_forward(same, img).values() == vit_forward(model, img).values());

  VitModel none = drop_attention_blocks(model, {0, 1, 2, 3});
  Tensor logits = vit_forward(none, img);
  for (double v : logits.values()) CHECK(std::isfinite(v));
  ForwardTrace trace;
  vit_forward(none, img, nullptr, &trace);
  for (const auto& block : trace.blocks) CHECK(block.heads.empty());

  CHECK_THROWS_AS(drop_attention_blocks(model, {4}), ConfigError);
}

TEST_CASE("attention core: zero scores give uniform maps, uniform map averages V") {
  RngStream rng(19);
  const std::size_t n = 6, d = 4;
  Tensor q = Tensor::zeros({n, d});
  Tensor k = Tensor::zeros({n, d});
  Tensor v = Tensor::zeros({n, d});
  for (double& x : v.values()) x = rng.next_normal();

  AttentionInternals in = attention_core(q, k, v, 1.0 / std::sqrt(double(d)));
  for (double a : in.attn.values()) CHECK(a == doctest::Approx(1.0 / n).epsilon(1e-12));

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += v.values()[r * d + c] / double(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      CHECK(in.z.values()[r * d + c] == doctest::Approx(mean[c]).epsilon(1e-12));
}

TEST_CASE("gradient w.r.t. pre-softmax scores matches finite differences") {
  RngStream rng(23);
  const std::size_t n = 5, d = 3;
  Tensor scores = Tensor::zeros({n, n}, true);
  for (double& v : scores.values()) v = rng.next_normal();
  Tensor v = Tensor::zeros({n, d});
  for (double& x : v.values()) x = rng.next_normal();
  Tensor r = Tensor::zeros({n, d});
  for (double& x : r.values()) x = rng.next_normal();

  auto f = [&](const Tensor& s) { return sum(mul(matmul(softmax_rows(s), v), r)); };
  CHECK(finite_difference_check(f, scores).max_rel_err < 1e-4);
}

TEST_CASE("attention sublayer input gradient matches finite differences") {
  VitConfig cfg = oracle_vit_config();
  VitModel model = make_vit(cfg, 29);
  RngStream rng(31);
  Tensor tokens = Tensor::zeros({cfg.tokens(), cfg.embed_dim}, true);
  for (double& v : tokens.values()) v = 0.5 * rng.next_normal();
  Tensor r = Tensor::zeros({cfg.tokens(), cfg.embed_dim});
  for (double& v : r.values()) v = rng.next_normal();

  auto f = [&](const Tensor& t) { return sum(mul(attention_sublayer(model, 0, t), r)); };
  CHECK(finite_difference_check(f, tokens).max_rel_err < 1e-4);
}

TEST_CASE("classifier head reads only the class token") {
  VitModel model = make_vit(toy_config(), 37);
  RngStream rng(41);
  Tensor tokens = Tensor::zeros({model.cfg.tokens(), model.cfg.embed_dim});
  for (double& v : tokens.values()) v = rng.next_normal();

  Tensor logits = classifier_head(model, tokens);
  Tensor scrambled = tokens.detached();
  // rewrite every non-class row
  for (std::size_t i = model.cfg.embed_dim; i < scrambled.size(); ++i) {
    scrambled.values()[i] = rng.next_normal();
  }
  Tensor logits2 = classifier_head(model, scrambled);
  CHECK(logits.values() == logits2.values());
}

TEST_CASE("full toy model input gradient agrees with finite differences") {
  VitConfig cfg = oracle_vit_config();
  VitModel model = make_vit(cfg, 43);
  Tensor img = random_image(cfg, 6, true);
  auto f = [&](const Tensor& x) { return cross_entropy(vit_forward(model, x), 3); };
  const FdCheckResult res = finite_difference_check(f, img, 1e-5, 1e-3);
  CHECK(res.max_rel_err < 1e-3);
  CHECK(res.frac_within >= 0.99);
}

TEST_CASE("checkpoint round trip preserves the forward bit for bit") {
  VitModel model = make_vit(toy_config(), 47);
  const std::string path =
      (std::filesystem::temp_directory_path() / "fpr_vit_roundtrip.fprc").string();
  save_vit(model, path);
  VitModel loaded = load_vit(path);
  Tensor img = random_image(model.cfg, 7);
  CHECK(vit_forward(loaded, img).values() == vit_forward(model, img).values());
  std::filesystem::remove(path);

  Container c = vit_to_container(model);
  c.kind = "other";
  CHECK_THROWS_AS(vit_from_container(c), ConfigError);
}

TEST_CASE("wrong image shape is rejected") {
  VitModel model = make_vit(toy_config(), 53);
  CHECK_THROWS_AS(vit_forward(model, Tensor::zeros({3, 8, 8})), std::invalid_argument);
}
