#include "fpr/gradcheck_suite.hpp"

#include <cmath>

#include "fpr/ops.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.next_normal();
  return t;
}

double max_over_seeds(int seeds, std::uint64_t key, const std::function<double(RngStream&)>& one) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    RngStream rng(mix_key(key, static_cast<std::uint64_t>(s)));
    worst = std::max(worst, one(rng));
  }
  return worst;
}

}  // namespace

VitConfig oracle_vit_config() {
  VitConfig cfg;
  cfg.image_size = 8;
  cfg.channels = 3;
  cfg.patch = 4;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.blocks = 2;
  cfg.mlp_hidden = 24;
  cfg.classes = 10;
  return cfg;
}

std::vector<GradCheck> default_gradcheck_suite(std::uint64_t seed, int seeds_per_check) {
  std::vector<GradCheck> checks;

  checks.push_back({"matmul", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 1), [](RngStream& rng) {
      Tensor a = random_tensor({3, 4}, rng);
      Tensor b = random_tensor({4, 2}, rng, false);
      Tensor r = random_tensor({3, 2}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(matmul(x, b), r)); };
      double worst = finite_difference_check(f, a).max_rel_err;
      Tensor b2 = random_tensor({4, 2}, rng);
      auto g = [&](const Tensor& x) { return sum(mul(matmul(a, x), r)); };
      return std::max(worst, finite_difference_check(g, b2).max_rel_err);
    });
  }});

  checks.push_back({"transpose", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 2), [](RngStream& rng) {
      Tensor a = random_tensor({4, 3}, rng);
      Tensor r = random_tensor({3, 4}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(transpose(x), r)); };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  checks.push_back({"elementwise_add_mul", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 3), [](RngStream& rng) {
      Tensor a = random_tensor({4, 5}, rng);
      Tensor b = random_tensor({4, 5}, rng, false);
      Tensor r = random_tensor({4, 5}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(add(mul(x, b), x), r)); };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  checks.push_back({"add_rowvec", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 4), [](RngStream& rng) {
      Tensor a = random_tensor({4, 5}, rng, false);
      Tensor v = random_tensor({5}, rng);
      Tensor r = random_tensor({4, 5}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(add_rowvec(a, x), r)); };
      return finite_difference_check(f, v).max_rel_err;
    });
  }});

  checks.push_back({"softmax_rows", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 5), [](RngStream& rng) {
      Tensor a = random_tensor({4, 6}, rng);
      Tensor r = random_tensor({4, 6}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(softmax_rows(x), r)); };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  checks.push_back({"normalize_rows", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 6), [](RngStream& rng) {
      Tensor a = Tensor::zeros({3, 5}, true);
      for (double& v : a.values()) v = 0.2 + rng.next_unit();  // positive rows
      Tensor r = random_tensor({3, 5}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(normalize_rows(x), r)); };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  checks.push_back({"gelu", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 7), [](RngStream& rng) {
      Tensor a = random_tensor({4, 4}, rng);
      Tensor r = random_tensor({4, 4}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(gelu(x), r)); };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  checks.push_back({"layernorm", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 8), [](RngStream& rng) {
      Tensor a = random_tensor({4, 6}, rng);
      Tensor gain = random_tensor({6}, rng);
      Tensor bias = random_tensor({6}, rng);
      Tensor r = random_tensor({4, 6}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(layernorm(x, gain, bias), r)); };
      double worst = finite_difference_check(f, a).max_rel_err;
      auto g = [&](const Tensor& x) { return sum(mul(layernorm(a, x, bias), r)); };
      worst = std::max(worst, finite_difference_check(g, gain).max_rel_err);
      auto h = [&](const Tensor& x) { return sum(mul(layernorm(a, gain, x), r)); };
      return std::max(worst, finite_difference_check(h, bias).max_rel_err);
    });
  }});

  checks.push_back({"cross_entropy", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 9), [](RngStream& rng) {
      Tensor logits = random_tensor({1, 7}, rng);
      const std::size_t label = rng.next_below(7);
      auto f = [&](const Tensor& x) { return cross_entropy(x, label); };
      return finite_difference_check(f, logits).max_rel_err;
    });
  }});

  checks.push_back({"image_to_patches", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 10), [](RngStream& rng) {
      Tensor img = random_tensor({2, 4, 4}, rng);
      Tensor r = random_tensor({4, 8}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(image_to_patches(x, 2), r)); };
      return finite_difference_check(f, img).max_rel_err;
    });
  }});

  checks.push_back({"unfold_conv", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 11), [](RngStream& rng) {
      Tensor img = random_tensor({2, 4, 4}, rng);
      Tensor r = random_tensor({16, 18}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(unfold_conv(x, 3, 1), r)); };
      return finite_difference_check(f, img).max_rel_err;
    });
  }});

  checks.push_back({"avg_pool2x2", 1e-4, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 12), [](RngStream& rng) {
      Tensor img = random_tensor({2, 4, 4}, rng);
      Tensor r = random_tensor({2, 2, 2}, rng, false);
      auto f = [&](const Tensor& x) { return sum(mul(avg_pool2x2(x), r)); };
      return finite_difference_check(f, img).max_rel_err;
    });
  }});

  // Analytic softmax Jacobian against central differences, random 5-vectors.
  checks.push_back({"softmax_jacobian_analytic", 1e-6, [=] {
    double worst = 0.0;
    for (int s = 0; s < seeds_per_check; ++s) {
      RngStream rng(mix_key(seed, 13, static_cast<std::uint64_t>(s)));
      const std::size_t n = 5;
      std::vector<double> x(n);
      for (double& v : x) v = rng.next_normal();
      Tensor row = Tensor::from({1, n}, x);
      Tensor p = softmax_rows(row);
      const auto jac = softmax_jacobian_row(p.values());
      const double h = 1e-6;
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        Tensor pp = softmax_rows(Tensor::from({1, n}, xp));
        Tensor pm = softmax_rows(Tensor::from({1, n}, xm));
        for (std::size_t m = 0; m < n; ++m) {
          const double fd = (pp.values()[m] - pm.values()[m]) / (2.0 * h);
          worst = std::max(worst, std::abs(jac[m * n + j] - fd));
        }
      }
    }
    return worst;
  }});

  // Saturated rows: when one score dominates by > 30, every Jacobian entry
  // collapses below 1e-8.
  checks.push_back({"softmax_jacobian_saturated", 1e-8, [=] {
    double worst = 0.0;
    for (int s = 0; s < seeds_per_check; ++s) {
      RngStream rng(mix_key(seed, 14, static_cast<std::uint64_t>(s)));
      const std::size_t n = 6;
      std::vector<double> x(n);
      for (double& v : x) v = rng.next_normal();
      x[rng.next_below(n)] += 30.0 + 5.0 * rng.next_unit();
      Tensor p = softmax_rows(Tensor::from({1, n}, x));
      for (double j : softmax_jacobian_row(p.values())) worst = std::max(worst, std::abs(j));
    }
    return worst;
  }});

  // Composite: softmax + cross-entropy chain.
  checks.push_back({"softmax_cross_entropy_composite", 1e-5, [=] {
    return max_over_seeds(seeds_per_check, mix_key(seed, 15), [](RngStream& rng) {
      Tensor a = random_tensor({2, 6}, rng);
      Tensor w = random_tensor({6, 4}, rng, false);
      const std::size_t label = rng.next_below(4);
      auto f = [&](const Tensor& x) {
        Tensor probs = softmax_rows(x);
        Tensor pooled = matmul(probs, w);
        return cross_entropy(slice_rows(pooled, 0, 1), label);
      };
      return finite_difference_check(f, a).max_rel_err;
    });
  }});

  // Full two-block model: loss gradient w.r.t. the input image.
  checks.push_back({"two_block_vit_composite", 1e-3, [=] {
    const VitConfig cfg = oracle_vit_config();
    return max_over_seeds(seeds_per_check, mix_key(seed, 16), [cfg](RngStream& rng) {
      VitModel model = make_vit(cfg, rng.next_u64());
      Tensor img = Tensor::zeros({cfg.channels, cfg.image_size, cfg.image_size}, true);
      for (double& v : img.values()) v = rng.next_unit();
      const std::size_t label = rng.next_below(cfg.classes);
      auto f = [&](const Tensor& x) { return cross_entropy(vit_forward(model, x), label); };
      return finite_difference_check(f, img, 1e-5, 1e-3).max_rel_err;
    });
  }});

  return checks;
}

}  // namespace fpr
