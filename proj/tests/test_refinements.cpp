#include <cmath>

#include "doctest.h"

#include "fpr/errors.hpp"
#include "fpr/gradcheck.hpp"
#include "fpr/ops.hpp"
#include "fpr/refinements.hpp"
#include "fpr/rng.hpp"

using namespace fpr;

namespace {

Tensor probability_rows(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        bool requires_grad = false) {
  Tensor t = Tensor::zeros({rows, cols}, requires_grad);
  RngStream rng(seed);
  for (double& v : t.values()) v = rng.next_unit() + 0.05;
  // normalize rows in place so the input is a valid attention map
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += t.values()[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) t.values()[r * cols + c] /= s;
  }
  return t;
}

}  // namespace

TEST_CASE("diversity matrices: d=0, determinism, bounds, moments") {
  AmdConfig cfg;
  cfg.diversity = 0.0;
  DiversityMatrix ones = sample_diversity_matrices(cfg, {3, 3}, 1, 0, 0);
  for (double v : ones.values.values()) CHECK(v == 1.0);

  cfg.diversity = 25.0;
  cfg.rng_seed = 99;
  DiversityMatrix a = sample_diversity_matrices(cfg, {4, 4}, 2, 1, 0);
  DiversityMatrix b = sample_diversity_matrices(cfg, {4, 4}, 2, 1, 0);
  CHECK(a.values.values() == b.values.values());
  DiversityMatrix c = sample_diversity_matrices(cfg, {4, 4}, 3, 1, 0);
  CHECK(a.values.values() != c.values.values());
  CHECK_FALSE(a.values.requires_grad());
  for (double v : a.values.values()) {
    CHECK(v >= 1.0 - 25.0);
    CHECK(v <= 1.0 + 25.0);
  }

  // mean of 1e5 draws within 3 sigma of 1: sigma_mean = d / sqrt(3 n)
  const std::size_t n = 100000;
  cfg.diversity = 25.0;
  DiversityMatrix big = sample_diversity_matrices(cfg, {n / 100, 100}, 5, 0, 0);
  double mean = 0.0;
  for (double v : big.values.values()) mean += v;
  mean /= static_cast<double>(n);
  const double bound = 3.0 * 25.0 / std::sqrt(3.0 * static_cast<double>(n));
  CHECK(std::abs(mean - 1.0) <= bound);
}

TEST_CASE("amd transform: uniform row stays uniform under constant M") {
  Tensor uniform = Tensor::full({2, 8}, 1.0 / 8.0);
  DiversityMatrix m;
  m.values = Tensor::full({2, 8}, 3.7);  // constant matrix, any c
  Tensor out = amd_transform(uniform, m);
  for (double v : out.values()) CHECK(v == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("amd with d=0 is softmax, not identity") {
  Tensor row = Tensor::from({1, 2}, {0.7, 0.3});
  AmdConfig cfg;
  cfg.diversity = 0.0;
  Tensor out = amd_transform(row, sample_diversity_matrices(cfg, {1, 2}, 1, 0, 0));
  // softmax([0.7, 0.3]) = [0.598688, 0.401312]
  CHECK(out.values()[0] == doctest::Approx(0.5986876601124521).epsilon(1e-9));
  CHECK(out.values()[1] == doctest::Approx(0.4013123398875479).epsilon(1e-9));
}

TEST_CASE("amd rows sum to 1 for any d, and shape mismatches throw") {
  for (double d : {0.0, 1.0, 25.0, 100.0}) {
    Tensor attn = probability_rows(5, 7, 7 + static_cast<std::uint64_t>(d));
    AmdConfig cfg;
    cfg.diversity = d;
    Tensor out = amd_transform(attn, sample_diversity_matrices(cfg, attn.shape(), 1, 0, 0));
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += out.values()[r * 7 + c];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
  Tensor attn = probability_rows(3, 3, 1);
  DiversityMatrix wrong;
  wrong.values = Tensor::full({2, 2}, 1.0);
  CHECK_THROWS_AS(amd_transform(attn, wrong), ConfigError);
}

TEST_CASE("amd at d=30 saturates rows and shrinks the jacobian") {
  // sample peaked attention rows, apply d=30: entries of S = A .* M spread
  // over tens of units, so many rows saturate. On rows whose top score leads
  // by > 20 the softmax derivative has collapsed below 1e-6.
  AmdConfig cfg;
  cfg.diversity = 30.0;
  cfg.rng_seed = 2024;
  RngStream rng(77);
  const std::size_t n = 17;
  std::size_t saturated_rows = 0;
  double worst_saturated_jac = 0.0;
  double max_spread = 0.0;
  for (int trial = 0; trial < 1000 / 16; ++trial) {
    Tensor attn = Tensor::zeros({16, n});
    for (std::size_t r = 0; r < 16; ++r) {
      // peaked row, one entry near 0.9
      const std::size_t peak = rng.next_below(n);
      for (std::size_t c = 0; c < n; ++c) attn.values()[r * n + c] = 0.1 / double(n - 1);
      attn.values()[r * n + peak] = 0.9;
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += attn.values()[r * n + c];
      for (std::size_t c = 0; c < n; ++c) attn.values()[r * n + c] /= s;
    }
    DiversityMatrix m = sample_diversity_matrices(cfg, attn.shape(), trial, 0, 0);
    Tensor scores = mul(attn, m.values);
    Tensor out = softmax_rows(scores);
    for (std::size_t r = 0; r < 16; ++r) {
      double top = -1e300, second = -1e300, lowest = 1e300;
      for (std::size_t c = 0; c < n; ++c) {
        const double v = scores.values()[r * n + c];
        lowest = std::min(lowest, v);
        if (v > top) {
          second = top;
          top = v;
        } else if (v > second) {
          second = v;
        }
      }
      max_spread = std::max(max_spread, top - lowest);
      if (top - second <= 20.0) continue;
      ++saturated_rows;
      std::vector<double> p(out.values().begin() + r * n, out.values().begin() + (r + 1) * n);
      for (double j : softmax_jacobian_row(p)) {
        worst_saturated_jac = std::max(worst_saturated_jac, std::abs(j));
      }
    }
  }
  CHECK(saturated_rows > 50);
  CHECK(worst_saturated_jac < 1e-6);
  CHECK(max_spread > 25.0);  // diversification really does spread the scores
}

TEST_CASE("amd gradient flows through A only") {
  Tensor attn = probability_rows(4, 4, 13, /*requires_grad=*/true);
  AmdConfig cfg;
  cfg.diversity = 2.0;
  DiversityMatrix m = sample_diversity_matrices(cfg, attn.shape(), 1, 0, 0);
  Tensor out = amd_transform(attn, m);
  backward(sum(mul(out, out)));
  CHECK(attn.has_grad());
  CHECK_FALSE(m.values.has_grad());
}

TEST_CASE("mte recurrence: first step, eta 0, geometric limit") {
  const HookPoint point{HookKind::attention_output, 0, -1};
  Tensor e = Tensor::from({2, 3}, {1, -2, 3, 4, -5, 6});

  SUBCASE("t=1 returns s*E exactly") {
    MteState state(MteConfig{0.8, 0.3});
    state.begin_iteration(1);
    Tensor out = mte_transform(e, state, point);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(out.values()[i] == 0.8 * e.values()[i]);
  }

  SUBCASE("eta=0 is pure scaling at every t") {
    MteState state(MteConfig{0.8, 0.0});
    for (int t = 1; t <= 4; ++t) {
      state.begin_iteration(t);
      Tensor out = state.apply(e, point);
      for (std::size_t i = 0; i < e.size(); ++i) CHECK(out.values()[i] == 0.8 * e.values()[i]);
    }
  }

  SUBCASE("constant input converges to s E / (1 - eta)") {
    MteState state(MteConfig{0.8, 0.3});
    Tensor out;
    for (int t = 1; t <= 20; ++t) {
      state.begin_iteration(t);
      out = state.apply(e, point);
    }
    const double limit = 0.8 / (1.0 - 0.3);  // 8/7
    for (std::size_t i = 0; i < e.size(); ++i) {
      CHECK(out.values()[i] == doctest::Approx(limit * e.values()[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("mte unrolled closed form matches the iterative state within 1e-10") {
  RngStream rng(55);
  const double s = 0.6, eta = 0.45;
  MteState state(MteConfig{s, eta});
  const HookPoint point{HookKind::mlp_output, 1, -1};
  std::vector<std::vector<double>> history;
  Tensor out;
  for (int t = 1; t <= 10; ++t) {
    Tensor e = Tensor::zeros({3, 4});
    for (double& v : e.values()) v = rng.next_normal();
    history.push_back(e.values());
    state.begin_iteration(t);
    out = state.apply(e, point);

    // E^_t = s * sum_k eta^{t-k} E_k
    for (std::size_t i = 0; i < e.size(); ++i) {
      double direct = 0.0;
      for (int k = 1; k <= t; ++k) {
        direct += std::pow(eta, t - k) * history[k - 1][i];
      }
      direct *= s;
      CHECK(out.values()[i] == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("mte history is detached: iteration gradients do not depend on eta") {
  // loss = sum(mte(c * x)) at iteration t: d loss / dx = s * c regardless of
  // the accumulated history, because E^_{t-1} is a constant.
  auto grad_at_iteration_2 = [](double eta) {
    MteState state(MteConfig{0.7, eta});
    const HookPoint point{HookKind::attention_output, 0, -1};
    for (int t = 1; t <= 2; ++t) {
      Tensor x = Tensor::from({1, 4}, {0.1, 0.2, 0.3, 0.4}, true);
      state.begin_iteration(t);
      Tensor e = mul_scalar(x, 2.5);
      Tensor out = state.apply(e, point);
      backward(sum(out));
      if (t == 2) return x.grad();
    }
    return std::vector<double>{};
  };
  const auto g_none = grad_at_iteration_2(0.0);
  const auto g_with = grad_at_iteration_2(0.9);
  CHECK(g_none == g_with);
  for (double g : g_with) CHECK(g == doctest::Approx(0.7 * 2.5).epsilon(1e-12));
}

TEST_CASE("mte guards: shape changes and iteration order") {
  MteState state(MteConfig{0.8, 0.3});
  const HookPoint point{HookKind::attention_output, 0, -1};
  CHECK_THROWS_AS(state.apply(Tensor::zeros({2, 2}), point), std::runtime_error);
  state.begin_iteration(1);
  state.apply(Tensor::zeros({2, 2}), point);
  CHECK_THROWS_AS(state.begin_iteration(3), std::runtime_error);
  state.begin_iteration(2);
  CHECK_THROWS_AS(state.apply(Tensor::zeros({3, 2}), point), std::runtime_error);
}

TEST_CASE("attention dropout: rate 0 identity, determinism, renormalized rows") {
  Tensor attn = probability_rows(6, 9, 21);
  Tensor same = attention_dropout_transform(attn, 0.0, 5, 1, 0, 0);
  CHECK(same.values() == attn.values());

  Tensor a = attention_dropout_transform(attn, 0.3, 5, 1, 0, 0);
  Tensor b = attention_dropout_transform(attn, 0.3, 5, 1, 0, 0);
  CHECK(a.values() == b.values());
  Tensor c = attention_dropout_transform(attn, 0.3, 6, 1, 0, 0);
  CHECK(a.values() != c.values());

  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t col = 0; col < 9; ++col) s += a.values()[r * 9 + col];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  CHECK_THROWS_AS(attention_dropout_transform(attn, 1.0, 5, 1, 0, 0), ConfigError);
}

TEST_CASE("gradient cut: identical forward, zero backward") {
  Tensor attn = probability_rows(4, 4, 33, true);
  Tensor cut = attention_gradient_cut(attn);
  CHECK(cut.values() == attn.values());
  Tensor v = probability_rows(4, 4, 34);
  backward(sum(matmul(cut, v)));
  CHECK_FALSE(attn.has_grad());
}

TEST_CASE("plan validation catches conflicts and bad indices") {
  RefinementPlan plan;
  plan.amd = AmdConfig{{0, 1}, 25.0, 0, 0};
  plan.dropout = DropoutConfig{{1, 2}, 0.2};
  CHECK_THROWS_AS(plan.validate(4), ConfigError);

  plan.dropout.reset();
  plan.amd->index_set = {7};
  CHECK_THROWS_AS(plan.validate(4), ConfigError);

  plan.amd->index_set = {0};
  plan.gradient_cut = true;
  CHECK_THROWS_AS(plan.validate(4), ConfigError);

  RefinementPlan ok;
  ok.mte = MteConfig{0.8, 0.3};
  ok.validate(4);
}

TEST_CASE("build_hooks wires the registry the plan asks for") {
  VitConfig cfg;  // 4 blocks, 2 heads
  RefinementPlan plan;
  plan.amd = AmdConfig{{0, 3}, 25.0, 0, 0};
  plan.mte = MteConfig{0.8, 0.3};
  MteState state(*plan.mte);
  state.begin_iteration(1);
  HookRegistry hooks = build_hooks(plan, cfg, 9, 1, &state);
  // 2 blocks x 2 heads attention maps + 4 blocks x 2 output points
  CHECK(hooks.size() == 2 * 2 + 4 * 2);
  CHECK(hooks.find({HookKind::attention_map, 0, 0}) != nullptr);
  CHECK(hooks.find({HookKind::attention_map, 1, 0}) == nullptr);
  CHECK(hooks.find({HookKind::mlp_output, 2, -1}) != nullptr);

  RefinementPlan mte_only;
  mte_only.mte = MteConfig{};
  CHECK_THROWS_AS(build_hooks(mte_only, cfg, 9, 1, nullptr), std::runtime_error);
}

TEST_CASE("random block drop resolution is a keyed draw") {
  BlockDropConfig cfg;
  cfg.random_count = 2;
  const auto a = resolve_block_drop(cfg, 6, 123);
  const auto b = resolve_block_drop(cfg, 6, 123);
  CHECK(a == b);
  CHECK(a.size() == 2);
  for (std::size_t idx : a) CHECK(idx < 6);
  const auto c = resolve_block_drop(cfg, 6, 124);
  CHECK(a != c);  // overwhelmingly likely across key change

  cfg.random_count = 9;
  CHECK_THROWS_AS(resolve_block_drop(cfg, 6, 1), ConfigError);
}
