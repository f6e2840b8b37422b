#include <cmath>

#include "doctest.h"

#include "fpr/gradcheck.hpp"
#include "fpr/gradcheck_suite.hpp"
#include "fpr/ops.hpp"
#include "fpr/rng.hpp"
#include "fpr/tensor.hpp"

using namespace fpr;

namespace {

Tensor randn(Shape shape, RngStream& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.next_normal();
  return t;
}

}  // namespace

TEST_CASE("tensor basics and invariants") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.shape() == Shape{2, 3});
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(t.item(), std::invalid_argument);
  CHECK(Tensor::scalar(4.5).item() == 4.5);

  Tensor d = t.detached();
  CHECK(d.values() == t.values());
  d.values()[0] = 99.0;
  CHECK(t.values()[0] == 1.0);
}

TEST_CASE("matmul identity and scalar cases") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {3.5, -1.0, 2.0, 7.25});
  Tensor out = matmul(eye, m);
  CHECK(out.values() == m.values());

  Tensor a = Tensor::from({1, 1}, {2.0});
  Tensor b = Tensor::from({1, 1}, {3.0});
  CHECK(matmul(a, b).item() == 6.0);

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("elementwise identities") {
  Tensor a = Tensor::from({2, 2}, {0.3, -0.7, 1.5, 2.0});
  Tensor ones = Tensor::full({2, 2}, 1.0);
  CHECK(elementwise(a, ones, EwOp::mul).values() == a.values());

  Tensor v = Tensor::from({1, 2}, {1, 2});
  Tensor zeros = Tensor::zeros({1, 2});
  CHECK(elementwise(v, zeros, EwOp::add).values() == v.values());

  CHECK_THROWS_AS(add(Tensor::zeros({2, 2}), Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("softmax rows: uniform, saturation, row sums") {
  Tensor flat = Tensor::zeros({1, 4});
  Tensor u = softmax_rows(flat);
  for (double p : u.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

  Tensor spike = Tensor::from({1, 4}, {1e6, 0.0, 0.0, 0.0});
  Tensor s = softmax_rows(spike);
  CHECK(s.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 1; j < 4; ++j) CHECK(std::abs(s.values()[j]) < 1e-12);

  RngStream rng(3);
  Tensor r = randn({6, 5}, rng);
  Tensor p = softmax_rows(r);
  for (std::size_t row = 0; row < 6; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      const double v = p.values()[row * 5 + j];
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }

  CHECK_THROWS_AS(softmax_rows(Tensor::zeros({4})), std::invalid_argument);
}

TEST_CASE("gelu, cross entropy, layernorm reference values") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  // gelu(1) = 0.5 (1 + erf(1/sqrt 2)) = Phi(1)
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.8413447460685429).epsilon(1e-12));

  Tensor logits = Tensor::zeros({1, 10});
  CHECK(cross_entropy(logits, 3).item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(logits, 10), std::out_of_range);

  RngStream rng(5);
  Tensor x = randn({4, 8}, rng);
  Tensor gain = Tensor::full({8}, 1.0);
  Tensor bias = Tensor::zeros({8});
  Tensor ln = layernorm(x, gain, bias);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += ln.values()[r * 8 + j];
    mean /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double d = ln.values()[r * 8 + j] - mean;
      var += d * d;
    }
    var /= 8.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("backward: sum and square leaves") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::scalar(3.0, true);
  Tensor loss = mul(y, y);
  backward(loss);
  CHECK(y.grad()[0] == 6.0);

  CHECK_THROWS_AS(backward(Tensor::zeros({2, 2}, true)), std::invalid_argument);
}

TEST_CASE("backward visits shared subgraphs once") {
  // z = x*x used twice: loss = z + z. d loss / dx = 4x.
  Tensor x = Tensor::scalar(2.5, true);
  Tensor z = mul(x, x);
  backward(add(z, z));
  CHECK(x.grad()[0] == doctest::Approx(10.0).epsilon(1e-14));
}

TEST_CASE("backward is deterministic bit for bit") {
  RngStream rng(17);
  Tensor w = randn({6, 6}, rng, true);
  Tensor v = randn({6, 6}, rng, false);
  auto run = [&] {
    w.zero_grad();
    Tensor h = gelu(matmul(softmax_rows(w), v));
    backward(sum(h));
    return w.grad();
  };
  const std::vector<double> g1 = run();
  const std::vector<double> g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("stop_gradient blocks one path only") {
  Tensor x = Tensor::scalar(1.5, true);
  Tensor cut = stop_gradient(mul(x, x));
  Tensor loss = add(mul(x, x), cut);  // d/dx = 2x through the live path only
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_FALSE(cut.requires_grad());
}

TEST_CASE("finite difference check: quadratic form is exact") {
  RngStream rng(23);
  Tensor m = randn({5, 5}, rng);
  Tensor x = randn({1, 5}, rng, true);
  auto f = [&](const Tensor& t) { return sum(mul(matmul(t, m), t)); };
  const FdCheckResult res = finite_difference_check(f, x);
  CHECK(res.max_rel_err < 1e-8);
  CHECK(res.frac_within == 1.0);
}

namespace {

// Test fixture: forward 2x, backward claims the factor is 3.
Tensor corrupted_double(const Tensor& a) {
  auto node = std::make_shared<TensorNode>();
  node->shape = a.shape();
  node->value.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) node->value[i] = 2.0 * a.values()[i];
  if (a.requires_grad()) {
    node->requires_grad = true;
    node->parents.push_back(a.node());
    auto an = a.node();
    node->backward_fn = [an](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += 3.0 * self.grad[i];
    };
  }
  return Tensor(node);
}

}  // namespace

TEST_CASE("finite difference check flags a corrupted backward rule") {
  Tensor x = Tensor::from({1, 3}, {0.4, -0.2, 0.9}, true);
  auto f = [](const Tensor& t) { return sum(corrupted_double(t)); };
  const FdCheckResult res = finite_difference_check(f, x);
  // analytic says 3, finite differences say 2 -> relative error 1/3
  CHECK(res.max_rel_err > 0.3);
  CHECK(res.frac_within < 1.0);
}

TEST_CASE("softmax jacobian matches the analytic form") {
  RngStream rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(5);
    for (double& v : x) v = rng.next_normal();
    Tensor p = softmax_rows(Tensor::from({1, 5}, x));
    const auto jac = softmax_jacobian_row(p.values());
    for (std::size_t m = 0; m < 5; ++m) {
      for (std::size_t n = 0; n < 5; ++n) {
        const double expect =
            m == n ? p.values()[m] * (1.0 - p.values()[m]) : -p.values()[m] * p.values()[n];
        CHECK(jac[m * 5 + n] == expect);  // same expression, exact
      }
    }
  }
}

TEST_CASE("default gradcheck suite passes at 20 seeds") {
  const auto report = run_gradcheck_suite(default_gradcheck_suite(2024, 20));
  for (const auto& o : report.outcomes) {
    INFO(o.name << " max_err=" << o.max_err << " tol=" << o.tolerance);
    CHECK(o.pass);
  }
  CHECK(report.all_pass);
}

TEST_CASE("gradcheck suite machinery reports a deliberately broken check") {
  std::vector<GradCheck> checks = {{"broken_fixture", 1e-6, [] { return 1.0; }}};
  const auto report = run_gradcheck_suite(checks);
  CHECK_FALSE(report.all_pass);
  CHECK_FALSE(report.outcomes[0].pass);
  CHECK(report.outcomes[0].max_err == 1.0);
}
