#include "fpr/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace fpr {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

std::shared_ptr<TensorNode> make_node(Shape shape) {
  auto node = std::make_shared<TensorNode>();
  node->value.assign(shape_numel(shape), 0.0);
  node->shape = std::move(shape);
  return node;
}

// Mark the output differentiable and register the grad-receiving inputs as
// tape parents. Inputs that do not require grad are captured by the backward
// lambdas for their values only.
void wire(const std::shared_ptr<TensorNode>& out,
          std::initializer_list<std::shared_ptr<TensorNode>> inputs) {
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      out->requires_grad = true;
      out->parents.push_back(in);
    }
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got shape " +
                                shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  auto out = make_node({m, n});
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = out->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  wire(out, {a.node(), b.node()});
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, m, k, n](TensorNode& self) {
      const double* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = G B^T
        double* da = an->grad.data();
        const double* pb2 = bn->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            const double* brow = pb2 + j;  // column j of B, stride n
            double* darow = da + i * k;
            for (std::size_t p = 0; p < k; ++p) darow[p] += gij * brow[p * n];
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T G
        double* db = bn->grad.data();
        const double* pa2 = an->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa2[i * k + p];
            double* dbrow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto out = make_node({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->value[j * m + i] = a.values()[i * n + j];
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, m, n](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
    };
  }
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = make_node(a.shape());
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] + b.values()[i];
  wire(out, {a.node(), b.node()});
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, n](TensorNode& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = make_node(a.shape());
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] * b.values()[i];
  wire(out, {a.node(), b.node()});
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, n](TensorNode& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->value[i];
      }
    };
  }
  return Tensor(out);
}

Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op) {
  // Scalar broadcast: a 1-element operand folds into a scalar op. The scalar
  // side is treated as a constant; gradients flow only through the tensor
  // side, which is all the callers need.
  if (a.size() == 1 && b.size() > 1) {
    return op == EwOp::add ? add_scalar(b, a.item()) : mul_scalar(b, a.item());
  }
  if (b.size() == 1 && a.size() > 1) {
    return op == EwOp::add ? add_scalar(a, b.item()) : mul_scalar(a, b.item());
  }
  return op == EwOp::add ? add(a, b) : mul(a, b);
}

Tensor add_scalar(const Tensor& a, double c) {
  auto out = make_node(a.shape());
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] + c;
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, n](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor mul_scalar(const Tensor& a, double c) {
  auto out = make_node(a.shape());
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] * c;
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, n, c](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(out);
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "add_rowvec");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (v.size() != cols) {
    throw std::invalid_argument("add_rowvec: vector length " + std::to_string(v.size()) +
                                " vs " + std::to_string(cols) + " columns");
  }
  auto out = make_node(a.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out->value[i * cols + j] = a.values()[i * cols + j] + v.values()[j];
  wire(out, {a.node(), v.node()});
  if (out->requires_grad) {
    auto an = a.node(), vn = v.node();
    out->backward_fn = [an, vn, rows, cols](TensorNode& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < rows * cols; ++i) an->grad[i] += self.grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) vn->grad[j] += self.grad[i * cols + j];
      }
    };
  }
  return Tensor(out);
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() < 2) {
    throw std::invalid_argument("softmax_rows: rank >= 2 required, got " + shape_str(a.shape()));
  }
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.size() / cols;
  auto out = make_node(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.values().data() + r * cols;
    double* y = out->value.data() + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, rows, cols](TensorNode& self) {
      an->ensure_grad();
      // row rule: g_in = p .* (g_out - <g_out, p>)
      for (std::size_t r = 0; r < rows; ++r) {
        const double* p = self.value.data() + r * cols;
        const double* g = self.grad.data() + r * cols;
        double* gi = an->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < cols; ++j) gi[j] += p[j] * (g[j] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor normalize_rows(const Tensor& a) {
  if (a.rank() < 2) {
    throw std::invalid_argument("normalize_rows: rank >= 2 required");
  }
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.size() / cols;
  auto out = make_node(a.shape());
  std::vector<double> sums(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.values().data() + r * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += x[j];
    sums[r] = s;
    double* y = out->value.data() + r * cols;
    if (std::abs(s) < 1e-300) {
      // degenerate row: fall back to uniform, treated as constant
      for (std::size_t j = 0; j < cols; ++j) y[j] = 1.0 / static_cast<double>(cols);
    } else {
      for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] / s;
    }
  }
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, rows, cols, sums](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double s = sums[r];
        if (std::abs(s) < 1e-300) continue;
        const double* y = self.value.data() + r * cols;
        const double* g = self.grad.data() + r * cols;
        double* gi = an->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < cols; ++j) gi[j] += (g[j] - dot) / s;
      }
    };
  }
  return Tensor(out);
}

Tensor gelu(const Tensor& a) {
  auto out = make_node(a.shape());
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.values()[i];
    out->value[i] = 0.5 * x * (1.0 + std::erf(x / kSqrt2));
  }
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, n](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double x = an->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(x / kSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        an->grad[i] += self.grad[i] * (cdf + x * pdf);
      }
    };
  }
  return Tensor(out);
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() < 2) {
    throw std::invalid_argument("layernorm: rank >= 2 required");
  }
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.size() / cols;
  if (gain.size() != cols || bias.size() != cols) {
    throw std::invalid_argument("layernorm: gain/bias length must equal last axis");
  }
  auto out = make_node(a.shape());
  std::vector<double> xhat(a.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.values().data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = x[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xh = (x[j] - mean) * is;
      xhat[r * cols + j] = xh;
      out->value[r * cols + j] = gain.values()[j] * xh + bias.values()[j];
    }
  }
  wire(out, {a.node(), gain.node(), bias.node()});
  if (out->requires_grad) {
    auto an = a.node(), gn = gain.node(), bn = bias.node();
    out->backward_fn = [an, gn, bn, rows, cols, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)](TensorNode& self) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = self.grad.data() + r * cols;
        const double* xh = xhat.data() + r * cols;
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (std::size_t j = 0; j < cols; ++j) gn->grad[j] += g[j] * xh[j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t j = 0; j < cols; ++j) bn->grad[j] += g[j];
        }
        if (an->requires_grad) {
          an->ensure_grad();
          double mean_gy = 0.0, mean_gyx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gy = g[j] * gn->value[j];
            mean_gy += gy;
            mean_gyx += gy * xh[j];
          }
          mean_gy /= static_cast<double>(cols);
          mean_gyx /= static_cast<double>(cols);
          double* gi = an->grad.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gy = g[j] * gn->value[j];
            gi[j] += inv_std[r] * (gy - mean_gy - xh[j] * mean_gyx);
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t k = logits.size();
  if (label >= k) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(k) + " classes");
  }
  auto out = make_node({1});
  const double* x = logits.values().data();
  double mx = x[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(x[j] - mx);
  const double lse = mx + std::log(s);
  out->value[0] = lse - x[label];
  wire(out, {logits.node()});
  if (out->requires_grad) {
    auto ln = logits.node();
    out->backward_fn = [ln, label, k, mx, s](TensorNode& self) {
      ln->ensure_grad();
      const double g = self.grad[0];
      for (std::size_t j = 0; j < k; ++j) {
        const double p = std::exp(ln->value[j] - mx) / s;
        ln->grad[j] += g * (p - (j == label ? 1.0 : 0.0));
      }
    };
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_node({1});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out->value[0] = s;
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an](TensorNode& self) {
      an->ensure_grad();
      for (double& g : an->grad) g += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a.shape()[1] != b.shape()[1]) {
    throw std::invalid_argument("concat_rows: column counts differ");
  }
  const std::size_t ra = a.shape()[0], rb = b.shape()[0], cols = a.shape()[1];
  auto out = make_node({ra + rb, cols});
  std::copy(a.values().begin(), a.values().end(), out->value.begin());
  std::copy(b.values().begin(), b.values().end(), out->value.begin() + ra * cols);
  wire(out, {a.node(), b.node()});
  if (out->requires_grad) {
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, ra, rb, cols](TensorNode& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < ra * cols; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < rb * cols; ++i) bn->grad[i] += self.grad[ra * cols + i];
      }
    };
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (begin >= end || end > rows) {
    throw std::out_of_range("slice_rows: bad range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") for " + std::to_string(rows) + " rows");
  }
  auto out = make_node({end - begin, cols});
  std::copy(a.values().begin() + begin * cols, a.values().begin() + end * cols,
            out->value.begin());
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an, begin, cols](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        an->grad[begin * cols + i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  auto out = make_node(std::move(shape));
  out->value = a.values();
  wire(out, {a.node()});
  if (out->requires_grad) {
    auto an = a.node();
    out->backward_fn = [an](TensorNode& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor image_to_patches(const Tensor& x, std::size_t patch) {
  if (x.rank() != 3) {
    throw std::invalid_argument("image_to_patches: expected (C,H,W), got " + shape_str(x.shape()));
  }
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw std::invalid_argument("image_to_patches: patch size must divide H and W");
  }
  const std::size_t gh = H / patch, gw = W / patch;
  const std::size_t rows = gh * gw, cols = patch * patch * C;
  auto out = make_node({rows, cols});
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      const std::size_t r = py * gw + px;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t iy = 0; iy < patch; ++iy)
          for (std::size_t ix = 0; ix < patch; ++ix) {
            const std::size_t src = c * H * W + (py * patch + iy) * W + (px * patch + ix);
            out->value[r * cols + c * patch * patch + iy * patch + ix] = x.values()[src];
          }
    }
  wire(out, {x.node()});
  if (out->requires_grad) {
    auto xn = x.node();
    out->backward_fn = [xn, C, H, W, patch, gh, gw, cols](TensorNode& self) {
      xn->ensure_grad();
      for (std::size_t py = 0; py < gh; ++py)
        for (std::size_t px = 0; px < gw; ++px) {
          const std::size_t r = py * gw + px;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t iy = 0; iy < patch; ++iy)
              for (std::size_t ix = 0; ix < patch; ++ix) {
                const std::size_t src = c * H * W + (py * patch + iy) * W + (px * patch + ix);
                xn->grad[src] += self.grad[r * cols + c * patch * patch + iy * patch + ix];
              }
        }
    };
  }
  return Tensor(out);
}

Tensor unfold_conv(const Tensor& x, std::size_t kernel, std::size_t pad) {
  if (x.rank() != 3) {
    throw std::invalid_argument("unfold_conv: expected (C,H,W)");
  }
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t cols = kernel * kernel * C;
  auto out = make_node({H * W, cols});
  const long kp = static_cast<long>(pad);
  for (std::size_t oy = 0; oy < H; ++oy)
    for (std::size_t ox = 0; ox < W; ++ox) {
      const std::size_t r = oy * W + ox;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long iy = static_cast<long>(oy + ky) - kp;
            const long ix = static_cast<long>(ox + kx) - kp;
            double v = 0.0;
            if (iy >= 0 && iy < static_cast<long>(H) && ix >= 0 && ix < static_cast<long>(W)) {
              v = x.values()[c * H * W + iy * W + ix];
            }
            out->value[r * cols + c * kernel * kernel + ky * kernel + kx] = v;
          }
    }
  wire(out, {x.node()});
  if (out->requires_grad) {
    auto xn = x.node();
    out->backward_fn = [xn, C, H, W, kernel, kp, cols](TensorNode& self) {
      xn->ensure_grad();
      for (std::size_t oy = 0; oy < H; ++oy)
        for (std::size_t ox = 0; ox < W; ++ox) {
          const std::size_t r = oy * W + ox;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < kernel; ++ky)
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const long iy = static_cast<long>(oy + ky) - kp;
                const long ix = static_cast<long>(ox + kx) - kp;
                if (iy >= 0 && iy < static_cast<long>(H) && ix >= 0 && ix < static_cast<long>(W)) {
                  xn->grad[c * H * W + iy * W + ix] +=
                      self.grad[r * cols + c * kernel * kernel + ky * kernel + kx];
                }
              }
         }
    };
  }
  return Tensor(out);
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.rank() != 3 || x.shape()[1] % 2 != 0 || x.shape()[2] % 2 != 0) {
    throw std::invalid_argument("avg_pool2x2: expected (C,H,W) with even H, W");
  }
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t oh = H / 2, ow = W / 2;
  auto out = make_node({C, oh, ow});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* base = x.values().data() + c * H * W + 2 * oy * W + 2 * ox;
        out->value[c * oh * ow + oy * ow + ox] = 0.25 * (base[0] + base[1] + base[W] + base[W + 1]);
      }
  wire(out, {x.node()});
  if (out->requires_grad) {
    auto xn = x.node();
    out->backward_fn = [xn, C, H, W, oh, ow](TensorNode& self) {
      xn->ensure_grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double g = 0.25 * self.grad[c * oh * ow + oy * ow + ox];
            double* base = xn->grad.data() + c * H * W + 2 * oy * W + 2 * ox;
            base[0] += g;
            base[1] += g;
            base[W] += g;
            base[W + 1] += g;
          }
    };
  }
  return Tensor(out);
}

Tensor stop_gradient(const Tensor& a) { return a.detached(); }

}  // namespace fpr
