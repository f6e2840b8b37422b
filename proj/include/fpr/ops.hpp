#pragma once

#include "fpr/tensor.hpp"

namespace fpr {

// Differentiable primitives. All operate on row-major fp64 tensors and
// record backward rules on the tape when any input requires grad.

enum class EwOp { add, mul };

Tensor matmul(const Tensor& a, const Tensor& b);  // (m x k)(k x n) -> (m x n)
Tensor transpose(const Tensor& a);                // rank 2

Tensor add(const Tensor& a, const Tensor& b);  // identical shapes
Tensor mul(const Tensor& a, const Tensor& b);  // identical shapes
Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // (n x m) + (m) broadcast over rows

// Softmax along the last axis; rank >= 2. Rows of the result are strictly
// positive and sum to 1 (row max subtracted before exponentiation).
Tensor softmax_rows(const Tensor& a);

// Row-wise x / sum(x). Rows whose sum underflows are replaced by the uniform
// row and receive zero gradient.
Tensor normalize_rows(const Tensor& a);

Tensor gelu(const Tensor& a);  // exact erf form

// Normalize the last axis to mean 0 / variance 1, then scale and shift.
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-8);

// -log softmax(logits)[label]; logits flattened to one row.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

Tensor sum(const Tensor& a);  // scalar

Tensor concat_rows(const Tensor& a, const Tensor& b);                    // stack along rows
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);  // [begin, end)
Tensor reshape(const Tensor& a, Shape shape);

// (C,H,W) image -> (H*W/P^2) x (P*P*C) patch rows; row r is patch r in
// row-major grid order, columns ordered channel-major then py, px.
Tensor image_to_patches(const Tensor& x, std::size_t patch);

// im2col for 3x3-style convolutions, stride 1, zero padding `pad`:
// (C,H,W) -> (H*W) x (K*K*C). Row r corresponds to output position r.
Tensor unfold_conv(const Tensor& x, std::size_t kernel, std::size_t pad);

Tensor avg_pool2x2(const Tensor& x);  // (C,H,W) -> (C,H/2,W/2)

// Forward identity by value, but the result is a constant: no gradient flows
// through it back to `a`.
Tensor stop_gradient(const Tensor& a);

}  // namespace fpr
