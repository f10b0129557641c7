#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csmae/tensor.hpp"

// Differentiable kernels. Each op computes its forward value eagerly and, when a
// Tape is active and an input requires grad, records its backward rule.
namespace csmae::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// x[n×in]·w[in×out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[n×d] + row[d], broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, Real factor);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-5));

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean along one axis, keeping it with extent 1.
Tensor mean(const Tensor& x, std::size_t axis);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// out[i] = x[indices[i]]; duplicate indices accumulate in backward.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Multi-head scaled dot-product self-attention over packed qkv[n×3d] -> [n×d].
Tensor attention(const Tensor& qkv, std::size_t heads);

// Mean cross-entropy of logits[b×c] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Same values, cut off from the tape: no gradient flows through the result.
Tensor detach(const Tensor& x);

}  // namespace csmae::ops
