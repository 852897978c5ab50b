#pragma once

#include "semclip/tensor.hpp"

namespace semclip {

struct AttentionConfig {
  int d_k = 16;   // per-head key dimension; the 1/sqrt(d_k) scale
  int heads = 4;

  static AttentionConfig for_width(int width, int heads);
};

/// Numerically stabilized softmax along `axis` (max subtraction).
Tensor softmax(const Tensor& x, int axis);

/// L2-normalizes each slice along `axis`. Slices with norm < eps are
/// returned unchanged, so the zero vector stays zero and the operation
/// is idempotent.
Tensor l2_normalize(const Tensor& x, int axis, float eps = 1e-8f);

/// Cosine similarity of two rank-1 tensors, clamped to [-1, 1].
float cosine_similarity(const Tensor& a, const Tensor& b);
float cosine_similarity(const float* a, const float* b, int n);

/// Multi-head scaled dot-product attention on T x C inputs. Heads are
/// slices of the channel axis; per head softmax(q k^T / sqrt(d_k)) v,
/// concatenated back to T x C. No projections are applied here.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionConfig& cfg, bool causal = false);

/// Per-row layer norm over the last axis, then affine by gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

/// Elementwise tanh-approximation GELU.
Tensor gelu(const Tensor& x);

/// Rank-2 matrix product [M x K] * [K x N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = x * w + b for rank-2 x, broadcasting b over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

void add_inplace(Tensor& a, const Tensor& b);

}  // namespace semclip
