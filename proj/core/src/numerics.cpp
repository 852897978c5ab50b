#include "semclip/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "semclip/parallel.hpp"

namespace semclip {

AttentionConfig AttentionConfig::for_width(int width, int heads) {
  if (heads < 1 || width < 1 || width % heads != 0) {
    throw std::invalid_argument("model width must be divisible by head count");
  }
  return AttentionConfig{width / heads, heads};
}

namespace {

// Decomposes the index space around `axis` into (outer, len, inner) so a
// slice along axis starts at (o * len * inner + i) with stride inner.
struct AxisSpan {
  std::int64_t outer = 1;
  std::int64_t len = 1;
  std::int64_t inner = 1;
};

AxisSpan axis_span(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("axis out of range");
  AxisSpan s;
  const auto& shape = x.shape();
  for (int a = 0; a < axis; ++a) s.outer *= shape[static_cast<std::size_t>(a)];
  s.len = shape[static_cast<std::size_t>(axis)];
  for (int a = axis + 1; a < x.rank(); ++a) s.inner *= shape[static_cast<std::size_t>(a)];
  return s;
}

void softmax_span(const float* in, float* out, std::int64_t len, std::int64_t stride) {
  float mx = in[0];
  for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, in[i * stride]);
  float sum = 0.0f;
  for (std::int64_t i = 0; i < len; ++i) {
    float e = std::exp(in[i * stride] - mx);
    out[i * stride] = e;
    sum += e;
  }
  float inv = 1.0f / sum;
  for (std::int64_t i = 0; i < len; ++i) out[i * stride] *= inv;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  AxisSpan s = axis_span(x, axis);
  Tensor out(x.shape());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      std::int64_t base = o * s.len * s.inner + i;
      softmax_span(x.data() + base, out.data() + base, s.len, s.inner);
    }
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, int axis, float eps) {
  if (eps <= 0.0f) throw std::invalid_argument("eps must be positive");
  AxisSpan s = axis_span(x, axis);
  Tensor out(x.shape());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      std::int64_t base = o * s.len * s.inner + i;
      const float* in = x.data() + base;
      float* dst = out.data() + base;
      double sq = 0.0;
      for (std::int64_t k = 0; k < s.len; ++k) {
        double v = in[k * s.inner];
        sq += v * v;
      }
      float norm = static_cast<float>(std::sqrt(sq));
      float scale = norm < eps ? 1.0f : 1.0f / norm;
      for (std::int64_t k = 0; k < s.len; ++k) dst[k * s.inner] = in[k * s.inner] * scale;
    }
  }
  return out;
}

float cosine_similarity(const float* a, const float* b, int n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0f;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return static_cast<float>(std::clamp(c, -1.0, 1.0));
}

float cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity expects rank-1 tensors of equal length");
  }
  return cosine_similarity(a.data(), b.data(), static_cast<int>(a.size()));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionConfig& cfg, bool causal) {
  if (q.rank() != 2 || !q.same_shape(k) || !q.same_shape(v)) {
    throw std::invalid_argument("attention expects matching T x C inputs");
  }
  const int T = q.extent(0);
  const int C = q.extent(1);
  if (cfg.heads < 1 || cfg.d_k < 1 || cfg.heads * cfg.d_k != C) {
    throw std::invalid_argument("attention width must equal heads * d_k");
  }
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_k));

  Tensor out({T, C});
  std::vector<float> scores(static_cast<std::size_t>(T));
  for (int h = 0; h < cfg.heads; ++h) {
    const int off = h * cfg.d_k;
    for (int i = 0; i < T; ++i) {
      const float* qi = q.row(i) + off;
      const int lim = causal ? i + 1 : T;
      for (int j = 0; j < lim; ++j) {
        const float* kj = k.row(j) + off;
        float dot = 0.0f;
        for (int d = 0; d < cfg.d_k; ++d) dot += qi[d] * kj[d];
        scores[static_cast<std::size_t>(j)] = dot * scale;
      }
      softmax_span(scores.data(), scores.data(), lim, 1);
      float* oi = out.row(i) + off;
      for (int j = 0; j < lim; ++j) {
        const float w = scores[static_cast<std::size_t>(j)];
        const float* vj = v.row(j) + off;
        for (int d = 0; d < cfg.d_k; ++d) oi[d] += w * vj[d];
      }
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (eps <= 0.0f) throw std::invalid_argument("eps must be positive");
  const int C = x.extent(x.rank() - 1);
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.extent(0) != C || beta.extent(0) != C) {
    throw std::invalid_argument("layer_norm gamma/beta must match the last axis");
  }
  Tensor out(x.shape());
  const std::int64_t rows = x.size() / C;
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = x.data() + r * C;
    float* dst = out.data() + r * C;
    float mean = 0.0f;
    for (int c = 0; c < C; ++c) mean += in[c];
    mean /= static_cast<float>(C);
    float var = 0.0f;
    for (int c = 0; c < C; ++c) {
      float d = in[c] - mean;
      var += d * d;
    }
    var /= static_cast<float>(C);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) {
      dst[c] = (in[c] - mean) * inv * gamma.data()[c] + beta.data()[c];
    }
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const float* in = x.data();
  float* dst = out.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const float v = in[i];
    const float u = 0.7978845608028654f * (v + 0.044715f * v * v * v);
    dst[i] = 0.5f * v * (1.0f + std::tanh(u));
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul shape mismatch " + a.shape_string() + " * " +
                                b.shape_string());
  }
  const int M = a.extent(0), K = a.extent(1), N = b.extent(1);
  Tensor out({M, N});
  auto run_row = [&](int i) {
    const float* ai = a.row(i);
    float* oi = out.row(i);
    for (int k = 0; k < K; ++k) {
      const float aik = ai[k];
      const float* bk = b.row(k);
      for (int j = 0; j < N; ++j) oi[j] += aik * bk[j];
    }
  };
  // Row-partitioned; each output row is written by exactly one iteration,
  // so the result is identical for any thread count.
  if (static_cast<std::int64_t>(M) * K * N >= (1 << 18)) {
    parallel_for(M, run_row);
  } else {
    for (int i = 0; i < M; ++i) run_row(i);
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul(x, w);
  const int N = out.extent(1);
  if (b.rank() != 1 || b.extent(0) != N) {
    throw std::invalid_argument("linear bias length mismatch");
  }
  for (int i = 0; i < out.extent(0); ++i) {
    float* oi = out.row(i);
    for (int j = 0; j < N; ++j) oi[j] += b.data()[j];
  }
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_inplace shape mismatch");
  float* pa = a.data();
  const float* pb = b.data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) pa[i] += pb[i];
}

}  // namespace semclip
