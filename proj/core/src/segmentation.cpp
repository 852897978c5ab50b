#include "semclip/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semclip/numerics.hpp"
#include "semclip/rng.hpp"

namespace semclip {

namespace {

std::vector<int> resolve_levels(int available, const std::vector<int>& requested) {
  if (requested.empty()) {
    std::vector<int> all(static_cast<std::size_t>(available));
    for (int j = 0; j < available; ++j) all[static_cast<std::size_t>(j)] = j;
    return all;
  }
  for (int j : requested) {
    if (j < 0 || j >= available) throw std::invalid_argument("level index out of range");
  }
  return requested;
}

}  // namespace

TransformationLayer TransformationLayer::seeded(int levels, int in_dim, int out_dim,
                                                std::uint64_t seed) {
  if (in_dim != out_dim) {
    throw std::invalid_argument("transformation layer identity init requires C == D");
  }
  TransformationLayer tl;
  for (int j = 0; j < levels; ++j) {
    Tensor w({in_dim, out_dim});
    Rng rng(derive_seed(seed, "seg.transform." + std::to_string(j + 1)));
    for (int r = 0; r < in_dim; ++r) {
      float* row = w.row(r);
      for (int c = 0; c < out_dim; ++c) {
        row[c] = static_cast<float>(rng.normal(0.0, 0.01)) + (r == c ? 1.0f : 0.0f);
      }
    }
    tl.w.push_back(std::move(w));
    tl.b.emplace_back(Tensor({out_dim}));
  }
  return tl;
}

std::vector<Tensor> apply_transformation(const EncodedImage& enc, const TransformationLayer& tl,
                                         const std::vector<int>& levels_used) {
  const int m = static_cast<int>(enc.levels.size());
  if (tl.levels() != m) throw std::invalid_argument("transformation layer level count mismatch");
  std::vector<Tensor> out;
  for (int j : resolve_levels(m, levels_used)) {
    const Tensor& F = enc.levels[static_cast<std::size_t>(j)].F;
    Tensor tokens = F.rows(1, F.extent(0));  // drop CLS
    if (tokens.extent(1) != tl.w[static_cast<std::size_t>(j)].extent(0)) {
      throw std::invalid_argument("transformation input width mismatch");
    }
    out.push_back(linear(tokens, tl.w[static_cast<std::size_t>(j)],
                         tl.b[static_cast<std::size_t>(j)]));
  }
  return out;
}

DefectMaps defect_map_F(const std::vector<Tensor>& f_primes, const TextEmbeddingSet& text,
                        float tau) {
  if (tau <= 0.0f) throw std::invalid_argument("tau must be positive");
  const int N = text.embeddings.extent(0);
  const int D = text.embeddings.extent(1);

  DefectMaps maps;
  for (const Tensor& fp : f_primes) {
    if (fp.rank() != 2 || fp.extent(1) != D) {
      throw std::invalid_argument("transformed embedding width must match joint dimension");
    }
    const int T = fp.extent(0);
    Tensor scores({T, N});
    for (int t = 0; t < T; ++t) {
      float* srow = scores.row(t);
      for (int c = 0; c < N; ++c) {
        srow[c] = cosine_similarity(fp.row(t), text.embeddings.row(c), D);
      }
    }
    Tensor scaled = scores;
    for (float& s : scaled.storage()) s /= tau;
    Tensor prob = softmax(scaled, 1);
    maps.per_level_scores.push_back(std::move(scores));
    if (maps.fused.empty()) {
      maps.fused = prob;
    } else {
      add_inplace(maps.fused, prob);
    }
    maps.per_level.push_back(std::move(prob));
  }
  return maps;
}

DefectMaps defect_map_V(const EncodedImage& enc, const TextEmbeddingSet& text, float tau,
                        const std::vector<int>& levels_used) {
  if (tau <= 0.0f) throw std::invalid_argument("tau must be positive");
  const int N = text.embeddings.extent(0);
  const int D = text.embeddings.extent(1);
  Tensor unit_text = l2_normalize(text.embeddings, 1);

  DefectMaps maps;
  for (int j : resolve_levels(static_cast<int>(enc.levels.size()), levels_used)) {
    const Tensor& V = enc.levels[static_cast<std::size_t>(j)].V;
    if (V.extent(1) != D) {
      throw std::invalid_argument(
          "V-path width must equal the joint dimension (no projection supported)");
    }
    Tensor tokens = l2_normalize(V.rows(1, V.extent(0)), 1);  // drop CLS, unit rows
    const int T = tokens.extent(0);

    // The multiplied feature summed over channels collapses to a dot
    // product, and removing its class mean centers each row; equivalent
    // to materializing M and R from the elementwise products.
    Tensor scores({T, N});
    for (int t = 0; t < T; ++t) {
      const float* tok = tokens.row(t);
      float* srow = scores.row(t);
      float mean = 0.0f;
      for (int c = 0; c < N; ++c) {
        const float* cls = unit_text.row(c);
        float dot = 0.0f;
        for (int d = 0; d < D; ++d) dot += tok[d] * cls[d];
        srow[c] = dot;
        mean += dot;
      }
      mean /= static_cast<float>(N);
      for (int c = 0; c < N; ++c) srow[c] -= mean;
    }
    Tensor scaled = scores;
    for (float& s : scaled.storage()) s /= tau;
    Tensor prob = softmax(scaled, 1);
    maps.per_level_scores.push_back(std::move(scores));
    if (maps.fused.empty()) {
      maps.fused = prob;
    } else {
      add_inplace(maps.fused, prob);
    }
    maps.per_level.push_back(std::move(prob));
  }
  return maps;
}

FusedMap fuse_maps(const Tensor& a_f, const Tensor& a_v, int good_index, int levels) {
  if (!a_f.same_shape(a_v) || a_f.rank() != 2) {
    throw std::invalid_argument("fuse_maps shape mismatch");
  }
  const int T = a_f.extent(0);
  const int N = a_f.extent(1);
  if (good_index < 0 || good_index >= N) throw std::invalid_argument("good_index out of range");
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");

  FusedMap out;
  out.class_map = a_f;
  add_inplace(out.class_map, a_v);
  out.anomaly_grid = Tensor({T});
  const float inv = 1.0f / (2.0f * static_cast<float>(levels));
  for (int t = 0; t < T; ++t) {
    const float* row = out.class_map.row(t);
    float mass = 0.0f;
    for (int c = 0; c < N; ++c) {
      if (c != good_index) mass += row[c];
    }
    out.anomaly_grid.at(t) = std::clamp(mass * inv, 0.0f, 1.0f);
  }
  return out;
}

Tensor upsample_to_pixels(const Tensor& grid, int image_size) {
  if (grid.rank() != 1) throw std::invalid_argument("upsample expects a rank-1 grid");
  const int T = grid.extent(0);
  const int G = static_cast<int>(std::lround(std::sqrt(static_cast<double>(T))));
  if (G * G != T) throw std::invalid_argument("token count is not a perfect square");
  if (image_size < 1) throw std::invalid_argument("image_size must be >= 1");

  Tensor out({image_size, image_size});
  const double scale = static_cast<double>(G) / image_size;
  for (int y = 0; y < image_size; ++y) {
    const double sy = (y + 0.5) * scale - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, G - 1);
    const int y1 = std::min(y0 + 1, G - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < image_size; ++x) {
      const double sx = (x + 0.5) * scale - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, G - 1);
      const int x1 = std::min(x0 + 1, G - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      const double v00 = grid.at(y0 * G + x0);
      const double v01 = grid.at(y0 * G + x1);
      const double v10 = grid.at(y1 * G + x0);
      const double v11 = grid.at(y1 * G + x1);
      const double top = v00 + (v01 - v00) * fx;
      const double bot = v10 + (v11 - v10) * fx;
      out.at(y, x) = static_cast<float>(top + (bot - top) * fy);
    }
  }
  return out;
}

}  // namespace semclip
