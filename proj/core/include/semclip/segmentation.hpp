#pragma once

#include <cstdint>
#include <vector>

#include "semclip/text_encoder.hpp"
#include "semclip/vit.hpp"

namespace semclip {

inline constexpr float kDefaultTau = 0.07f;

// Per-level trainable linear maps into the joint image-text space.
struct TransformationLayer {
  std::vector<Tensor> w;  // m tensors, C x D
  std::vector<Tensor> b;  // m tensors, D

  int levels() const { return static_cast<int>(w.size()); }

  /// Identity plus N(0, 0.01^2) noise, zero bias. Requires C == D.
  static TransformationLayer seeded(int levels, int in_dim, int out_dim, std::uint64_t seed);
};

/// F_j[1:] * W_j + b_j per level; the CLS row is dropped. `levels_used`
/// empty means all levels; otherwise the listed 0-based levels, in order.
std::vector<Tensor> apply_transformation(const EncodedImage& enc, const TransformationLayer& tl,
                                         const std::vector<int>& levels_used = {});

struct DefectMaps {
  std::vector<Tensor> per_level;         // T x N probability rows
  std::vector<Tensor> per_level_scores;  // T x N raw scores before temperature
  Tensor fused;                          // T x N, sum over levels, entries in [0, m]
};

/// Cosine similarity of each transformed token against each class
/// embedding, softmax over classes at temperature tau, summed over levels.
DefectMaps defect_map_F(const std::vector<Tensor>& f_primes, const TextEmbeddingSet& text,
                        float tau = kDefaultTau);

/// V-path map: per token, the normalized embedding is multiplied
/// elementwise with each class embedding, the class-mean (redundant
/// feature) is removed, and channel sums are softmaxed over classes.
/// Channel width must equal the joint dimension. `levels_used` empty
/// means all levels.
DefectMaps defect_map_V(const EncodedImage& enc, const TextEmbeddingSet& text,
                        float tau = kDefaultTau, const std::vector<int>& levels_used = {});

struct FusedMap {
  Tensor class_map;     // T x N, A_F + A_V
  Tensor anomaly_grid;  // T, non-good mass normalized by 2m, in [0, 1]
};

FusedMap fuse_maps(const Tensor& a_f, const Tensor& a_v, int good_index, int levels);

/// Bilinear interpolation of the sqrt(T) x sqrt(T) grid to image_size^2.
Tensor upsample_to_pixels(const Tensor& grid, int image_size);

}  // namespace semclip
