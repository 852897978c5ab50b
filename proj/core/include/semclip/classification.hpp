#pragma once

#include <vector>

#include "semclip/segmentation.hpp"
#include "semclip/text_encoder.hpp"
#include "semclip/vit.hpp"

namespace semclip {

struct ClassifierHead {
  Tensor w;  // (levels * C) x N
  Tensor b;  // N
};

struct FusionConfig {
  float alpha = 0.8f;  // weight of the head probability in the convex fusion
};

enum class PsSource { patches, cls };

struct SimilarityOptions {
  float tau = kDefaultTau;
  PsSource source = PsSource::patches;
  std::vector<int> levels_used;  // empty = all
};

/// Per level and class, the best cosine score (max over patch tokens, or
/// the transformed CLS row), then the max over levels, softmaxed at
/// temperature tau.
Tensor similarity_probability(const EncodedImage& enc, const TransformationLayer& tl,
                              const TextEmbeddingSet& text, const SimilarityOptions& opts = {});

/// Concatenated CLS vectors through the affine head, softmaxed.
Tensor head_probability(const std::vector<Tensor>& cls_tokens, const ClassifierHead& head);

struct ClassProbabilities {
  Tensor p_s;
  Tensor p_c;
  Tensor p;       // (1 - alpha) * p_s + alpha * p_c
  int predicted;  // argmax of p, lowest index on ties
};

ClassProbabilities fuse_probability(const Tensor& p_s, const Tensor& p_c,
                                    const FusionConfig& cfg);

}  // namespace semclip
