#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "semclip/classification.hpp"
#include "semclip/segmentation.hpp"
#include "semclip/synth.hpp"
#include "semclip/text_encoder.hpp"
#include "semclip/vit.hpp"

namespace semclip {

struct TrainConfig {
  float lr = 1e-3f;
  int epochs = 100;
  std::uint64_t seed = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float seg_loss_weight = 1.0f;

  void validate() const;
};

struct CachedImage {
  std::vector<Tensor> level_tokens_F;  // m tensors, T x C (CLS dropped)
  std::vector<Tensor> level_tokens_V;  // m tensors, T x C (CLS dropped)
  std::vector<Tensor> cls;             // m tensors, C
  int label = 0;
  std::vector<int> token_labels;       // T entries
};

struct FeatureCache {
  std::vector<CachedImage> images;
  int n_classes = 0;
  int good_index = 0;
};

/// One frozen forward pass per support image. Token labels come from a
/// patch-majority vote over the mask: a patch with at least half of its
/// pixels flagged defect takes the image label, otherwise good.
FeatureCache build_cache(const Episode& episode, const VitWeights& weights);

// Per-tensor Adam moments.
struct AdamState {
  Tensor m;
  Tensor v;
  long step = 0;
};

/// Standard bias-corrected Adam update on a single tensor.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const TrainConfig& cfg);

/// Mean token-level cross-entropy of the per-level F-path class maps
/// against the cached token labels, summed over the selected levels and
/// scaled by seg_loss_weight. Arithmetic runs in double; gradients (same
/// shapes as tl.w / tl.b, for the selected levels in order) are written
/// when the pointers are non-null.
double transformation_loss(const FeatureCache& cache, const TextEmbeddingSet& text,
                           const TransformationLayer& tl, float tau, float seg_loss_weight,
                           const std::vector<int>& levels_used,
                           std::vector<Tensor>* grad_w = nullptr,
                           std::vector<Tensor>* grad_b = nullptr);

/// Mean image-level cross-entropy of the head probabilities against the
/// cached image labels.
double head_loss(const FeatureCache& cache, const ClassifierHead& head,
                 const std::vector<int>& levels_used, Tensor* grad_w = nullptr,
                 Tensor* grad_b = nullptr);

/// Full-batch Adam on the transformation layer; backbone and text
/// embeddings stay untouched. Returns the per-epoch loss curve.
std::vector<double> train_transformation(const FeatureCache& cache, const TextEmbeddingSet& text,
                                         TransformationLayer& tl, const TrainConfig& cfg,
                                         float tau, const std::vector<int>& levels_used = {});

std::vector<double> train_head(const FeatureCache& cache, ClassifierHead& head,
                               const TrainConfig& cfg,
                               const std::vector<int>& levels_used = {});

}  // namespace semclip
