#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semclip/numerics.hpp"
#include "semclip/tensor.hpp"

namespace semclip {

struct VitConfig {
  int image_size = 64;
  int patch_size = 8;
  int width = 64;        // C
  int heads = 4;
  int blocks = 4;        // m encoding blocks
  int layers_per_block = 3;  // n dual-path blocks per encoding block

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }       // T
  int seq_len() const { return tokens() + 1; }         // T + 1 with CLS
  int depth() const { return blocks * layers_per_block; }
  void validate() const;
};

struct DualPathLayerWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_out, b_out;      // vanilla QKV path
  Tensor vvv_w_v, vvv_b_v, vvv_w_out, vvv_b_out;          // V-V branch (surgery copies)
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_w_fc, mlp_b_fc, mlp_w_proj, mlp_b_proj;
};

struct VitWeights {
  VitConfig cfg;
  Tensor patch_w;    // (patch_size^2) x C
  Tensor patch_b;    // C
  Tensor cls_token;  // 1 x C
  Tensor pos_embed;  // (T+1) x C
  std::vector<DualPathLayerWeights> layers;  // depth() entries, block-major

  /// Seeded init with the VVV branch zeroed; run weight surgery before
  /// calling encode_image.
  static VitWeights seeded(const VitConfig& cfg, std::uint64_t seed);
  /// Seeded init with surgery already applied (tests, standalone use).
  static VitWeights seeded_with_surgery(const VitConfig& cfg, std::uint64_t seed);

  std::map<std::string, Tensor> to_map() const;
  static VitWeights from_map(const std::map<std::string, Tensor>& map, const VitConfig& cfg);
};

struct DualPathOutput {
  Tensor f;  // full pre-LN transformer layer with residuals
  Tensor v;  // V-V attention branch; no MLP, no residual
};

struct LevelEmbeddings {
  Tensor F;  // (T+1) x C vanilla stream, CLS at row 0
  Tensor V;  // (T+1) x C accumulated V-V stream
};

struct EncodedImage {
  std::vector<LevelEmbeddings> levels;  // m entries
  std::vector<Tensor> cls;              // m copies of levels[j].F row 0
};

/// Non-overlapping patch flattening, linear projection, CLS prepend,
/// learned positional embeddings.
Tensor patch_embed(const Tensor& image, const VitWeights& weights);

DualPathOutput dual_path_block(const Tensor& x, const DualPathLayerWeights& lw,
                               const AttentionConfig& cfg);

/// Runs all m*n dual-path blocks; records the vanilla stream F_j after
/// each encoding block and V_j as the sum of that block's n branch
/// outputs.
EncodedImage encode_image(const Tensor& image, const VitWeights& weights);

}  // namespace semclip
