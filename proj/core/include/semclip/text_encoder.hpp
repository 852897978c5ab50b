#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semclip/checkpoint.hpp"
#include "semclip/tensor.hpp"

namespace semclip {

inline constexpr int kContextLength = 77;
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;

// Templates carry exactly one `{state}` slot; states map a class name to
// the noun phrases that fill it.
struct PromptLibrary {
  std::vector<std::string> templates;
  std::map<std::string, std::vector<std::string>> states;

  // Sanity-checks slots and non-empty state lists.
  void validate() const;

  static PromptLibrary default_library();
  // Single template with good/defect states only; the coarse-prompt
  // ablation counterpart of default_library().
  static PromptLibrary generic_library();
  static PromptLibrary from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;
};

/// All template x state combinations for one class, template-major order.
std::vector<std::string> compose_prompts(const PromptLibrary& lib, const std::string& class_name);

struct TokenSequence {
  std::vector<int> ids;  // length kContextLength: BOS, words..., EOS, PAD...

  int eos_pos() const;
};

/// Lowercases, splits on non-alphanumeric bytes, and maps each word to
/// 3 + (FNV-1a 64 hash mod (vocab_size - 3)). Overlong inputs are
/// truncated so that EOS still fits.
TokenSequence tokenize(const std::string& text, int vocab_size);

struct TextEncoderConfig {
  int vocab = 4096;
  int width = 64;     // C_t
  int depth = 2;
  int heads = 4;
  int joint_dim = 64; // D
};

struct TextLayerWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_out, b_out;
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_w_fc, mlp_b_fc, mlp_w_proj, mlp_b_proj;
};

struct TextEncoderWeights {
  TextEncoderConfig cfg;
  Tensor token_embed;  // vocab x C_t
  Tensor pos_embed;    // kContextLength x C_t
  std::vector<TextLayerWeights> layers;
  Tensor joint_proj;   // C_t x D

  static TextEncoderWeights seeded(const TextEncoderConfig& cfg, std::uint64_t seed);
  std::map<std::string, Tensor> to_map() const;
  static TextEncoderWeights from_map(const std::map<std::string, Tensor>& map,
                                     const TextEncoderConfig& cfg);
};

/// Causal pre-LN transformer over each sequence; the hidden state at the
/// EOS position is projected to the joint space and L2-normalized.
Tensor encode_text(const std::vector<TokenSequence>& tokens, const TextEncoderWeights& weights);

struct TextEmbeddingSet {
  std::vector<std::string> class_names;  // "good" first
  Tensor embeddings;                     // N x D, unit rows

  int good_index() const;
};

/// Per class: mean of the prompt-ensemble embeddings, re-normalized.
TextEmbeddingSet build_class_embeddings(const PromptLibrary& lib,
                                        const std::vector<std::string>& classes,
                                        const TextEncoderWeights& weights);

}  // namespace semclip
