#include "semclip/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "semclip/errors.hpp"
#include "semclip/numerics.hpp"
#include "semclip/rng.hpp"

namespace semclip {

namespace {

constexpr const char* kSlot = "{state}";

Tensor seeded_normal(std::vector<int> shape, std::uint64_t seed, const std::string& name,
                     double stddev) {
  Tensor t(std::move(shape));
  Rng rng(derive_seed(seed, name));
  float* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) {
    p[i] = static_cast<float>(rng.normal(0.0, stddev));
  }
  return t;
}

const Tensor& map_get(const std::map<std::string, Tensor>& map, const std::string& name) {
  auto it = map.find(name);
  if (it == map.end()) throw DataError("missing tensor " + name);
  return it->second;
}

}  // namespace

void PromptLibrary::validate() const {
  if (templates.empty()) throw ConfigError("prompt library has no templates");
  for (const auto& t : templates) {
    auto first = t.find(kSlot);
    if (first == std::string::npos || t.find(kSlot, first + 1) != std::string::npos) {
      throw ConfigError("template must contain exactly one {state} slot: " + t);
    }
  }
  for (const auto& [cls, list] : states) {
    if (list.empty()) throw ConfigError("class has no state strings: " + cls);
  }
}

PromptLibrary PromptLibrary::default_library() {
  PromptLibrary lib;
  lib.templates = {
      "a photo of the {state}",
      "a blurry photo of the {state}",
      "a dark photo of a {state}",
      "a bright electron microscope image of the {state}",
      "a close-up grayscale image of the {state}",
  };
  lib.states = {
      {"good", {"flawless wafer surface", "clean patterned surface without defects"}},
      {"bridge",
       {"image with a bridge defect connecting two adjacent lines",
        "image with a short conductive bridge between wires"}},
      {"residue",
       {"image with copper residue left on the surface",
        "image with irregular residue patches after polishing"}},
      {"hole",
       {"image with a hole etched into the film",
        "image with a small dark round cavity"}},
      {"infilm",
       {"image with a faint defect embedded within the film",
        "image with a low-contrast particle buried under the film"}},
      {"particle",
       {"image with a bright foreign particle on the surface",
        "image with a small round particle contaminant"}},
      {"scratch",
       {"image with a linear scratch",
        "image with fish scale-shaped scratches"}},
  };
  return lib;
}

PromptLibrary PromptLibrary::generic_library() {
  PromptLibrary lib;
  lib.templates = {"a photo of a {state}"};
  for (const auto& [cls, list] : default_library().states) {
    (void)list;
    lib.states[cls] = {cls == "good" ? "good surface" : "defect"};
  }
  return lib;
}

PromptLibrary PromptLibrary::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open prompt library: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid prompt library JSON: " + std::string(e.what()));
  }
  PromptLibrary lib;
  try {
    lib.templates = j.at("templates").get<std::vector<std::string>>();
    for (const auto& [cls, list] : j.at("states").items()) {
      lib.states[cls] = list.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid prompt library schema: " + std::string(e.what()));
  }
  lib.validate();
  return lib;
}

void PromptLibrary::to_json_file(const std::string& path) const {
  nlohmann::ordered_json j;
  j["templates"] = templates;
  j["states"] = nlohmann::ordered_json::object();
  for (const auto& [cls, list] : states) j["states"][cls] = list;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write prompt library: " + path);
  f << j.dump(2) << "\n";
}

std::vector<std::string> compose_prompts(const PromptLibrary& lib, const std::string& class_name) {
  lib.validate();
  auto it = lib.states.find(class_name);
  if (it == lib.states.end()) throw DataError("unknown class in prompt library: " + class_name);
  std::vector<std::string> out;
  out.reserve(lib.templates.size() * it->second.size());
  for (const auto& tpl : lib.templates) {
    const auto pos = tpl.find(kSlot);
    for (const auto& state : it->second) {
      std::string s = tpl;
      s.replace(pos, std::string(kSlot).size(), state);
      out.push_back(std::move(s));
    }
  }
  return out;
}

int TokenSequence::eos_pos() const {
  for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
    if (ids[static_cast<std::size_t>(i)] == kEosToken) return i;
  }
  throw DataError("token sequence has no EOS");
}

TokenSequence tokenize(const std::string& text, int vocab_size) {
  if (vocab_size < 256) throw std::invalid_argument("vocab_size must be >= 256");
  TokenSequence seq;
  seq.ids.assign(kContextLength, kPadToken);
  seq.ids[0] = kBosToken;

  int pos = 1;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (pos < kContextLength - 1) {
      const std::uint64_t h = fnv1a64(word);
      seq.ids[static_cast<std::size_t>(pos++)] =
          3 + static_cast<int>(h % static_cast<std::uint64_t>(vocab_size - 3));
    }
    word.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  seq.ids[static_cast<std::size_t>(pos)] = kEosToken;
  return seq;
}

TextEncoderWeights TextEncoderWeights::seeded(const TextEncoderConfig& cfg, std::uint64_t seed) {
  TextEncoderWeights w;
  w.cfg = cfg;
  const int C = cfg.width;
  const double attn_sd = 1.0 / std::sqrt(static_cast<double>(C));
  w.token_embed = seeded_normal({cfg.vocab, C}, seed, "text.embed", 0.02);
  w.pos_embed = seeded_normal({kContextLength, C}, seed, "text.pos", 0.02);
  for (int l = 1; l <= cfg.depth; ++l) {
    const std::string p = "text.layer" + std::to_string(l) + ".";
    TextLayerWeights lw;
    lw.ln1_gamma = Tensor::full({C}, 1.0f);
    lw.ln1_beta = Tensor({C});
    lw.w_q = seeded_normal({C, C}, seed, p + "attn.w_q", attn_sd);
    lw.b_q = Tensor({C});
    lw.w_k = seeded_normal({C, C}, seed, p + "attn.w_k", attn_sd);
    lw.b_k = Tensor({C});
    lw.w_v = seeded_normal({C, C}, seed, p + "attn.w_v", attn_sd);
    lw.b_v = Tensor({C});
    lw.w_out = seeded_normal({C, C}, seed, p + "attn.w_out", attn_sd);
    lw.b_out = Tensor({C});
    lw.ln2_gamma = Tensor::full({C}, 1.0f);
    lw.ln2_beta = Tensor({C});
    lw.mlp_w_fc = seeded_normal({C, 4 * C}, seed, p + "mlp.w_fc", attn_sd);
    lw.mlp_b_fc = Tensor({4 * C});
    lw.mlp_w_proj = seeded_normal({4 * C, C}, seed, p + "mlp.w_proj",
                                  1.0 / std::sqrt(static_cast<double>(4 * C)));
    lw.mlp_b_proj = Tensor({C});
    w.layers.push_back(std::move(lw));
  }
  w.joint_proj = seeded_normal({C, cfg.joint_dim}, seed, "text.proj", attn_sd);
  return w;
}

std::map<std::string, Tensor> TextEncoderWeights::to_map() const {
  std::map<std::string, Tensor> map;
  map["text.embed"] = token_embed;
  map["text.pos"] = pos_embed;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "text.layer" + std::to_string(l + 1) + ".";
    const TextLayerWeights& lw = layers[l];
    map[p + "ln1.gamma"] = lw.ln1_gamma;
    map[p + "ln1.beta"] = lw.ln1_beta;
    map[p + "attn.w_q"] = lw.w_q;
    map[p + "attn.b_q"] = lw.b_q;
    map[p + "attn.w_k"] = lw.w_k;
    map[p + "attn.b_k"] = lw.b_k;
    map[p + "attn.w_v"] = lw.w_v;
    map[p + "attn.b_v"] = lw.b_v;
    map[p + "attn.w_out"] = lw.w_out;
    map[p + "attn.b_out"] = lw.b_out;
    map[p + "ln2.gamma"] = lw.ln2_gamma;
    map[p + "ln2.beta"] = lw.ln2_beta;
    map[p + "mlp.w_fc"] = lw.mlp_w_fc;
    map[p + "mlp.b_fc"] = lw.mlp_b_fc;
    map[p + "mlp.w_proj"] = lw.mlp_w_proj;
    map[p + "mlp.b_proj"] = lw.mlp_b_proj;
  }
  map["text.proj"] = joint_proj;
  return map;
}

TextEncoderWeights TextEncoderWeights::from_map(const std::map<std::string, Tensor>& map,
                                                const TextEncoderConfig& cfg) {
  TextEncoderWeights w;
  w.cfg = cfg;
  w.token_embed = map_get(map, "text.embed");
  w.pos_embed = map_get(map, "text.pos");
  for (int l = 1; l <= cfg.depth; ++l) {
    const std::string p = "text.layer" + std::to_string(l) + ".";
    TextLayerWeights lw;
    lw.ln1_gamma = map_get(map, p + "ln1.gamma");
    lw.ln1_beta = map_get(map, p + "ln1.beta");
    lw.w_q = map_get(map, p + "attn.w_q");
    lw.b_q = map_get(map, p + "attn.b_q");
    lw.w_k = map_get(map, p + "attn.w_k");
    lw.b_k = map_get(map, p + "attn.b_k");
    lw.w_v = map_get(map, p + "attn.w_v");
    lw.b_v = map_get(map, p + "attn.b_v");
    lw.w_out = map_get(map, p + "attn.w_out");
    lw.b_out = map_get(map, p + "attn.b_out");
    lw.ln2_gamma = map_get(map, p + "ln2.gamma");
    lw.ln2_beta = map_get(map, p + "ln2.beta");
    lw.mlp_w_fc = map_get(map, p + "mlp.w_fc");
    lw.mlp_b_fc = map_get(map, p + "mlp.b_fc");
    lw.mlp_w_proj = map_get(map, p + "mlp.w_proj");
    lw.mlp_b_proj = map_get(map, p + "mlp.b_proj");
    w.layers.push_back(std::move(lw));
  }
  w.joint_proj = map_get(map, "text.proj");
  return w;
}

Tensor encode_text(const std::vector<TokenSequence>& tokens, const TextEncoderWeights& weights) {
  const TextEncoderConfig& cfg = weights.cfg;
  const int C = cfg.width;
  const AttentionConfig attn_cfg = AttentionConfig::for_width(C, cfg.heads);
  Tensor out({static_cast<int>(tokens.size()), cfg.joint_dim});

  for (std::size_t s = 0; s < tokens.size(); ++s) {
    const TokenSequence& seq = tokens[s];
    const int eos = seq.eos_pos();
    const int len = eos + 1;  // causal mask: positions past EOS cannot affect it

    Tensor h({len, C});
    for (int i = 0; i < len; ++i) {
      const int id = seq.ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg.vocab) {
        throw DataError("token id out of vocab: " + std::to_string(id));
      }
      const float* emb = weights.token_embed.row(id);
      const float* pos = weights.pos_embed.row(i);
      float* dst = h.row(i);
      for (int c = 0; c < C; ++c) dst[c] = emb[c] + pos[c];
    }

    for (const TextLayerWeights& lw : weights.layers) {
      Tensor u = layer_norm(h, lw.ln1_gamma, lw.ln1_beta);
      Tensor q = linear(u, lw.w_q, lw.b_q);
      Tensor k = linear(u, lw.w_k, lw.b_k);
      Tensor v = linear(u, lw.w_v, lw.b_v);
      Tensor a = attention(q, k, v, attn_cfg, /*causal=*/true);
      add_inplace(h, linear(a, lw.w_out, lw.b_out));
      Tensor u2 = layer_norm(h, lw.ln2_gamma, lw.ln2_beta);
      Tensor mlp = linear(gelu(linear(u2, lw.mlp_w_fc, lw.mlp_b_fc)), lw.mlp_w_proj, lw.mlp_b_proj);
      add_inplace(h, mlp);
    }

    Tensor eos_state = h.rows(eos, eos + 1);
    Tensor projected = matmul(eos_state, weights.joint_proj);
    Tensor unit = l2_normalize(projected, 1);
    std::copy(unit.data(), unit.data() + cfg.joint_dim, out.row(static_cast<int>(s)));
  }
  return out;
}

int TextEmbeddingSet::good_index() const {
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == "good") return static_cast<int>(i);
  }
  throw DataError("embedding set has no good class");
}

TextEmbeddingSet build_class_embeddings(const PromptLibrary& lib,
                                        const std::vector<std::string>& classes,
                                        const TextEncoderWeights& weights) {
  if (classes.size() < 2) throw ConfigError("need at least two classes");
  if (std::find(classes.begin(), classes.end(), "good") == classes.end()) {
    throw ConfigError("class list must include good");
  }
  const int D = weights.cfg.joint_dim;
  TextEmbeddingSet set;
  set.class_names = classes;
  set.embeddings = Tensor({static_cast<int>(classes.size()), D});

  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto prompts = compose_prompts(lib, classes[c]);
    std::vector<TokenSequence> tokens;
    tokens.reserve(prompts.size());
    for (const auto& p : prompts) tokens.push_back(tokenize(p, weights.cfg.vocab));
    Tensor encoded = encode_text(tokens, weights);

    Tensor mean({1, D});
    for (int r = 0; r < encoded.extent(0); ++r) {
      const float* row = encoded.row(r);
      for (int d = 0; d < D; ++d) mean.data()[d] += row[d];
    }
    for (int d = 0; d < D; ++d) mean.data()[d] /= static_cast<float>(encoded.extent(0));
    Tensor unit = l2_normalize(mean, 1);
    std::copy(unit.data(), unit.data() + D, set.embeddings.row(static_cast<int>(c)));
  }
  return set;
}

}  // namespace semclip
