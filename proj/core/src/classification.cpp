#include "semclip/classification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semclip/numerics.hpp"

namespace semclip {

Tensor similarity_probability(const EncodedImage& enc, const TransformationLayer& tl,
                              const TextEmbeddingSet& text, const SimilarityOptions& opts) {
  if (opts.tau <= 0.0f) throw std::invalid_argument("tau must be positive");
  const int N = text.embeddings.extent(0);
  const int D = text.embeddings.extent(1);

  std::vector<int> levels = opts.levels_used;
  if (levels.empty()) {
    levels.resize(enc.levels.size());
    for (std::size_t j = 0; j < enc.levels.size(); ++j) levels[j] = static_cast<int>(j);
  }

  Tensor s_max({N});
  bool first = true;
  for (int j : levels) {
    if (j < 0 || j >= static_cast<int>(enc.levels.size())) {
      throw std::invalid_argument("level index out of range");
    }
    const Tensor& wj = tl.w[static_cast<std::size_t>(j)];
    const Tensor& bj = tl.b[static_cast<std::size_t>(j)];

    Tensor features;  // rows to score against the class embeddings
    if (opts.source == PsSource::patches) {
      const Tensor& F = enc.levels[static_cast<std::size_t>(j)].F;
      features = linear(F.rows(1, F.extent(0)), wj, bj);
    } else {
      Tensor cls({1, enc.cls[static_cast<std::size_t>(j)].extent(0)});
      std::copy(enc.cls[static_cast<std::size_t>(j)].data(),
                enc.cls[static_cast<std::size_t>(j)].data() + cls.extent(1), cls.data());
      features = linear(cls, wj, bj);
    }
    if (features.extent(1) != D) {
      throw std::invalid_argument("similarity feature width must match joint dimension");
    }

    for (int c = 0; c < N; ++c) {
      float best = -2.0f;
      for (int t = 0; t < features.extent(0); ++t) {
        best = std::max(best, cosine_similarity(features.row(t), text.embeddings.row(c), D));
      }
      if (first) {
        s_max.at(c) = best;
      } else {
        s_max.at(c) = std::max(s_max.at(c), best);
      }
    }
    first = false;
  }
  if (first) throw std::invalid_argument("no levels selected");

  for (int c = 0; c < N; ++c) s_max.at(c) /= opts.tau;
  return softmax(s_max, 0);
}

Tensor head_probability(const std::vector<Tensor>& cls_tokens, const ClassifierHead& head) {
  if (cls_tokens.empty()) throw std::invalid_argument("no CLS tokens");
  int total = 0;
  for (const Tensor& t : cls_tokens) {
    if (t.rank() != 1) throw std::invalid_argument("CLS tokens must be rank-1");
    total += t.extent(0);
  }
  if (head.w.rank() != 2 || head.w.extent(0) != total) {
    throw std::invalid_argument("classifier head expects input length " +
                                std::to_string(head.w.extent(0)) + ", got " +
                                std::to_string(total));
  }
  Tensor features({1, total});
  float* dst = features.data();
  for (const Tensor& t : cls_tokens) {
    std::copy(t.data(), t.data() + t.extent(0), dst);
    dst += t.extent(0);
  }
  Tensor logits = linear(features, head.w, head.b);
  Tensor prob = softmax(logits, 1);
  Tensor out({head.w.extent(1)});
  std::copy(prob.data(), prob.data() + prob.size(), out.data());
  return out;
}

ClassProbabilities fuse_probability(const Tensor& p_s, const Tensor& p_c,
                                    const FusionConfig& cfg) {
  if (p_s.rank() != 1 || p_c.rank() != 1 || p_s.size() != p_c.size()) {
    throw std::invalid_argument("fuse_probability length mismatch");
  }
  if (cfg.alpha < 0.0f || cfg.alpha > 1.0f) throw std::invalid_argument("alpha must be in [0,1]");
  auto check_simplex = [](const Tensor& p, const char* name) {
    float sum = 0.0f;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      if (p.data()[i] < -1e-6f) throw std::invalid_argument(std::string(name) + " has negative mass");
      sum += p.data()[i];
    }
    if (std::fabs(sum - 1.0f) > 1e-3f) {
      throw std::invalid_argument(std::string(name) + " is not a probability vector");
    }
  };
  check_simplex(p_s, "p_s");
  check_simplex(p_c, "p_c");

  ClassProbabilities out;
  out.p_s = p_s;
  out.p_c = p_c;
  out.p = Tensor({static_cast<int>(p_s.size())});
  for (int i = 0; i < static_cast<int>(p_s.size()); ++i) {
    out.p.at(i) = (1.0f - cfg.alpha) * p_s.at(i) + cfg.alpha * p_c.at(i);
  }
  out.predicted = 0;
  for (int i = 1; i < static_cast<int>(out.p.size()); ++i) {
    if (out.p.at(i) > out.p.at(out.predicted)) out.predicted = i;
  }
  return out;
}

}  // namespace semclip
