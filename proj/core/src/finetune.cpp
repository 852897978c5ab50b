#include "semclip/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semclip/errors.hpp"
#include "semclip/parallel.hpp"

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

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw NumericError("training loss became non-finite");
}

}  // namespace

void TrainConfig::validate() const {
  if (lr < 0.0f) throw ConfigError("learning rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

FeatureCache build_cache(const Episode& episode, const VitWeights& weights) {
  const VitConfig& cfg = weights.cfg;
  FeatureCache cache;
  cache.n_classes = static_cast<int>(episode.classes.size());
  cache.good_index = 0;
  cache.images.resize(episode.support.size());

  const int P = cfg.patch_size;
  const int G = cfg.grid();

  parallel_for(static_cast<int>(episode.support.size()), [&](int idx) {
    const SemSample& sample = episode.support[static_cast<std::size_t>(idx)];
    if (sample.image.rank() != 2 || sample.image.extent(0) != cfg.image_size ||
        sample.image.extent(1) != cfg.image_size || !sample.mask.same_shape(sample.image)) {
      throw DataError("support image/mask size does not match the model config");
    }
    EncodedImage enc = encode_image(sample.image, weights);

    CachedImage ci;
    ci.label = sample.label;
    for (const LevelEmbeddings& level : enc.levels) {
      ci.level_tokens_F.push_back(level.F.rows(1, level.F.extent(0)));
      ci.level_tokens_V.push_back(level.V.rows(1, level.V.extent(0)));
    }
    ci.cls = enc.cls;

    ci.token_labels.resize(static_cast<std::size_t>(cfg.tokens()));
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        int defect_pixels = 0;
        for (int py = 0; py < P; ++py) {
          const float* row = sample.mask.row(gy * P + py) + gx * P;
          for (int px = 0; px < P; ++px) defect_pixels += row[px] > 0.5f ? 1 : 0;
        }
        // Ties (exactly half) count as defect.
        const bool defect = 2 * defect_pixels >= P * P;
        ci.token_labels[static_cast<std::size_t>(gy * G + gx)] = defect ? sample.label : 0;
      }
    }
    cache.images[static_cast<std::size_t>(idx)] = std::move(ci);
  });
  return cache;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const TrainConfig& cfg) {
  if (!param.same_shape(grad)) throw std::invalid_argument("adam_step shape mismatch");
  if (state.m.empty()) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  if (!state.m.same_shape(param)) throw std::invalid_argument("adam state shape mismatch");

  state.step += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  float* p = param.data();
  float* m = state.m.data();
  float* v = state.v.data();
  const float* g = grad.data();
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double gi = g[i];
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double m_hat = mi / bias1;
    const double v_hat = vi / bias2;
    p[i] = static_cast<float>(p[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

double transformation_loss(const FeatureCache& cache, const TextEmbeddingSet& text,
                           const TransformationLayer& tl, float tau, float seg_loss_weight,
                           const std::vector<int>& levels_used, std::vector<Tensor>* grad_w,
                           std::vector<Tensor>* grad_b) {
  if (cache.images.empty()) throw std::invalid_argument("feature cache is empty");
  const int N = text.embeddings.extent(0);
  const int D = text.embeddings.extent(1);
  const std::vector<int> levels =
      resolve_levels(tl.levels(), levels_used);
  const double inv_tau = 1.0 / static_cast<double>(tau);

  if (grad_w) {
    grad_w->clear();
    grad_b->clear();
  }

  // Class embeddings as unit-norm doubles.
  std::vector<std::vector<double>> g(static_cast<std::size_t>(N), std::vector<double>(D));
  for (int c = 0; c < N; ++c) {
    double sq = 0.0;
    for (int d = 0; d < D; ++d) {
      g[c][d] = text.embeddings.at(c, d);
      sq += g[c][d] * g[c][d];
    }
    const double norm = std::sqrt(sq);
    if (norm > 0) {
      for (int d = 0; d < D; ++d) g[c][d] /= norm;
    }
  }

  double total = 0.0;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const int j = levels[li];
    const Tensor& W = tl.w[static_cast<std::size_t>(j)];
    const Tensor& B = tl.b[static_cast<std::size_t>(j)];
    const int C = W.extent(0);
    if (W.extent(1) != D) throw std::invalid_argument("transformation output width mismatch");

    Tensor gw({C, D});
    Tensor gb({D});
    std::vector<double> gw_acc(static_cast<std::size_t>(C) * D, 0.0);
    std::vector<double> gb_acc(static_cast<std::size_t>(D), 0.0);

    std::int64_t token_count = 0;
    for (const CachedImage& ci : cache.images) {
      token_count += ci.level_tokens_F[static_cast<std::size_t>(j)].extent(0);
    }
    const double inv_tokens = 1.0 / static_cast<double>(token_count);

    double level_loss = 0.0;
    std::vector<double> y(static_cast<std::size_t>(D));
    std::vector<double> s(static_cast<std::size_t>(N));
    std::vector<double> prob(static_cast<std::size_t>(N));
    std::vector<double> dy(static_cast<std::size_t>(D));

    for (const CachedImage& ci : cache.images) {
      const Tensor& X = ci.level_tokens_F[static_cast<std::size_t>(j)];
      if (X.extent(1) != C) throw std::invalid_argument("cached feature width mismatch");
      for (int t = 0; t < X.extent(0); ++t) {
        const float* x = X.row(t);
        // y = x W + b
        for (int d = 0; d < D; ++d) y[d] = B.at(d);
        for (int c = 0; c < C; ++c) {
          const double xc = x[c];
          const float* wrow = W.row(c);
          for (int d = 0; d < D; ++d) y[d] += xc * wrow[d];
        }
        double nsq = 0.0;
        for (int d = 0; d < D; ++d) nsq += y[d] * y[d];
        const double n = std::max(std::sqrt(nsq), 1e-12);

        // Cosine scores (class embeddings are unit), softmax at tau.
        double mx = -1e300;
        for (int c = 0; c < N; ++c) {
          double dot = 0.0;
          for (int d = 0; d < D; ++d) dot += y[d] * g[c][d];
          s[c] = dot / n;
          mx = std::max(mx, s[c] * inv_tau);
        }
        double z = 0.0;
        for (int c = 0; c < N; ++c) {
          prob[c] = std::exp(s[c] * inv_tau - mx);
          z += prob[c];
        }
        for (int c = 0; c < N; ++c) prob[c] /= z;

        const int label = ci.token_labels[static_cast<std::size_t>(t)];
        level_loss += -std::log(std::max(prob[static_cast<std::size_t>(label)], 1e-300));

        if (grad_w) {
          // dL/ds_c = (p_c - 1[c=label]) / tau, per-token mean weighting.
          // ds_c/dy = (g_c - s_c * y / n) / n.
          std::fill(dy.begin(), dy.end(), 0.0);
          for (int c = 0; c < N; ++c) {
            const double ds = (prob[c] - (c == label ? 1.0 : 0.0)) * inv_tau *
                              seg_loss_weight * inv_tokens;
            for (int d = 0; d < D; ++d) {
              dy[d] += ds * (g[c][d] - s[c] * y[d] / n) / n;
            }
          }
          for (int c = 0; c < C; ++c) {
            const double xc = x[c];
            double* grow = gw_acc.data() + static_cast<std::size_t>(c) * D;
            for (int d = 0; d < D; ++d) grow[d] += xc * dy[d];
          }
          for (int d = 0; d < D; ++d) gb_acc[static_cast<std::size_t>(d)] += dy[d];
        }
      }
    }
    total += seg_loss_weight * level_loss * inv_tokens;

    if (grad_w) {
      for (std::int64_t i = 0; i < gw.size(); ++i) {
        gw.data()[i] = static_cast<float>(gw_acc[static_cast<std::size_t>(i)]);
      }
      for (int d = 0; d < D; ++d) gb.data()[d] = static_cast<float>(gb_acc[static_cast<std::size_t>(d)]);
      grad_w->push_back(std::move(gw));
      grad_b->push_back(std::move(gb));
    }
  }
  return total;
}

double head_loss(const FeatureCache& cache, const ClassifierHead& head,
                 const std::vector<int>& levels_used, Tensor* grad_w, Tensor* grad_b) {
  if (cache.images.empty()) throw std::invalid_argument("feature cache is empty");
  const int available = static_cast<int>(cache.images.front().cls.size());
  const std::vector<int> levels = resolve_levels(available, levels_used);
  const int C = cache.images.front().cls.front().extent(0);
  const int in_dim = static_cast<int>(levels.size()) * C;
  const int N = head.w.extent(1);
  if (head.w.extent(0) != in_dim) {
    throw std::invalid_argument("classifier head expects input length " +
                                std::to_string(head.w.extent(0)) + ", got " +
                                std::to_string(in_dim));
  }

  const double inv_count = 1.0 / static_cast<double>(cache.images.size());
  std::vector<double> gw_acc;
  std::vector<double> gb_acc;
  if (grad_w) {
    gw_acc.assign(static_cast<std::size_t>(in_dim) * N, 0.0);
    gb_acc.assign(static_cast<std::size_t>(N), 0.0);
  }

  double total = 0.0;
  std::vector<double> x(static_cast<std::size_t>(in_dim));
  std::vector<double> logits(static_cast<std::size_t>(N));
  for (const CachedImage& ci : cache.images) {
    int off = 0;
    for (int j : levels) {
      const Tensor& cls = ci.cls[static_cast<std::size_t>(j)];
      for (int c = 0; c < C; ++c) x[static_cast<std::size_t>(off + c)] = cls.at(c);
      off += C;
    }
    for (int n = 0; n < N; ++n) logits[static_cast<std::size_t>(n)] = head.b.at(n);
    for (int i = 0; i < in_dim; ++i) {
      const double xi = x[static_cast<std::size_t>(i)];
      const float* wrow = head.w.row(i);
      for (int n = 0; n < N; ++n) logits[static_cast<std::size_t>(n)] += xi * wrow[n];
    }
    double mx = logits[0];
    for (int n = 1; n < N; ++n) mx = std::max(mx, logits[static_cast<std::size_t>(n)]);
    double z = 0.0;
    for (int n = 0; n < N; ++n) {
      logits[static_cast<std::size_t>(n)] = std::exp(logits[static_cast<std::size_t>(n)] - mx);
      z += logits[static_cast<std::size_t>(n)];
    }
    const int label = ci.label;
    if (label < 0 || label >= N) throw DataError("image label out of range");
    const double p_label = logits[static_cast<std::size_t>(label)] / z;
    total += -std::log(std::max(p_label, 1e-300)) * inv_count;

    if (grad_w) {
      for (int n = 0; n < N; ++n) {
        const double p = logits[static_cast<std::size_t>(n)] / z;
        const double dl = (p - (n == label ? 1.0 : 0.0)) * inv_count;
        gb_acc[static_cast<std::size_t>(n)] += dl;
        for (int i = 0; i < in_dim; ++i) {
          gw_acc[static_cast<std::size_t>(i) * N + n] += x[static_cast<std::size_t>(i)] * dl;
        }
      }
    }
  }

  if (grad_w) {
    *grad_w = Tensor({in_dim, N});
    *grad_b = Tensor({N});
    for (std::int64_t i = 0; i < grad_w->size(); ++i) {
      grad_w->data()[i] = static_cast<float>(gw_acc[static_cast<std::size_t>(i)]);
    }
    for (int n = 0; n < N; ++n) grad_b->data()[n] = static_cast<float>(gb_acc[static_cast<std::size_t>(n)]);
  }
  return total;
}

std::vector<double> train_transformation(const FeatureCache& cache, const TextEmbeddingSet& text,
                                         TransformationLayer& tl, const TrainConfig& cfg,
                                         float tau, const std::vector<int>& levels_used) {
  cfg.validate();
  const std::vector<int> levels = resolve_levels(tl.levels(), levels_used);
  std::vector<AdamState> w_state(levels.size());
  std::vector<AdamState> b_state(levels.size());

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Tensor> gw, gb;
    const double loss =
        transformation_loss(cache, text, tl, tau, cfg.seg_loss_weight, levels, &gw, &gb);
    check_finite(loss);
    curve.push_back(loss);
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const int j = levels[li];
      adam_step(tl.w[static_cast<std::size_t>(j)], gw[li], w_state[li], cfg);
      adam_step(tl.b[static_cast<std::size_t>(j)], gb[li], b_state[li], cfg);
    }
  }
  return curve;
}

std::vector<double> train_head(const FeatureCache& cache, ClassifierHead& head,
                               const TrainConfig& cfg, const std::vector<int>& levels_used) {
  cfg.validate();
  AdamState w_state, b_state;
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tensor gw, gb;
    const double loss = head_loss(cache, head, levels_used, &gw, &gb);
    check_finite(loss);
    curve.push_back(loss);
    adam_step(head.w, gw, w_state, cfg);
    adam_step(head.b, gb, b_state, cfg);
  }
  return curve;
}

}  // namespace semclip
