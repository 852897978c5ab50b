#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "semclip/classification.hpp"
#include "semclip/numerics.hpp"
#include "test_util.hpp"

using semclip::ClassifierHead;
using semclip::ClassProbabilities;
using semclip::EncodedImage;
using semclip::FusionConfig;
using semclip::SimilarityOptions;
using semclip::Tensor;
using semclip::TextEmbeddingSet;
using semclip::TransformationLayer;

namespace {

EncodedImage make_encoded(int levels, int tokens, int width, std::uint64_t seed) {
  EncodedImage enc;
  for (int j = 0; j < levels; ++j) {
    semclip::LevelEmbeddings level;
    level.F = testutil::random_tensor({tokens + 1, width}, seed + static_cast<std::uint64_t>(j));
    level.V = testutil::random_tensor({tokens + 1, width},
                                      seed + 50 + static_cast<std::uint64_t>(j));
    enc.levels.push_back(std::move(level));
    Tensor cls({width});
    for (int c = 0; c < width; ++c) cls.at(c) = enc.levels.back().F.at(0, c);
    enc.cls.push_back(std::move(cls));
  }
  return enc;
}

TransformationLayer identity_tl(int levels, int dim) {
  TransformationLayer tl;
  for (int j = 0; j < levels; ++j) {
    Tensor w({dim, dim});
    for (int c = 0; c < dim; ++c) w.at(c, c) = 1.0f;
    tl.w.push_back(std::move(w));
    tl.b.emplace_back(Tensor({dim}));
  }
  return tl;
}

}  // namespace

TEST_CASE("similarity_probability uniform when all similarities equal") {
  const int D = 8, N = 3;
  TextEmbeddingSet set;
  set.class_names = {"good", "a", "b"};
  Tensor row = semclip::l2_normalize(testutil::random_tensor({1, D}, 7), 1);
  set.embeddings = Tensor({N, D});
  for (int c = 0; c < N; ++c) {
    for (int d = 0; d < D; ++d) set.embeddings.at(c, d) = row.at(0, d);
  }
  EncodedImage enc = make_encoded(2, 4, D, 8);
  const Tensor p = semclip::similarity_probability(enc, identity_tl(2, D), set);
  for (int c = 0; c < N; ++c) CHECK(p.at(c) == doctest::Approx(1.0 / N).epsilon(1e-5));
}

TEST_CASE("similarity_probability argmax follows the dominant class") {
  const int D = 6, N = 3, T = 4;
  TextEmbeddingSet set;
  set.class_names = {"good", "a", "b"};
  set.embeddings = Tensor({N, D});
  set.embeddings.at(0, 0) = 1.0f;
  set.embeddings.at(1, 1) = 1.0f;
  set.embeddings.at(2, 2) = 1.0f;

  EncodedImage enc;
  for (int j = 0; j < 2; ++j) {
    semclip::LevelEmbeddings level;
    level.F = Tensor({T + 1, D});
    // Every patch token points along class 2's axis, with noise elsewhere.
    for (int t = 1; t <= T; ++t) {
      level.F.at(t, 2) = 2.0f;
      level.F.at(t, 4) = 0.3f;
    }
    level.V = Tensor({T + 1, D});
    enc.levels.push_back(std::move(level));
    Tensor cls({D});
    enc.cls.push_back(std::move(cls));
  }
  const Tensor p = semclip::similarity_probability(enc, identity_tl(2, D), set);
  CHECK(p.at(2) > p.at(0));
  CHECK(p.at(2) > p.at(1));

  // Rescaling one token row positively cannot move the argmax.
  enc.levels[0].F.at(1, 2) *= 25.0f;
  enc.levels[0].F.at(1, 4) *= 25.0f;
  const Tensor p2 = semclip::similarity_probability(enc, identity_tl(2, D), set);
  CHECK(p2.at(2) > p2.at(0));
  CHECK(p2.at(2) > p2.at(1));
}

TEST_CASE("similarity_probability matches a brute-force max/softmax oracle") {
  const int D = 5, N = 3, T = 3, m = 2;
  TextEmbeddingSet set;
  set.class_names = {"good", "a", "b"};
  set.embeddings = semclip::l2_normalize(testutil::random_tensor({N, D}, 11), 1);
  EncodedImage enc = make_encoded(m, T, D, 12);
  TransformationLayer tl;
  for (int j = 0; j < m; ++j) {
    tl.w.push_back(testutil::random_tensor({D, D}, 13 + static_cast<std::uint64_t>(j)));
    tl.b.push_back(testutil::random_tensor({D}, 15 + static_cast<std::uint64_t>(j)));
  }

  SimilarityOptions opts;
  opts.tau = 0.07f;
  const Tensor p = semclip::similarity_probability(enc, tl, set, opts);

  std::vector<double> s_max(static_cast<std::size_t>(N), -2.0);
  for (int j = 0; j < m; ++j) {
    for (int c = 0; c < N; ++c) {
      for (int t = 1; t <= T; ++t) {
        std::vector<double> y(static_cast<std::size_t>(D));
        for (int d = 0; d < D; ++d) {
          double acc = tl.b[static_cast<std::size_t>(j)].at(d);
          for (int k = 0; k < D; ++k) {
            acc += static_cast<double>(enc.levels[static_cast<std::size_t>(j)].F.at(t, k)) *
                   tl.w[static_cast<std::size_t>(j)].at(k, d);
          }
          y[static_cast<std::size_t>(d)] = acc;
        }
        double dot = 0.0, ny = 0.0, nt = 0.0;
        for (int d = 0; d < D; ++d) {
          dot += y[static_cast<std::size_t>(d)] * set.embeddings.at(c, d);
          ny += y[static_cast<std::size_t>(d)] * y[static_cast<std::size_t>(d)];
          nt += static_cast<double>(set.embeddings.at(c, d)) * set.embeddings.at(c, d);
        }
        const double cos = dot / (std::sqrt(ny) * std::sqrt(nt));
        s_max[static_cast<std::size_t>(c)] = std::max(s_max[static_cast<std::size_t>(c)], cos);
      }
    }
  }
  double mx = -1e300, z = 0.0;
  for (double s : s_max) mx = std::max(mx, s / 0.07);
  std::vector<double> expect(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c) {
    expect[static_cast<std::size_t>(c)] = std::exp(s_max[static_cast<std::size_t>(c)] / 0.07 - mx);
    z += expect[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < N; ++c) {
    CHECK(p.at(c) == doctest::Approx(expect[static_cast<std::size_t>(c)] / z).epsilon(1e-5));
  }
}

TEST_CASE("head_probability") {
  const int m = 2, C = 4, N = 3;
  std::vector<Tensor> cls;
  for (int j = 0; j < m; ++j) cls.push_back(testutil::random_tensor({C}, 21 + static_cast<std::uint64_t>(j)));

  // Zero weights: softmax of the bias.
  ClassifierHead head;
  head.w = Tensor({m * C, N});
  head.b = Tensor({N}, {0.2f, -0.4f, 0.9f});
  const Tensor p = semclip::head_probability(cls, head);
  const Tensor expect = semclip::softmax(head.b, 0);
  CHECK(testutil::max_abs_diff(p, expect) < 1e-7);

  // Saturated bias: one-hot within 1e-6.
  ClassifierHead sat;
  sat.w = Tensor({m * C, N});
  sat.b = Tensor({N}, {25.0f, 0.0f, 1.0f});
  const Tensor ph = semclip::head_probability(cls, sat);
  CHECK(ph.at(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ph.at(1) < 1e-6f);
  CHECK(ph.at(2) < 1e-6f);

  // Scalar-loop oracle on a seeded case.
  ClassifierHead rnd;
  rnd.w = testutil::random_tensor({m * C, N}, 31);
  rnd.b = testutil::random_tensor({N}, 32);
  const Tensor pr = semclip::head_probability(cls, rnd);
  std::vector<double> logits(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    double acc = rnd.b.at(n);
    for (int j = 0; j < m; ++j) {
      for (int c = 0; c < C; ++c) {
        acc += static_cast<double>(cls[static_cast<std::size_t>(j)].at(c)) * rnd.w.at(j * C + c, n);
      }
    }
    logits[static_cast<std::size_t>(n)] = acc;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (int n = 0; n < N; ++n) {
    CHECK(pr.at(n) == doctest::Approx(logits[static_cast<std::size_t>(n)] / z).epsilon(1e-5));
  }

  // Duplicated-and-halved weights on duplicated features is unchanged.
  std::vector<Tensor> doubled = cls;
  doubled.insert(doubled.end(), cls.begin(), cls.end());
  ClassifierHead halved;
  halved.w = Tensor({2 * m * C, N});
  for (int i = 0; i < m * C; ++i) {
    for (int n = 0; n < N; ++n) {
      halved.w.at(i, n) = rnd.w.at(i, n) * 0.5f;
      halved.w.at(m * C + i, n) = rnd.w.at(i, n) * 0.5f;
    }
  }
  halved.b = rnd.b;
  CHECK(testutil::max_abs_diff(semclip::head_probability(doubled, halved), pr) < 1e-5);

  ClassifierHead wrong;
  wrong.w = Tensor({m * C + 1, N});
  wrong.b = Tensor({N});
  CHECK_THROWS_AS(semclip::head_probability(cls, wrong), std::invalid_argument);
}

TEST_CASE("fuse_probability endpoints, fixed point, and the 0.8 case") {
  Tensor p_s({2}, {1.0f, 0.0f});
  Tensor p_c({2}, {0.0f, 1.0f});

  FusionConfig a1{1.0f};
  const ClassProbabilities e1 = semclip::fuse_probability(p_s, p_c, a1);
  CHECK(e1.p.at(0) == 0.0f);
  CHECK(e1.p.at(1) == 1.0f);

  FusionConfig a0{0.0f};
  const ClassProbabilities e0 = semclip::fuse_probability(p_s, p_c, a0);
  CHECK(e0.p.at(0) == 1.0f);
  CHECK(e0.p.at(1) == 0.0f);

  FusionConfig a08{0.8f};
  const ClassProbabilities mid = semclip::fuse_probability(p_s, p_c, a08);
  CHECK(mid.p.at(0) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(mid.p.at(1) == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(mid.predicted == 1);

  // Fixed point: equal inputs are unchanged for any alpha.
  Tensor p({3}, {0.2f, 0.5f, 0.3f});
  for (float alpha : {0.0f, 0.3f, 0.8f, 1.0f}) {
    const ClassProbabilities fp = semclip::fuse_probability(p, p, FusionConfig{alpha});
    CHECK(testutil::max_abs_diff(fp.p, p) < 1e-6);
  }
}

TEST_CASE("fuse_probability validation and tie-breaking") {
  Tensor p_s({2}, {0.5f, 0.5f});
  Tensor bad({2}, {0.9f, 0.3f});
  CHECK_THROWS_AS(semclip::fuse_probability(p_s, bad, FusionConfig{0.5f}),
                  std::invalid_argument);
  Tensor shorter({3}, {0.3f, 0.3f, 0.4f});
  CHECK_THROWS_AS(semclip::fuse_probability(p_s, shorter, FusionConfig{0.5f}),
                  std::invalid_argument);

  // Exact tie goes to the lowest index.
  const ClassProbabilities tie = semclip::fuse_probability(p_s, p_s, FusionConfig{0.5f});
  CHECK(tie.predicted == 0);

  // Simplex is preserved.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Tensor a = semclip::softmax(testutil::random_tensor({5}, seed, -2, 2), 0);
    Tensor b = semclip::softmax(testutil::random_tensor({5}, seed + 31, -2, 2), 0);
    const ClassProbabilities out = semclip::fuse_probability(a, b, FusionConfig{0.8f});
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) {
      CHECK(out.p.at(c) >= 0.0f);
      sum += out.p.at(c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("fusion is monotone in alpha where the head is larger") {
  Tensor p_s({3}, {0.6f, 0.3f, 0.1f});
  Tensor p_c({3}, {0.1f, 0.8f, 0.1f});
  float prev = -1.0f;
  for (float alpha : {0.0f, 0.25f, 0.5f, 0.75f, 1.0f}) {
    const ClassProbabilities out = semclip::fuse_probability(p_s, p_c, FusionConfig{alpha});
    CHECK(out.p.at(1) > prev);
    prev = out.p.at(1);
  }
}
