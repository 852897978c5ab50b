// Microbenchmarks for the pipeline hot paths: attention, the full
// dual-path image forward, the V-path defect map, and AUROC.

#include <benchmark/benchmark.h>

#include "semclip/metrics.hpp"
#include "semclip/numerics.hpp"
#include "semclip/parallel.hpp"
#include "semclip/rng.hpp"
#include "semclip/segmentation.hpp"
#include "semclip/text_encoder.hpp"
#include "semclip/vit.hpp"

namespace {

semclip::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  semclip::Tensor t(std::move(shape));
  semclip::Rng rng(seed);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return t;
}

void BM_attention_65x64(benchmark::State& state) {
  const auto cfg = semclip::AttentionConfig::for_width(64, 4);
  const auto q = random_tensor({65, 64}, 1);
  const auto k = random_tensor({65, 64}, 2);
  const auto v = random_tensor({65, 64}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(semclip::attention(q, k, v, cfg));
  }
}
BENCHMARK(BM_attention_65x64);

void BM_encode_image_default(benchmark::State& state) {
  semclip::set_num_threads(1);
  semclip::VitConfig cfg;  // 64x64, 12 layers, width 64
  const auto weights = semclip::VitWeights::seeded_with_surgery(cfg, 7);
  const auto image = random_tensor({64, 64}, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(semclip::encode_image(image, weights));
  }
}
BENCHMARK(BM_encode_image_default);

void BM_defect_map_V(benchmark::State& state) {
  semclip::EncodedImage enc;
  for (int j = 0; j < 4; ++j) {
    semclip::LevelEmbeddings level;
    level.F = random_tensor({65, 64}, 20 + static_cast<std::uint64_t>(j));
    level.V = random_tensor({65, 64}, 30 + static_cast<std::uint64_t>(j));
    enc.levels.push_back(std::move(level));
  }
  semclip::TextEmbeddingSet text;
  text.class_names = {"good", "a", "b", "c", "d", "e", "f"};
  text.embeddings = semclip::l2_normalize(random_tensor({7, 64}, 40), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(semclip::defect_map_V(enc, text));
  }
}
BENCHMARK(BM_defect_map_V);

void BM_auroc_100k(benchmark::State& state) {
  semclip::ScoredSet set;
  semclip::Rng rng(55);
  for (int i = 0; i < 100000; ++i) {
    set.scores.push_back(static_cast<float>(rng.uniform()));
    set.labels.push_back(static_cast<int>(rng.next_u64() & 1));
  }
  set.labels[0] = 0;
  set.labels[1] = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(semclip::auroc(set));
  }
}
BENCHMARK(BM_auroc_100k);

}  // namespace

BENCHMARK_MAIN();
