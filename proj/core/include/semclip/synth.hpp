#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semclip/tensor.hpp"

namespace semclip {

inline constexpr int kSynthImageSize = 64;

/// Canonical class order: good first, then the six defect types.
const std::vector<std::string>& canonical_classes();

enum class DefectClass {
  bridge = 1,
  residue = 2,
  hole = 3,
  infilm = 4,
  particle = 5,
  scratch = 6,
};

enum class BackgroundStyle { grating, grid, dots, plain };

struct BackgroundInfo {
  BackgroundStyle style = BackgroundStyle::plain;
  int period = 0;        // grating/grid primary period in px
  bool horizontal = false;  // grating stripes run horizontally (vary along y)
};

struct SemSample {
  Tensor image;       // H x W in [0,1]
  Tensor mask;        // H x W binary {0,1}
  int label = 0;      // canonical class index; 0 = good
  std::uint64_t seed = 0;
};

struct Episode {
  std::vector<SemSample> support;  // K per class, class-major
  std::vector<SemSample> query;    // M samples, shuffled but class-balanced
  std::vector<std::string> classes;
};

/// Deterministic per (seed, style). Gratings are periodic stripes with
/// period in [4,16] px and random phase/orientation; all styles add
/// clamped Gaussian noise (sigma 0.02). Optional banner mode overlays
/// bright annotation strips at the top and bottom rows.
Tensor generate_background(std::uint64_t seed, BackgroundStyle style,
                           BackgroundInfo* info = nullptr, bool banner = false);

/// Renders one defect of the given class onto a copy of the background;
/// the mask marks exactly the modified pixels.
SemSample generate_defect(DefectClass cls, const Tensor& background, std::uint64_t seed,
                          const BackgroundInfo& bg_info = {});

/// Deterministic N-way K-shot episode with a disjoint, class-balanced
/// query set of size m_query (requires m_query >= 10 * k_shot).
Episode sample_episode(int n_way, int k_shot, int m_query, std::uint64_t seed,
                       bool banner = false);

}  // namespace semclip
