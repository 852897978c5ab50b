#include "semclip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semclip/errors.hpp"
#include "semclip/rng.hpp"

namespace semclip {

namespace {

constexpr int kS = kSynthImageSize;
constexpr double kTwoPi = 6.283185307179586;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void add_noise_and_clamp(Tensor& img, Rng& rng, double sigma) {
  for (float& v : img.storage()) v = clamp01(v + rng.normal(0.0, sigma));
}

void overlay_banner(Tensor& img, Rng& rng) {
  // Bright text-like strips at the top and bottom, mimicking tool
  // annotations that interfere with detection.
  for (int band = 0; band < 2; ++band) {
    const int y0 = band == 0 ? 0 : kS - 5;
    for (int y = y0; y < y0 + 5; ++y) {
      for (int x = 0; x < kS; ++x) img.at(y, x) = 0.08f;
    }
    int x = 2;
    while (x < kS - 4) {
      const int w = rng.uniform_int(2, 4);
      if (rng.uniform() < 0.75) {
        for (int y = y0 + 1; y < y0 + 4; ++y) {
          for (int k = 0; k < w && x + k < kS - 1; ++k) img.at(y, x + k) = 0.92f;
        }
      }
      x += w + rng.uniform_int(1, 3);
    }
  }
}

struct Segment {
  double x0, y0, x1, y1;
};

double dist_to_segment(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

void stamp(Tensor& img, Tensor& mask, int x, int y, double offset) {
  if (x < 0 || x >= kS || y < 0 || y >= kS) return;
  if (mask.at(y, x) > 0.5f) return;  // apply the offset once per pixel
  img.at(y, x) = clamp01(img.at(y, x) + offset);
  mask.at(y, x) = 1.0f;
}

void stamp_set(Tensor& img, Tensor& mask, int x, int y, double value) {
  if (x < 0 || x >= kS || y < 0 || y >= kS) return;
  if (mask.at(y, x) > 0.5f) return;
  img.at(y, x) = clamp01(value);
  mask.at(y, x) = 1.0f;
}

void render_ribbon(Tensor& img, Tensor& mask, const Segment& seg, double half_width,
                   double offset) {
  const int x_lo = static_cast<int>(std::floor(std::min(seg.x0, seg.x1) - half_width - 1));
  const int x_hi = static_cast<int>(std::ceil(std::max(seg.x0, seg.x1) + half_width + 1));
  const int y_lo = static_cast<int>(std::floor(std::min(seg.y0, seg.y1) - half_width - 1));
  const int y_hi = static_cast<int>(std::ceil(std::max(seg.y0, seg.y1) + half_width + 1));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      if (dist_to_segment(x + 0.5, y + 0.5, seg) <= half_width) {
        stamp(img, mask, x, y, offset);
      }
    }
  }
}

void render_ellipse(Tensor& img, Tensor& mask, double cx, double cy, double rx, double ry,
                    double offset) {
  const int x_lo = static_cast<int>(std::floor(cx - rx - 1));
  const int x_hi = static_cast<int>(std::ceil(cx + rx + 1));
  const int y_lo = static_cast<int>(std::floor(cy - ry - 1));
  const int y_hi = static_cast<int>(std::ceil(cy + ry + 1));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double nx = (x + 0.5 - cx) / rx;
      const double ny = (y + 0.5 - cy) / ry;
      if (nx * nx + ny * ny <= 1.0) stamp(img, mask, x, y, offset);
    }
  }
}

double mask_fraction(const Tensor& mask) {
  double n = 0;
  for (float v : mask.storage()) n += v;
  return n / static_cast<double>(mask.size());
}

}  // namespace

const std::vector<std::string>& canonical_classes() {
  static const std::vector<std::string> classes = {
      "good", "bridge", "residue", "hole", "infilm", "particle", "scratch"};
  return classes;
}

Tensor generate_background(std::uint64_t seed, BackgroundStyle style, BackgroundInfo* info,
                           bool banner) {
  Rng rng(derive_seed(seed, "background"));
  Tensor img({kS, kS});
  BackgroundInfo bi;
  bi.style = style;

  switch (style) {
    case BackgroundStyle::grating: {
      bi.period = rng.uniform_int(4, 16);
      bi.horizontal = rng.coin();
      const double phase = rng.uniform(0.0, bi.period);
      const double amp = rng.uniform(0.05, 0.09);
      for (int y = 0; y < kS; ++y) {
        for (int x = 0; x < kS; ++x) {
          const double t = bi.horizontal ? y : x;
          img.at(y, x) = static_cast<float>(0.5 + amp * std::cos(kTwoPi * (t - phase) / bi.period));
        }
      }
      break;
    }
    case BackgroundStyle::grid: {
      bi.period = rng.uniform_int(4, 16);
      const int py = rng.uniform_int(4, 16);
      const double phx = rng.uniform(0.0, bi.period);
      const double phy = rng.uniform(0.0, py);
      const double amp = rng.uniform(0.05, 0.08);
      for (int y = 0; y < kS; ++y) {
        for (int x = 0; x < kS; ++x) {
          const double vx = std::cos(kTwoPi * (x - phx) / bi.period);
          const double vy = std::cos(kTwoPi * (y - phy) / py);
          img.at(y, x) = static_cast<float>(0.5 + amp * 0.5 * (vx + vy));
        }
      }
      break;
    }
    case BackgroundStyle::dots: {
      const int spacing = rng.uniform_int(9, 15);
      bi.period = spacing;
      const double r = spacing * 0.28;
      const double ox = rng.uniform(0.0, spacing);
      const double oy = rng.uniform(0.0, spacing);
      for (int y = 0; y < kS; ++y) {
        for (int x = 0; x < kS; ++x) {
          const double lx = std::fmod(x - ox + 8.0 * spacing, spacing) - spacing / 2.0;
          const double ly = std::fmod(y - oy + 8.0 * spacing, spacing) - spacing / 2.0;
          const double d2 = lx * lx + ly * ly;
          img.at(y, x) = static_cast<float>(0.16 * std::exp(-d2 / (2.0 * (r / 1.5) * (r / 1.5))));
        }
      }
      break;
    }
    case BackgroundStyle::plain: {
      for (float& v : img.storage()) v = 0.5f;
      break;
    }
  }

  // Patterned styles are drawn to a common mean and contrast budget so
  // image statistics respond to defects rather than to style identity.
  if (style != BackgroundStyle::plain) {
    double mean = 0.0;
    for (float v : img.storage()) mean += v;
    mean /= static_cast<double>(img.size());
    double var = 0.0;
    for (float v : img.storage()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(img.size());
    const double scale = var > 1e-12 ? 0.05 / std::sqrt(var) : 0.0;
    for (float& v : img.storage()) v = static_cast<float>(0.5 + (v - mean) * scale);
  }

  add_noise_and_clamp(img, rng, 0.02);
  if (banner) overlay_banner(img, rng);
  if (info) *info = bi;
  return img;
}

SemSample generate_defect(DefectClass cls, const Tensor& background, std::uint64_t seed,
                          const BackgroundInfo& bg_info) {
  if (background.rank() != 2 || background.extent(0) != kS || background.extent(1) != kS) {
    throw std::invalid_argument("background must be " + std::to_string(kS) + "x" +
                                std::to_string(kS));
  }
  Rng rng(derive_seed(seed, "defect"));
  SemSample sample;
  sample.image = background;
  sample.mask = Tensor({kS, kS});
  sample.label = static_cast<int>(cls);
  sample.seed = seed;
  Tensor& img = sample.image;
  Tensor& mask = sample.mask;

  switch (cls) {
    case DefectClass::scratch: {
      // Near-axis orientation keeps the bounding box elongated.
      const bool horizontal = rng.coin();
      const double len = rng.uniform(40.0, 54.0);
      const double tilt = rng.uniform(-0.08, 0.08);
      const double c0 = rng.uniform(len / 2 + 3.0, kS - len / 2 - 3.0);
      const double c1 = rng.uniform(10.0, kS - 10.0);
      Segment seg;
      if (horizontal) {
        seg = {c0 - len / 2, c1 - tilt * len / 2, c0 + len / 2, c1 + tilt * len / 2};
      } else {
        seg = {c1 - tilt * len / 2, c0 - len / 2, c1 + tilt * len / 2, c0 + len / 2};
      }
      // Scratches are grooves: always darker than the surface.
      const double offset = -rng.uniform(0.3, 0.36);
      if (rng.uniform() < 0.5) {
        render_ribbon(img, mask, seg, rng.uniform(3.5, 4.2), offset);
      } else {
        // Fish-scale variant: a chain of elliptical depressions elongated
        // along the chain axis, spaced so neighbours always overlap.
        const int k = static_cast<int>(std::ceil(len / 4.2)) + 1;
        const double r_cross = rng.uniform(2.6, 3.2);
        for (int i = 0; i < k; ++i) {
          const double t = static_cast<double>(i) / (k - 1);
          const double cx = seg.x0 + t * (seg.x1 - seg.x0) + rng.uniform(-0.5, 0.5);
          const double cy = seg.y0 + t * (seg.y1 - seg.y0) + rng.uniform(-0.5, 0.5);
          const double r_along = rng.uniform(3.4, 4.2);
          render_ellipse(img, mask, cx, cy, horizontal ? r_along : r_cross,
                         horizontal ? r_cross : r_along, -std::fabs(offset));
        }
      }
      break;
    }
    case DefectClass::particle: {
      const double r = rng.uniform(9.0, 11.0);
      const double cx = rng.uniform(r + 2.0, kS - r - 2.0);
      const double cy = rng.uniform(r + 2.0, kS - r - 2.0);
      const double offset = rng.uniform(0.33, 0.4);
      const double ph1 = rng.uniform(0.0, kTwoPi), ph2 = rng.uniform(0.0, kTwoPi);
      for (int y = 0; y < kS; ++y) {
        for (int x = 0; x < kS; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double d = std::hypot(dx, dy);
          const double theta = std::atan2(dy, dx);
          const double edge = r * (1.0 + 0.12 * std::sin(3 * theta + ph1) +
                                   0.08 * std::sin(5 * theta + ph2));
          if (d <= edge) stamp(img, mask, x, y, offset);
        }
      }
      break;
    }
    case DefectClass::hole: {
      // Dark cavity with a bright rim, kept clear of the border. The rim
      // belongs to the rendered pixels, so the mask stays one filled disc.
      const double r = rng.uniform(10.0, 12.5);
      const double rim = 2.0;
      const double cx = rng.uniform(r + rim + 2.0, kS - r - rim - 2.0);
      const double cy = rng.uniform(r + rim + 2.0, kS - r - rim - 2.0);
      const double floor_level = rng.uniform(0.04, 0.1);
      for (int y = 0; y < kS; ++y) {
        for (int x = 0; x < kS; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double d2 = dx * dx + dy * dy;
          if (d2 <= r * r) {
            stamp_set(img, mask, x, y, floor_level + 0.15 * img.at(y, x));
          } else if (d2 <= (r + rim) * (r + rim)) {
            stamp(img, mask, x, y, 0.3);
          }
        }
      }
      break;
    }
    case DefectClass::bridge: {
      // Short bar spanning one background period, perpendicular to the
      // stripes when the background is a grating.
      const int period = bg_info.period > 0 ? bg_info.period : 12;
      const double len = std::max(14.0, period + 6.0);
      const double hw = rng.uniform(3.5, 4.5);
      // Stripes vary along x when not horizontal, so the connecting bar
      // runs along x to span two of them.
      const bool along_x = bg_info.style == BackgroundStyle::grating ? !bg_info.horizontal
                                                                     : rng.coin();
      const double cx = rng.uniform(len / 2 + 2.0, kS - len / 2 - 2.0);
      const double cy = rng.uniform(hw + 2.0, kS - hw - 2.0);
      Segment seg;
      if (along_x) {
        seg = {cx - len / 2, cy, cx + len / 2, cy};
      } else {
        seg = {cy, cx - len / 2, cy, cx + len / 2};
      }
      render_ribbon(img, mask, seg, hw, rng.uniform(0.46, 0.54));
      break;
    }
    case DefectClass::residue: {
      const int blobs = rng.uniform_int(10, 13);
      const double ax = rng.uniform(18.0, kS - 18.0);
      const double ay = rng.uniform(18.0, kS - 18.0);
      for (int i = 0; i < blobs; ++i) {
        const double cx = std::clamp(ax + rng.uniform(-16.0, 16.0), 4.0, kS - 4.0);
        const double cy = std::clamp(ay + rng.uniform(-16.0, 16.0), 4.0, kS - 4.0);
        const double offset = (i % 2 == 0 ? 1.0 : -1.0) * rng.uniform(0.26, 0.34);
        render_ellipse(img, mask, cx, cy, rng.uniform(3.0, 4.5), rng.uniform(3.0, 4.5), offset);
      }
      break;
    }
    case DefectClass::infilm: {
      // Deliberately low contrast: a particle shape buried in the film.
      const double rx = rng.uniform(11.0, 13.0);
      const double ry = rng.uniform(11.0, 13.0);
      const double cx = rng.uniform(rx + 2.0, kS - rx - 2.0);
      const double cy = rng.uniform(ry + 2.0, kS - ry - 2.0);
      render_ellipse(img, mask, cx, cy, rx, ry, rng.uniform(0.09, 0.13));
      break;
    }
  }

  const double frac = mask_fraction(mask);
  if (frac < 0.0005 || frac > 0.25) {
    throw NumericError("generated defect mask fraction out of range: " + std::to_string(frac));
  }
  return sample;
}

Episode sample_episode(int n_way, int k_shot, int m_query, std::uint64_t seed, bool banner) {
  const auto& canon = canonical_classes();
  if (n_way < 2 || n_way > static_cast<int>(canon.size()) || k_shot < 1 ||
      m_query < 10 * k_shot) {
    throw std::invalid_argument("invalid episode sizes (need 2 <= n_way <= 7, k >= 1, m >= 10k)");
  }

  Episode ep;
  ep.classes.assign(canon.begin(), canon.begin() + n_way);

  auto make_sample = [&](int label, std::uint64_t sample_seed, int forced_style) {
    BackgroundStyle style;
    if (label == static_cast<int>(DefectClass::bridge)) {
      style = BackgroundStyle::grating;  // bridges span grating lines
    } else if (forced_style >= 0) {
      style = static_cast<BackgroundStyle>(forced_style);
    } else {
      Rng pick(derive_seed(sample_seed, "style"));
      style = static_cast<BackgroundStyle>(pick.uniform_int(0, 3));
    }
    BackgroundInfo info;
    Tensor bg = generate_background(derive_seed(sample_seed, "bg"), style, &info, banner);
    if (label == 0) {
      SemSample s;
      s.image = std::move(bg);
      s.mask = Tensor({kSynthImageSize, kSynthImageSize});
      s.label = 0;
      s.seed = sample_seed;
      return s;
    }
    return generate_defect(static_cast<DefectClass>(label), bg, sample_seed, info);
  };

  // Support backgrounds rotate through the styles so no class gets a
  // spurious style shortcut; queries draw styles at random.
  for (int c = 0; c < n_way; ++c) {
    for (int k = 0; k < k_shot; ++k) {
      const std::uint64_t s =
          derive_seed(seed, "support/" + std::to_string(c) + "/" + std::to_string(k));
      ep.support.push_back(make_sample(c, s, k % 4));
    }
  }

  // Class-balanced query labels, shuffled deterministically.
  std::vector<int> labels(static_cast<std::size_t>(m_query));
  for (int i = 0; i < m_query; ++i) labels[static_cast<std::size_t>(i)] = i % n_way;
  Rng shuffle_rng(derive_seed(seed, "query/shuffle"));
  for (int i = m_query - 1; i > 0; --i) {
    const int j = shuffle_rng.uniform_int(0, i);
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < m_query; ++i) {
    const std::uint64_t s = derive_seed(seed, "query/" + std::to_string(i));
    ep.query.push_back(make_sample(labels[static_cast<std::size_t>(i)], s, -1));
  }
  return ep;
}

}  // namespace semclip
