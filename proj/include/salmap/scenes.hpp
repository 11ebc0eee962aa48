/*
 * Copyright 2026 The Salmap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SALMAP_SCENES_HPP_
#define SALMAP_SCENES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "salmap/mask.hpp"
#include "salmap/tensor.hpp"
#include "salmap/train.hpp"

namespace salmap {

enum class SceneClass : std::uint8_t {
  kBlob = 0,        // one or two large discs
  kMultiBlob = 1,   // several small discs
  kOval = 2,        // elongated ellipse
  kCurveChain = 3,  // sinuous polyline with repeated bends
};

inline constexpr std::size_t kSceneClassCount = 4;

inline constexpr std::array<std::string_view, kSceneClassCount> kSceneClassNames = {
    "blob", "multi-blob", "oval", "curve-chain"};

inline std::string_view scene_class_name(SceneClass c) {
  return kSceneClassNames[static_cast<std::size_t>(c)];
}

inline SceneClass parse_scene_class(std::string_view name) {
  for (std::size_t i = 0; i < kSceneClassCount; ++i) {
    if (kSceneClassNames[i] == name) return static_cast<SceneClass>(i);
  }
  throw ValidationError("unknown scene class '" + std::string(name) + "'");
}

struct SceneSpec {
  SceneClass label = SceneClass::kBlob;
  std::size_t object_count = 1;  // 1..4
  double contrast = 1.0;         // (0, 1], object minus local background
  std::size_t distractors = 0;   // bright straight line segments
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t size = 64;         // square image side

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

inline std::string to_string(const SceneSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "{class=" << scene_class_name(s.label) << ", object_count=" << s.object_count
      << ", contrast=" << s.contrast << ", distractors=" << s.distractors
      << ", noise_sigma=" << s.noise_sigma << ", seed=" << s.seed
      << ", size=" << s.size << "}";
  return out.str();
}

struct Scene {
  Tensor image;  // [1, size, size], values in [0, 1]
  SceneClass label = SceneClass::kBlob;
  std::vector<Mask> masks;          // one per object, pairwise disjoint
  std::vector<Mask> feature_masks;  // curve-chain bends; otherwise = masks
  SceneSpec spec;
  double background_mean = 0.0;     // mean of the noise-free background layer

  Mask union_mask() const { return mask_union(masks); }
};

namespace scene_detail {

inline constexpr double kBackgroundAmplitude = 0.05;
inline constexpr double kMaxBackgroundBase = 0.3;
inline constexpr std::size_t kPlacementRetries = 200;
inline constexpr std::size_t kObjectGap = 2;

struct Point {
  double x;
  double y;
};

inline double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

inline double polyline_distance(Point p, const std::vector<Point>& line) {
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    best = std::min(best, segment_distance(p, line[i], line[i + 1]));
  }
  return best;
}

// A candidate shape: its mask, or nullopt if it leaves the 1-pixel margin.
struct Shape2D {
  Mask mask;
  std::vector<Mask> features;
};

template <typename Inside>
std::optional<Mask> rasterize(std::size_t size, double cx, double cy,
                              double reach, Inside inside) {
  Mask m(size, size);
  const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(cy - reach - 1));
  const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(cy + reach + 1));
  const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(cx - reach - 1));
  const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(cx + reach + 1));
  const auto n = static_cast<std::ptrdiff_t>(size);
  for (std::ptrdiff_t y = lo_y; y <= hi_y; ++y) {
    for (std::ptrdiff_t x = lo_x; x <= hi_x; ++x) {
      if (!inside(static_cast<double>(x), static_cast<double>(y))) continue;
      if (y < 1 || x < 1 || y > n - 2 || x > n - 2) return std::nullopt;
      m.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  if (m.empty()) return std::nullopt;
  return m;
}

inline std::optional<Shape2D> draw_object(SceneClass label, std::size_t size,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double side = static_cast<double>(size);
  const double cx = uniform(1.0, side - 2.0);
  const double cy = uniform(1.0, side - 2.0);
  std::optional<Mask> mask;
  std::vector<Mask> features;
  switch (label) {
    case SceneClass::kBlob:
    case SceneClass::kMultiBlob: {
      const double r = label == SceneClass::kBlob ? uniform(8.0, 11.0)
                                                  : uniform(3.0, 4.5);
      mask = rasterize(size, cx, cy, r, [&](double x, double y) {
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      });
      break;
    }
    case SceneClass::kOval: {
      const double a = uniform(13.0, 16.0);
      const double b = uniform(3.0, 4.0);
      const double th = uniform(0.0, std::numbers::pi);
      const double c = std::cos(th), s = std::sin(th);
      mask = rasterize(size, cx, cy, a, [&](double x, double y) {
        const double u = (x - cx) * c + (y - cy) * s;
        const double v = -(x - cx) * s + (y - cy) * c;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      });
      break;
    }
    case SceneClass::kCurveChain: {
      const double length = uniform(36.0, 46.0);
      const double amplitude = uniform(4.0, 6.0);
      const double periods = uniform(1.5, 2.5);
      const double th = uniform(0.0, std::numbers::pi);
      const double c = std::cos(th), s = std::sin(th);
      const double radius = 1.5;
      auto to_image = [&](double t, double off) {
        const double u = t - length / 2.0;
        return Point{cx + u * c - off * s, cy + u * s + off * c};
      };
      std::vector<Point> line;
      const int samples = 96;
      for (int i = 0; i <= samples; ++i) {
        const double t = length * i / samples;
        line.push_back(to_image(
            t, amplitude * std::sin(2.0 * std::numbers::pi * periods * t / length)));
      }
      mask = rasterize(size, cx, cy, length / 2.0 + amplitude, [&](double x, double y) {
        return polyline_distance({x, y}, line) <= radius;
      });
      if (!mask) return std::nullopt;
      // Bend apexes sit at quarter periods; each feature is the stretch of
      // curve within a fixed radius of one apex.
      const double wavelength = length / periods;
      const double reach = 0.9 * wavelength / 4.0;
      for (int k = 0;; ++k) {
        const double t = (k + 0.5) * wavelength / 2.0;
        if (t > length) break;
        const Point apex = to_image(
            t, amplitude * std::sin(2.0 * std::numbers::pi * periods * t / length));
        Mask f(size, size);
        for (std::size_t y = 0; y < size; ++y) {
          for (std::size_t x = 0; x < size; ++x) {
            if (!mask->test(y, x)) continue;
            const double dx = static_cast<double>(x) - apex.x;
            const double dy = static_cast<double>(y) - apex.y;
            if (dx * dx + dy * dy <= reach * reach) f.set(y, x);
          }
        }
        if (!f.empty()) features.push_back(std::move(f));
      }
      if (features.size() < 2) return std::nullopt;
      break;
    }
  }
  if (!mask) return std::nullopt;
  if (features.empty()) features.push_back(*mask);
  return Shape2D{std::move(*mask), std::move(features)};
}

// Smooth value noise in [0, amplitude): bilinear interpolation of a coarse
// random lattice with 8-pixel cells.
inline std::vector<double> value_noise(std::size_t size, double amplitude,
                                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t cell = 8;
  const std::size_t lattice = size / cell + 2;
  std::vector<double> grid(lattice * lattice);
  for (double& g : grid) g = amplitude * unit(rng);
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double gy = static_cast<double>(y) / cell;
      const double gx = static_cast<double>(x) / cell;
      const auto iy = static_cast<std::size_t>(gy);
      const auto ix = static_cast<std::size_t>(gx);
      const double fy = gy - iy, fx = gx - ix;
      const double a = grid[iy * lattice + ix], b = grid[iy * lattice + ix + 1];
      const double c = grid[(iy + 1) * lattice + ix], d = grid[(iy + 1) * lattice + ix + 1];
      out[y * size + x] = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
    }
  }
  return out;
}

inline void validate(const SceneSpec& spec) {
  auto fail = [&](const std::string& why) {
    return ValidationError("invalid scene spec " + to_string(spec) + ": " + why);
  };
  if (static_cast<std::size_t>(spec.label) >= kSceneClassCount) throw fail("bad class");
  if (spec.object_count < 1 || spec.object_count > 4) throw fail("object_count must be in 1..4");
  if (!(spec.contrast > 0.0 && spec.contrast <= 1.0)) throw fail("contrast must be in (0, 1]");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) throw fail("noise_sigma must be >= 0");
  if (spec.distractors > 8) throw fail("at most 8 distractors");
  if (spec.size < 32) throw fail("image side must be >= 32");
}

}  // namespace scene_detail

// Renders one scene. Objects are flat patches `contrast` above the highest
// background value, on top of a smooth low-amplitude noise background. The
// base level stays dark and leaves room for the brightest object in [0, 1].
inline Scene generate_scene(const SceneSpec& spec) {
  using namespace scene_detail;
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = spec.size;

  const double base =
      std::clamp(1.0 - spec.contrast - kBackgroundAmplitude, 0.0, kMaxBackgroundBase) * unit(rng);
  std::vector<double> background = value_noise(n, kBackgroundAmplitude, rng);
  for (double& v : background) v += base;
  const double object_level = std::min(1.0, base + kBackgroundAmplitude + spec.contrast);

  Scene scene;
  scene.spec = spec;
  scene.label = spec.label;
  Mask occupied(n, n);  // objects dilated by the minimum gap
  for (std::size_t k = 0; k < spec.object_count; ++k) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      auto shape = draw_object(spec.label, n, rng);
      if (!shape || intersection_count(shape->mask, occupied) > 0) continue;
      const Mask grown = dilate(shape->mask, kObjectGap);
      for (std::size_t i = 0; i < grown.size(); ++i) occupied.bits[i] |= grown.bits[i];
      scene.masks.push_back(std::move(shape->mask));
      for (auto& f : shape->features) scene.feature_masks.push_back(std::move(f));
      placed = true;
    }
    if (!placed) {
      throw ValidationError("cannot place object " + std::to_string(k) + " for spec " +
                            to_string(spec));
    }
  }

  std::vector<double> pixels = background;
  for (const Mask& m : scene.masks) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.bits[i]) pixels[i] = object_level;
    }
  }

  // Distractors: bright 1.5-pixel-wide straight segments kept clear of the
  // objects' neighbourhoods.
  const Mask keep_out = dilate(occupied, 2);
  for (std::size_t d = 0; d < spec.distractors; ++d) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      const double len = 14.0 + 12.0 * unit(rng);
      const double th = std::numbers::pi * unit(rng);
      const double cx = 2.0 + (n - 4.0) * unit(rng);
      const double cy = 2.0 + (n - 4.0) * unit(rng);
      const Point a{cx - 0.5 * len * std::cos(th), cy - 0.5 * len * std::sin(th)};
      const Point b{cx + 0.5 * len * std::cos(th), cy + 0.5 * len * std::sin(th)};
      auto line = rasterize(n, cx, cy, len / 2.0, [&](double x, double y) {
        return segment_distance({x, y}, a, b) <= 0.75;
      });
      if (!line || intersection_count(*line, keep_out) > 0) continue;
      for (std::size_t i = 0; i < line->size(); ++i) {
        if (line->bits[i]) pixels[i] = 1.0;
      }
      placed = true;
    }
    if (!placed) {
      throw ValidationError("cannot place distractor " + std::to_string(d) + " for spec " +
                            to_string(spec));
    }
  }

  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }

  double mean = 0.0;
  for (double v : background) mean += v;
  scene.background_mean = mean / static_cast<double>(background.size());
  scene.image = Tensor({1, n, n}, std::move(pixels));
  return scene;
}

// Scenes per class in the default dataset.
inline constexpr std::size_t kDefaultPerClassCount = 400;

// Knobs for the default training distribution.
struct DatasetOptions {
  std::size_t image_size = 64;
  double low_contrast_fraction = 0.25;  // contrast drawn from [0.10, 0.15]
  double distractor_fraction = 0.3;     // 1-2 distractors
  double noise_sigma = 0.005;
  double train_fraction = 0.7;
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> test;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Draws a spec for `label` from the default distribution.
inline SceneSpec sample_spec(SceneClass label, std::mt19937_64& rng,
                             const DatasetOptions& options) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneSpec s;
  s.label = label;
  s.size = options.image_size;
  s.object_count =
      label == SceneClass::kMultiBlob ? 2 + static_cast<std::size_t>(rng() % 3) : 1;
  s.contrast = unit(rng) < options.low_contrast_fraction ? 0.10 + 0.05 * unit(rng)
                                                          : 0.3 + 0.7 * unit(rng);
  s.distractors =
      unit(rng) < options.distractor_fraction ? 1 + static_cast<std::size_t>(rng() % 2) : 0;
  s.noise_sigma = options.noise_sigma;
  s.seed = rng();
  return s;
}

// `per_class_count` scenes per class, split per class into train and test
// by a seeded shuffle.
inline Dataset generate_dataset(std::size_t per_class_count, std::uint64_t split_seed,
                                const DatasetOptions& options = {}) {
  if (per_class_count < 10) throw ValidationError("per_class_count must be >= 10");
  std::mt19937_64 rng(splitmix64(split_seed));
  std::set<std::uint64_t> seeds;
  Dataset out;
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(per_class_count)));
  for (std::size_t c = 0; c < kSceneClassCount; ++c) {
    std::vector<Scene> scenes;
    for (std::size_t i = 0; i < per_class_count; ++i) {
      SceneSpec spec;
      do {
        spec = sample_spec(static_cast<SceneClass>(c), rng, options);
      } while (!seeds.insert(spec.seed).second);
      scenes.push_back(generate_scene(spec));
    }
    std::vector<std::size_t> order(per_class_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < n_train ? out.train : out.test).push_back(std::move(scenes[order[i]]));
    }
  }
  return out;
}

inline std::vector<Example> to_examples(const std::vector<Scene>& scenes) {
  std::vector<Example> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) out.push_back({s.image, static_cast<std::size_t>(s.label)});
  return out;
}

}  // namespace salmap

#endif  // SALMAP_SCENES_HPP_
