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

#ifndef SALMAP_BASELINE_HPP_
#define SALMAP_BASELINE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "salmap/errors.hpp"
#include "salmap/mask.hpp"
#include "salmap/scenes.hpp"
#include "salmap/tensor.hpp"

namespace salmap {

// Hand-written reference classifier for the synthetic scenes: segment the
// bright foreground, describe the object components by a few shape
// statistics, and pick the class whose mean descriptor is nearest after
// per-feature standardization.

// Smallest jump in sorted intensity that separates foreground from
// background.
inline constexpr double kForegroundGap = 0.03;

// Components no deeper than this (Chebyshev distance to the background) are
// thin lines and are ignored.
inline constexpr int kMinObjectDepth = 2;

inline constexpr std::size_t kBaselineFeatureCount = 5;
using BaselineFeatures = std::array<double, kBaselineFeatureCount>;

// Pixels above the first intensity gap of at least kForegroundGap found
// scanning upward from the median. Empty if there is no such gap.
inline Mask segment_foreground(const Tensor& image) {
  if (image.rank() != 3 || image.shape()[0] != 1) {
    throw ShapeError("baseline expects a [1, H, W] image");
  }
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  std::vector<double> sorted(image.data().begin(), image.data().end());
  std::sort(sorted.begin(), sorted.end());
  double threshold = std::numeric_limits<double>::infinity();
  for (std::size_t i = sorted.size() / 2; i + 1 < sorted.size(); ++i) {
    if (sorted[i + 1] - sorted[i] >= kForegroundGap) {
      threshold = 0.5 * (sorted[i] + sorted[i + 1]);
      break;
    }
  }
  Mask fg(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (image.at(0, y, x) > threshold) fg.set(y, x);
    }
  }
  return fg;
}

// Chebyshev distance of each foreground pixel to the nearest background
// pixel or image border; zero on the background.
inline std::vector<int> chebyshev_depth(const Mask& m) {
  const std::size_t h = m.height, w = m.width;
  std::vector<int> depth(h * w, 0);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = m.bits[i] ? 1 : 0;
  for (int level = 1;; ++level) {
    bool grew = false;
    std::vector<int> next = depth;
    for (std::size_t y = 1; y + 1 < h; ++y) {
      for (std::size_t x = 1; x + 1 < w; ++x) {
        if (depth[y * w + x] != level) continue;
        bool interior = true;
        for (std::size_t yy = y - 1; yy <= y + 1 && interior; ++yy) {
          for (std::size_t xx = x - 1; xx <= x + 1; ++xx) {
            if (depth[yy * w + xx] < level) {
              interior = false;
              break;
            }
          }
        }
        if (interior) {
          next[y * w + x] = level + 1;
          grew = true;
        }
      }
    }
    depth = std::move(next);
    if (!grew) break;
  }
  return depth;
}

struct Component {
  std::size_t area = 0;
  int depth = 0;
  double elongation = 1.0;  // sqrt of the covariance eigenvalue ratio
};

// 8-connected components of `m` with their shape statistics.
inline std::vector<Component> components(const Mask& m) {
  const std::size_t h = m.height, w = m.width;
  const std::vector<int> depth = chebyshev_depth(m);
  std::vector<int> label(h * w, -1);
  std::vector<Component> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!m.bits[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    Component c;
    double sy = 0, sx = 0, syy = 0, sxx = 0, sxy = 0;
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w, x = p % w;
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      ++c.area;
      c.depth = std::max(c.depth, depth[p]);
      sy += fy;
      sx += fx;
      syy += fy * fy;
      sxx += fx * fx;
      sxy += fx * fy;
      for (std::size_t yy = y > 0 ? y - 1 : 0; yy <= std::min(h - 1, y + 1); ++yy) {
        for (std::size_t xx = x > 0 ? x - 1 : 0; xx <= std::min(w - 1, x + 1); ++xx) {
          const std::size_t q = yy * w + xx;
          if (m.bits[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    const double n = static_cast<double>(c.area);
    const double vy = syy / n - (sy / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double cxy = sxy / n - (sx / n) * (sy / n);
    const double mid = 0.5 * (vx + vy);
    const double rad = std::sqrt(0.25 * (vx - vy) * (vx - vy) + cxy * cxy);
    c.elongation = std::sqrt((mid + rad + 1e-9) / (mid - rad + 1e-9));
    out.push_back(c);
  }
  return out;
}

// Descriptor: object component count, then depth, log area, elongation and
// area per squared depth of the largest object component. All zeros when no
// object component is found.
inline BaselineFeatures baseline_features(const Tensor& image) {
  std::vector<Component> objects;
  for (const Component& c : components(segment_foreground(image))) {
    if (c.depth >= kMinObjectDepth) objects.push_back(c);
  }
  BaselineFeatures f{};
  if (objects.empty()) return f;
  const Component& big = *std::max_element(
      objects.begin(), objects.end(),
      [](const Component& a, const Component& b) { return a.area < b.area; });
  const double d = static_cast<double>(big.depth);
  f[0] = static_cast<double>(objects.size());
  f[1] = d;
  f[2] = std::log(static_cast<double>(big.area));
  f[3] = big.elongation;
  f[4] = static_cast<double>(big.area) / (d * d);
  return f;
}

class TemplateClassifier {
 public:
  // Class templates are the mean standardized descriptors of `scenes`.
  static TemplateClassifier fit(std::span<const Scene> scenes) {
    if (scenes.empty()) throw ValidationError("baseline needs training scenes");
    TemplateClassifier model;
    std::vector<BaselineFeatures> feats;
    feats.reserve(scenes.size());
    for (const Scene& s : scenes) feats.push_back(baseline_features(s.image));
    const double n = static_cast<double>(scenes.size());
    for (std::size_t k = 0; k < kBaselineFeatureCount; ++k) {
      double sum = 0, sq = 0;
      for (const auto& f : feats) {
        sum += f[k];
        sq += f[k] * f[k];
      }
      model.mean_[k] = sum / n;
      model.scale_[k] = std::sqrt(std::max(sq / n - model.mean_[k] * model.mean_[k], 0.0));
      if (model.scale_[k] == 0.0) model.scale_[k] = 1.0;
    }
    std::array<double, kSceneClassCount> counts{};
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto c = static_cast<std::size_t>(scenes[i].label);
      const BaselineFeatures z = model.standardize(feats[i]);
      for (std::size_t k = 0; k < kBaselineFeatureCount; ++k) model.templates_[c][k] += z[k];
      counts[c] += 1;
    }
    for (std::size_t c = 0; c < kSceneClassCount; ++c) {
      if (counts[c] == 0) throw ValidationError("baseline needs every class in training");
      for (double& v : model.templates_[c]) v /= counts[c];
    }
    return model;
  }

  SceneClass predict(const Tensor& image) const {
    const BaselineFeatures z = standardize(baseline_features(image));
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kSceneClassCount; ++c) {
      double d = 0;
      for (std::size_t k = 0; k < kBaselineFeatureCount; ++k) {
        d += (z[k] - templates_[c][k]) * (z[k] - templates_[c][k]);
      }
      if (d < best_dist) {
        best_dist = d;
        best = c;
      }
    }
    return static_cast<SceneClass>(best);
  }

  double accuracy(std::span<const Scene> scenes) const {
    if (scenes.empty()) throw ValidationError("accuracy of an empty scene list");
    std::size_t hits = 0;
    for (const Scene& s : scenes) hits += predict(s.image) == s.label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(scenes.size());
  }

 private:
  BaselineFeatures standardize(const BaselineFeatures& f) const {
    BaselineFeatures z;
    for (std::size_t k = 0; k < kBaselineFeatureCount; ++k) z[k] = (f[k] - mean_[k]) / scale_[k];
    return z;
  }

  BaselineFeatures mean_{};
  BaselineFeatures scale_{};
  std::array<BaselineFeatures, kSceneClassCount> templates_{};
};

}  // namespace salmap

#endif  // SALMAP_BASELINE_HPP_
