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

#ifndef SALMAP_GOAL_EVAL_HPP_
#define SALMAP_GOAL_EVAL_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "salmap/attribution.hpp"
#include "salmap/mask.hpp"
#include "salmap/scenes.hpp"

namespace salmap {

struct GoalMetricConfig {
  double threshold_quantile = 0.8;  // quantile of the positive map values
  double coverage_fraction = 0.25;  // share of an object that must be highlighted
  double iou_pass = 0.5;
  double clarity_pass = 0.6;
  double mass_pass = 0.5;           // in-mask share of positive attribution

  void validate() const {
    if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
      throw ValidationError("threshold_quantile must be in (0, 1)");
    if (!(coverage_fraction > 0.0 && coverage_fraction <= 1.0))
      throw ValidationError("coverage_fraction must be in (0, 1]");
    for (double v : {iou_pass, clarity_pass, mass_pass}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("pass thresholds must be in [0, 1]");
    }
  }
};

namespace detail {

inline void require_mask_matches(const SaliencyMap& map, const Mask& mask) {
  if (mask.height != map.height || mask.width != map.width) {
    throw ShapeError("mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                     " does not match map " + std::to_string(map.height) + "x" +
                     std::to_string(map.width));
  }
}

}  // namespace detail

// Pixels at or above the q-th empirical quantile of the map's positive
// values (lower order statistic at rank ceil(q * n)). Empty when nothing is
// positive.
inline Mask threshold_map(const SaliencyMap& map, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw ValidationError("quantile must be in (0, 1)");
  }
  Mask out(map.height, map.width);
  std::vector<double> positive;
  for (double v : map.values) {
    if (v > 0.0) positive.push_back(v);
  }
  if (positive.empty()) return out;
  std::sort(positive.begin(), positive.end());
  const double n = static_cast<double>(positive.size());
  auto rank = static_cast<std::size_t>(std::ceil(quantile * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, positive.size());
  const double cut = positive[rank - 1];
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (map.values[i] > 0.0 && map.values[i] >= cut) out.bits[i] = 1;
  }
  return out;
}

struct Coverage {
  std::size_t covered = 0;
  bool passed = false;
};

inline Coverage multi_object_coverage(const SaliencyMap& map, std::span<const Mask> masks,
                                      const GoalMetricConfig& config = {}) {
  if (masks.empty()) throw ValidationError("multi_object_coverage needs at least one mask");
  const Mask hot = threshold_map(map, config.threshold_quantile);
  Coverage c;
  for (const Mask& m : masks) {
    detail::require_mask_matches(map, m);
    const std::size_t area = m.count();
    if (area == 0) throw ValidationError("object mask is empty");
    const double share =
        static_cast<double>(intersection_count(hot, m)) / static_cast<double>(area);
    if (share >= config.coverage_fraction) ++c.covered;
  }
  c.passed = c.covered == masks.size();
  return c;
}

inline double shape_iou(const SaliencyMap& map, const Mask& mask,
                        const GoalMetricConfig& config = {}) {
  detail::require_mask_matches(map, mask);
  if (mask.empty()) throw ValidationError("shape_iou: target mask is empty");
  const Mask hot = threshold_map(map, config.threshold_quantile);
  const std::size_t inter = intersection_count(hot, mask);
  const std::size_t uni = hot.count() + mask.count() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Positive attribution inside the mask over all positive attribution.
inline double attribution_mass_in_mask(const SaliencyMap& map, const Mask& mask) {
  detail::require_mask_matches(map, mask);
  if (mask.empty()) throw ValidationError("attribution_mass_in_mask: mask is empty");
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double v = map.values[i];
    if (!(v > 0.0)) continue;
    total += v;
    if (mask.bits[i]) inside += v;
  }
  return total > 0.0 ? inside / total : 0.0;
}

// 1 - share of highlighted pixels outside the mask dilated by 2 pixels.
// A map with nothing highlighted scores 0.
inline double clarity_score(const SaliencyMap& map, const Mask& mask,
                            const GoalMetricConfig& config = {}) {
  detail::require_mask_matches(map, mask);
  if (mask.empty()) throw ValidationError("clarity_score: mask is empty");
  const Mask hot = threshold_map(map, config.threshold_quantile);
  const std::size_t n = hot.count();
  if (n == 0) return 0.0;
  const Mask near = dilate(mask, 2);
  const std::size_t outside = n - intersection_count(hot, near);
  return 1.0 - static_cast<double>(outside) / static_cast<double>(n);
}

enum class Goal {
  kMultipleObjects = 0,
  kMultipleFeatures = 1,
  kObjectShape = 2,
  kImportantRegions = 3,
  kHighContrastClarity = 4,
  kLowContrastClarity = 5,
};

inline constexpr std::size_t kGoalCount = 6;

inline constexpr std::array<std::string_view, kGoalCount> kGoalNames = {
    "multiple-objects", "multiple-features", "object-shape",
    "important-regions", "high-contrast-clarity", "low-contrast-clarity"};

inline std::string_view goal_name(Goal g) { return kGoalNames[static_cast<std::size_t>(g)]; }

inline constexpr double kLowContrastCutoff = 0.15;

// Whether a scene belongs to the family that probes `goal`.
inline bool scene_supports(const Scene& scene, Goal goal) {
  switch (goal) {
    case Goal::kMultipleObjects: return scene.masks.size() >= 2;
    case Goal::kMultipleFeatures:
      return scene.label == SceneClass::kCurveChain && scene.feature_masks.size() >= 2;
    case Goal::kObjectShape: return scene.label == SceneClass::kOval;
    case Goal::kImportantRegions: return !scene.masks.empty();
    case Goal::kHighContrastClarity: return scene.spec.distractors > 0;
    case Goal::kLowContrastClarity: return scene.spec.contrast <= kLowContrastCutoff;
  }
  return false;
}

// `count` scenes from the family that probes `goal`, drawn from the default
// distribution with the family's defining property forced: multi-blob,
// curve-chain and oval classes for goals 1-3, any class for goal 4,
// 1-2 distractors at ordinary contrast for goal 5, and contrast in
// [0.10, 0.15] without distractors for goal 6.
inline std::vector<Scene> family_scenes(Goal goal, std::size_t count, std::uint64_t seed,
                                        const DatasetOptions& options = {}) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Scene> out;
  out.reserve(count);
  while (out.size() < count) {
    SceneClass label = static_cast<SceneClass>(rng() % kSceneClassCount);
    if (goal == Goal::kMultipleObjects) label = SceneClass::kMultiBlob;
    if (goal == Goal::kMultipleFeatures) label = SceneClass::kCurveChain;
    if (goal == Goal::kObjectShape) label = SceneClass::kOval;
    SceneSpec spec = sample_spec(label, rng, options);
    if (goal == Goal::kHighContrastClarity) {
      spec.distractors = 1 + static_cast<std::size_t>(rng() % 2);
      spec.contrast = 0.3 + 0.7 * unit(rng);
    } else if (goal == Goal::kLowContrastClarity) {
      spec.distractors = 0;
      spec.contrast = 0.10 + 0.05 * unit(rng);
    }
    try {
      out.push_back(generate_scene(spec));
    } catch (const ValidationError&) {
      // unplaceable draw; take the next one
    }
  }
  return out;
}

// Every metric of one map against one scene's ground truth.
struct SceneMetrics {
  Coverage objects;
  Coverage features;
  double iou = 0.0;
  double mass = 0.0;
  double clarity = 0.0;
};

inline SceneMetrics score_scene(const SaliencyMap& map, const Scene& scene,
                                const GoalMetricConfig& config = {}) {
  const Mask target = scene.union_mask();
  SceneMetrics m;
  m.objects = multi_object_coverage(map, scene.masks, config);
  m.features = multi_object_coverage(map, scene.feature_masks, config);
  m.iou = shape_iou(map, target, config);
  m.mass = attribution_mass_in_mask(map, target);
  m.clarity = clarity_score(map, target, config);
  return m;
}

inline bool goal_passed(const SceneMetrics& m, Goal goal, const GoalMetricConfig& config) {
  switch (goal) {
    case Goal::kMultipleObjects: return m.objects.passed;
    case Goal::kMultipleFeatures: return m.features.passed;
    case Goal::kObjectShape: return m.iou >= config.iou_pass;
    case Goal::kImportantRegions: return m.mass >= config.mass_pass;
    case Goal::kHighContrastClarity:
    case Goal::kLowContrastClarity: return m.clarity >= config.clarity_pass;
  }
  return false;
}

// Method settings used to produce maps for a report.
struct AttributionSettings {
  OcclusionConfig occlusion;
  GradCAMConfig gradcam;
  IGConfig ig;
};

inline SaliencyMap attribute(const Network& net, const Tensor& image, std::size_t class_index,
                             Method method, const AttributionSettings& settings = {}) {
  switch (method) {
    case Method::kOcclusion: return occlusion_map(net, image, class_index, settings.occlusion);
    case Method::kGradCAM: return gradcam_map(net, image, class_index, settings.gradcam);
    case Method::kCAM: return cam_map(net, image, class_index);
    case Method::kIntegratedGradients:
      return integrated_gradients_map(net, image, class_index, settings.ig);
  }
  throw ValidationError("unknown method");
}

struct GoalCell {
  Goal goal = Goal::kMultipleObjects;
  Method method = Method::kOcclusion;
  std::size_t evaluated = 0;
  std::size_t passed = 0;

  // Not applicable when nothing was evaluated.
  std::optional<double> rate() const {
    if (evaluated == 0) return std::nullopt;
    return static_cast<double>(passed) / static_cast<double>(evaluated);
  }
};

struct GoalReport {
  std::vector<Method> methods;
  std::vector<GoalCell> cells;  // goal-major, then method in `methods` order
  GoalMetricConfig config;
  AttributionSettings settings;
  std::size_t scene_count = 0;

  const GoalCell& cell(Goal goal, Method method) const {
    for (const GoalCell& c : cells) {
      if (c.goal == goal && c.method == method) return c;
    }
    throw ValidationError("no report cell for that goal and method");
  }
};

// Scores every scene with every method (class = the scene's label) and
// tallies, per goal, only the scenes whose family supports that goal.
inline GoalReport goal_report(const Network& net, std::span<const Scene> scenes,
                              std::span<const Method> methods,
                              const GoalMetricConfig& config = {},
                              const AttributionSettings& settings = {}) {
  if (methods.empty()) throw ValidationError("goal_report needs at least one method");
  config.validate();
  GoalReport report;
  report.methods.assign(methods.begin(), methods.end());
  report.config = config;
  report.settings = settings;
  report.scene_count = scenes.size();
  for (std::size_t g = 0; g < kGoalCount; ++g) {
    for (Method m : methods) report.cells.push_back({static_cast<Goal>(g), m, 0, 0});
  }
  for (const Scene& scene : scenes) {
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const SaliencyMap map = attribute(net, scene.image, static_cast<std::size_t>(scene.label),
                                        methods[mi], settings);
      const SceneMetrics metrics = score_scene(map, scene, config);
      for (std::size_t g = 0; g < kGoalCount; ++g) {
        const Goal goal = static_cast<Goal>(g);
        if (!scene_supports(scene, goal)) continue;
        GoalCell& cell = report.cells[g * methods.size() + mi];
        ++cell.evaluated;
        if (goal_passed(metrics, goal, config)) ++cell.passed;
      }
    }
  }
  return report;
}

inline nlohmann::json config_json(const GoalMetricConfig& c) {
  return {{"attribution_threshold_quantile", c.threshold_quantile},
          {"coverage_fraction", c.coverage_fraction},
          {"iou_pass", c.iou_pass},
          {"clarity_pass", c.clarity_pass},
          {"mass_pass", c.mass_pass}};
}

inline nlohmann::json settings_json(const AttributionSettings& s, std::size_t image_side) {
  return {{"occlusion",
           {{"patch_size", s.occlusion.patch_size.value_or(default_patch_size(image_side, image_side))},
            {"patch_value", s.occlusion.patch_value},
            {"stride", s.occlusion.stride},
            {"score", score_source_name(s.occlusion.score)}}},
          {"gradcam",
           {{"layer", s.gradcam.layer ? nlohmann::json(*s.gradcam.layer) : nlohmann::json("last-spatial")},
            {"score", score_source_name(s.gradcam.score)},
            {"clamp_negative", s.gradcam.clamp_negative}}},
          {"ig",
           {{"steps", s.ig.steps},
            {"baseline", s.ig.baseline ? "custom" : "zeros"},
            {"score", score_source_name(s.ig.score)}}}};
}

inline std::string report_csv(const GoalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "goal,method,evaluated,passed,rate\n";
  for (const GoalCell& c : r.cells) {
    out << goal_name(c.goal) << ',' << method_name(c.method) << ',' << c.evaluated << ','
        << c.passed << ',';
    if (auto rate = c.rate()) out << *rate; else out << "n/a";
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json report_json(const GoalReport& r, std::size_t image_side = 64) {
  nlohmann::json rows = nlohmann::json::array();
  for (const GoalCell& c : r.cells) {
    const auto rate = c.rate();
    rows.push_back({{"goal", goal_name(c.goal)},
                    {"method", method_name(c.method)},
                    {"evaluated", c.evaluated},
                    {"passed", c.passed},
                    {"rate", rate ? nlohmann::json(*rate) : nlohmann::json(nullptr)}});
  }
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : r.methods) methods.push_back(method_name(m));
  return {{"scenes", r.scene_count},
          {"methods", methods},
          {"config", config_json(r.config)},
          {"attribution", settings_json(r.settings, image_side)},
          {"results", rows}};
}

}  // namespace salmap

#endif  // SALMAP_GOAL_EVAL_HPP_
