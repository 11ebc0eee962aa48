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

#ifndef SALMAP_ATTRIBUTION_HPP_
#define SALMAP_ATTRIBUTION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "salmap/network.hpp"
#include "salmap/parallel.hpp"
#include "salmap/tensor.hpp"

namespace salmap {

enum class Method { kOcclusion, kGradCAM, kCAM, kIntegratedGradients };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kOcclusion: return "occlusion";
    case Method::kGradCAM: return "gradcam";
    case Method::kCAM: return "cam";
    case Method::kIntegratedGradients: return "ig";
  }
  return "?";
}

// A row-major grid of per-pixel values.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
};

struct SaliencyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, one value per input pixel
  std::size_t class_index = 0;
  Method method = Method::kOcclusion;
  ScoreSource score = ScoreSource::kLogit;
  bool native_resolution = true;
  // Grad-CAM / CAM only: the feature-resolution map before upsampling and
  // the per-channel weights that produced it.
  std::optional<Grid> coarse;
  std::vector<double> channel_weights;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

struct OcclusionConfig {
  std::optional<std::size_t> patch_size;  // default_patch_size() when unset
  double patch_value = 0.0;
  std::size_t stride = 1;
  ScoreSource score = ScoreSource::kProbability;
  std::size_t workers = 1;
};

// Largest odd patch side not exceeding a quarter of the shorter image side.
inline std::size_t default_patch_size(std::size_t height, std::size_t width) {
  std::size_t p = std::max<std::size_t>(1, std::min(height, width) / 4);
  if (p % 2 == 0) --p;
  return std::max<std::size_t>(p, 1);
}

struct IGConfig {
  std::size_t steps = 64;
  std::optional<Tensor> baseline;  // all zeros when unset
  ScoreSource score = ScoreSource::kLogit;
  std::size_t workers = 1;
};

struct GradCAMConfig {
  std::optional<std::size_t> layer;  // last spatial activation when unset
  ScoreSource score = ScoreSource::kLogit;
  bool clamp_negative = false;       // ReLU on the combined map
};

namespace detail {

inline void require_image(const Network& net, const Tensor& image,
                          std::size_t class_index) {
  require_shape(image, net.input_shape(), "image");
  if (image.rank() != 3) throw ShapeError("attribution expects a [C, H, W] image");
  if (class_index >= net.num_classes()) {
    throw ValidationError("class index " + std::to_string(class_index) +
                          " out of range for " + std::to_string(net.num_classes()) +
                          " classes");
  }
}

// Sums a [C, H, W] tensor over channels into an H x W grid.
inline std::vector<double> channel_sum(const Tensor& t) {
  const std::size_t h = t.extent(1), w = t.extent(2);
  std::vector<double> out(h * w, 0.0);
  for (std::size_t c = 0; c < t.extent(0); ++c) {
    for (std::size_t i = 0; i < h * w; ++i) out[i] += t[c * h * w + i];
  }
  return out;
}

// Nearest visited coordinate on the lattice {0, s, 2s, ...} <= last.
inline std::size_t nearest_visited(std::size_t i, std::size_t stride, std::size_t last) {
  const std::size_t lo = (i / stride) * stride;
  const std::size_t hi = lo + stride;
  if (hi > last || i - lo <= hi - i) return lo;
  return hi;
}

}  // namespace detail

// Align-corners bilinear resampling to a larger (or equal) grid. Corner
// values are reproduced exactly; every output lies within the input range.
inline Grid upsample_bilinear(const Grid& coarse, std::size_t target_height,
                              std::size_t target_width) {
  if (coarse.height == 0 || coarse.width == 0 ||
      coarse.values.size() != coarse.height * coarse.width) {
    throw ValidationError("upsample: malformed input grid");
  }
  if (target_height < coarse.height || target_width < coarse.width) {
    throw ValidationError("upsample: target " + std::to_string(target_height) + "x" +
                          std::to_string(target_width) + " is smaller than source " +
                          std::to_string(coarse.height) + "x" +
                          std::to_string(coarse.width));
  }
  if (target_height == coarse.height && target_width == coarse.width) return coarse;

  auto axis = [](std::size_t i, std::size_t n_in, std::size_t n_out) {
    if (n_in == 1 || n_out == 1) return std::pair<std::size_t, double>{0, 0.0};
    const double pos = static_cast<double>(i * (n_in - 1)) / static_cast<double>(n_out - 1);
    auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= n_in - 1) return std::pair<std::size_t, double>{n_in - 1, 0.0};
    return std::pair<std::size_t, double>{i0, pos - static_cast<double>(i0)};
  };
  auto lerp = [](double a, double b, double f) {
    if (f == 0.0) return a;
    const double v = a + f * (b - a);
    return std::clamp(v, std::min(a, b), std::max(a, b));
  };

  Grid out{target_height, target_width, std::vector<double>(target_height * target_width)};
  for (std::size_t y = 0; y < target_height; ++y) {
    const auto [y0, fy] = axis(y, coarse.height, target_height);
    const std::size_t y1 = std::min(y0 + 1, coarse.height - 1);
    for (std::size_t x = 0; x < target_width; ++x) {
      const auto [x0, fx] = axis(x, coarse.width, target_width);
      const std::size_t x1 = std::min(x0 + 1, coarse.width - 1);
      const double top = lerp(coarse.at(y0, x0), coarse.at(y0, x1), fx);
      const double bottom = lerp(coarse.at(y1, x0), coarse.at(y1, x1), fx);
      out.at(y, x) = lerp(top, bottom, fy);
    }
  }
  return out;
}

inline SaliencyMap upsample_bilinear(const SaliencyMap& map, std::size_t target_height,
                                     std::size_t target_width) {
  SaliencyMap out = map;
  Grid g = upsample_bilinear(Grid{map.height, map.width, map.values}, target_height,
                             target_width);
  out.height = g.height;
  out.width = g.width;
  out.values = std::move(g.values);
  if (target_height != map.height || target_width != map.width) {
    out.native_resolution = false;
  }
  return out;
}

// Occlusion sensitivity: value(i, j) = score(x) - score(x with the patch
// centred at (i, j) set to patch_value). Patches are clipped at the border.
// With stride > 1 only lattice centres are evaluated and every other pixel
// takes the value of its nearest lattice centre.
inline SaliencyMap occlusion_map(const Network& net, const Tensor& image,
                                 std::size_t class_index,
                                 const OcclusionConfig& config = {}) {
  detail::require_image(net, image, class_index);
  const std::size_t channels = image.extent(0);
  const std::size_t h = image.extent(1), w = image.extent(2);
  const std::size_t patch = config.patch_size.value_or(default_patch_size(h, w));
  if (patch == 0 || patch % 2 == 0) {
    throw ValidationError("patch_size must be odd and positive, got " + std::to_string(patch));
  }
  if (patch > std::min(h, w)) {
    throw ValidationError("patch_size " + std::to_string(patch) + " exceeds image extent");
  }
  if (config.stride == 0) throw ValidationError("stride must be positive");
  if (!std::isfinite(config.patch_value)) throw ValidationError("patch_value must be finite");

  const double base = class_score(net, image, class_index, config.score);
  const std::size_t rows = (h - 1) / config.stride + 1;
  const std::size_t cols = (w - 1) / config.stride + 1;
  const std::size_t half = patch / 2;
  std::vector<double> visited(rows * cols);
  parallel_for(rows * cols, config.workers, [&](std::size_t idx) {
    const std::size_t cy = (idx / cols) * config.stride;
    const std::size_t cx = (idx % cols) * config.stride;
    Tensor occluded = image;
    const std::size_t y0 = cy >= half ? cy - half : 0, y1 = std::min(h - 1, cy + half);
    const std::size_t x0 = cx >= half ? cx - half : 0, x1 = std::min(w - 1, cx + half);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) occluded.at(c, y, x) = config.patch_value;
      }
    }
    visited[idx] = base - class_score(net, occluded, class_index, config.score);
  });

  SaliencyMap map;
  map.height = h;
  map.width = w;
  map.values.resize(h * w);
  map.class_index = class_index;
  map.method = Method::kOcclusion;
  map.score = config.score;
  map.native_resolution = true;
  const std::size_t last_y = (rows - 1) * config.stride;
  const std::size_t last_x = (cols - 1) * config.stride;
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t vy = detail::nearest_visited(y, config.stride, last_y) / config.stride;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t vx = detail::nearest_visited(x, config.stride, last_x) / config.stride;
      map.values[y * w + x] = visited[vy * cols + vx];
    }
  }
  return map;
}

// Index of the last layer whose output is a [C, H, W] feature map.
inline std::size_t last_spatial_layer(const Network& net) {
  for (std::size_t i = net.num_layers(); i > 0; --i) {
    if (net.layer(i - 1).output_shape.size() == 3) return i - 1;
  }
  throw ValidationError("network has no spatial feature map");
}

// Channel weights w_k = sum_{i,j} d score / d A^k_{i,j} at the output of
// `layer`, from an existing trace.
inline std::vector<double> gradcam_channel_weights(const Network& net,
                                                   const ForwardTrace& trace,
                                                   std::size_t class_index,
                                                   std::size_t layer,
                                                   ScoreSource score = ScoreSource::kLogit) {
  if (layer >= net.num_layers()) {
    throw ValidationError("layer " + std::to_string(layer) + " out of range");
  }
  const Shape& shape = net.layer(layer).output_shape;
  if (shape.size() != 3) {
    throw ValidationError("layer " + std::to_string(layer) + " (" +
                          layer_name(net.layer(layer).spec) +
                          ") has no spatial activation, output shape " +
                          shape_string(shape));
  }
  const Tensor grad = backward_from_class(net, trace, class_index, GradTarget::layer(layer), score);
  const std::size_t z = shape[1] * shape[2];
  std::vector<double> weights(shape[0], 0.0);
  for (std::size_t k = 0; k < shape[0]; ++k) {
    for (std::size_t i = 0; i < z; ++i) weights[k] += grad[k * z + i];
  }
  return weights;
}

namespace detail {

// M_{i,j} = sum_k w_k A^k_{i,j}
inline Grid weighted_feature_sum(const Tensor& features, const std::vector<double>& weights) {
  const std::size_t h = features.extent(1), w = features.extent(2);
  Grid g{h, w, std::vector<double>(h * w, 0.0)};
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t i = 0; i < h * w; ++i) g.values[i] += weights[k] * features[k * h * w + i];
  }
  return g;
}

inline SaliencyMap coarse_to_map(Grid coarse, std::vector<double> weights, const Tensor& image,
                                 std::size_t class_index, Method method, ScoreSource score) {
  SaliencyMap map;
  Grid full = upsample_bilinear(coarse, image.extent(1), image.extent(2));
  map.height = full.height;
  map.width = full.width;
  map.values = std::move(full.values);
  map.class_index = class_index;
  map.method = method;
  map.score = score;
  map.native_resolution = coarse.height == image.extent(1) && coarse.width == image.extent(2);
  map.coarse = std::move(coarse);
  map.channel_weights = std::move(weights);
  return map;
}

}  // namespace detail

// Grad-CAM: weights from summed gradients of the class score at a spatial
// layer, combined with that layer's activations and upsampled to the input.
inline SaliencyMap gradcam_map(const Network& net, const Tensor& image, std::size_t class_index,
                               const GradCAMConfig& config = {}) {
  detail::require_image(net, image, class_index);
  const std::size_t layer = config.layer.value_or(last_spatial_layer(net));
  const ForwardTrace trace = network_forward(net, image);
  auto weights = gradcam_channel_weights(net, trace, class_index, layer, config.score);
  Grid coarse = detail::weighted_feature_sum(trace.layer_output(layer), weights);
  if (config.clamp_negative) {
    for (double& v : coarse.values) v = std::max(v, 0.0);
  }
  return detail::coarse_to_map(std::move(coarse), std::move(weights), image, class_index,
                               Method::kGradCAM, config.score);
}

// Index of the GlobalAvgPool layer that feeds the final Dense layer, or
// nullopt if the network does not have that head.
inline std::optional<std::size_t> gap_head(const Network& net) {
  const std::size_t n = net.num_layers();
  if (n < 2) return std::nullopt;
  if (!std::holds_alternative<Dense>(net.layer(n - 1).spec)) return std::nullopt;
  if (!std::holds_alternative<GlobalAvgPool>(net.layer(n - 2).spec)) return std::nullopt;
  return n - 2;
}

// Class activation map for GAP-headed networks: M = sum_k w[c][k] A^k, with
// w read directly from the final Dense layer and A the pooled feature map.
inline SaliencyMap cam_map(const Network& net, const Tensor& image, std::size_t class_index) {
  detail::require_image(net, image, class_index);
  const auto gap = gap_head(net);
  if (!gap) {
    throw ValidationError("CAM needs a GlobalAvgPool layer directly before the final Dense layer");
  }
  const ForwardTrace trace = network_forward(net, image);
  const Tensor& features = trace.activations[*gap];  // input of the GAP layer
  const Tensor& dense_w = net.layer(net.num_layers() - 1).weight;
  const std::size_t k = features.extent(0);
  std::vector<double> weights(dense_w.data().begin() + static_cast<std::ptrdiff_t>(class_index * k),
                              dense_w.data().begin() + static_cast<std::ptrdiff_t>((class_index + 1) * k));
  Grid coarse = detail::weighted_feature_sum(features, weights);
  return detail::coarse_to_map(std::move(coarse), std::move(weights), image, class_index,
                               Method::kCAM, ScoreSource::kLogit);
}

// Integrated gradients with a right-endpoint Riemann sum over `steps`
// points of the straight path from the baseline to the image.
inline SaliencyMap integrated_gradients_map(const Network& net, const Tensor& image,
                                            std::size_t class_index,
                                            const IGConfig& config = {}) {
  detail::require_image(net, image, class_index);
  if (config.steps < 1 || config.steps > 10000) {
    throw ValidationError("steps must be in [1, 10000], got " + std::to_string(config.steps));
  }
  const Tensor baseline = config.baseline.value_or(Tensor(image.shape()));
  require_shape(baseline, image.shape(), "IG baseline");

  const std::size_t m = config.steps;
  Tensor diff(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) diff[i] = image[i] - baseline[i];

  // Steps are evaluated in blocks; per-step gradients land in slots and are
  // summed in step order.
  const std::size_t block = std::max<std::size_t>(16, config.workers * 4);
  Tensor total(image.shape());
  std::vector<Tensor> slots(std::min(block, m));
  for (std::size_t start = 0; start < m; start += block) {
    const std::size_t count = std::min(block, m - start);
    parallel_for(count, config.workers, [&](std::size_t s) {
      const double alpha = static_cast<double>(start + s + 1) / static_cast<double>(m);
      Tensor point(image.shape());
      for (std::size_t i = 0; i < point.size(); ++i) point[i] = baseline[i] + alpha * diff[i];
      const ForwardTrace trace = network_forward(net, point);
      slots[s] = backward_from_class(net, trace, class_index, GradTarget::input(), config.score);
    });
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += slots[s][i];
    }
  }
  Tensor attribution(image.shape());
  for (std::size_t i = 0; i < attribution.size(); ++i) {
    attribution[i] = diff[i] * (total[i] / static_cast<double>(m));
  }

  SaliencyMap map;
  map.height = image.extent(1);
  map.width = image.extent(2);
  map.values = detail::channel_sum(attribution);
  map.class_index = class_index;
  map.method = Method::kIntegratedGradients;
  map.score = config.score;
  map.native_resolution = true;
  return map;
}

// sum(attributions) - (F(x)_c - F(x')_c), with F the score the map used.
inline double completeness_residual(const SaliencyMap& map, const Network& net,
                                    const Tensor& image, const Tensor& baseline,
                                    std::size_t class_index) {
  const double fx = class_score(net, image, class_index, map.score);
  const double fb = class_score(net, baseline, class_index, map.score);
  return map.sum() - (fx - fb);
}

// IG attribution of the single pixel in which `image` and `baseline` differ.
inline double sensitivity_probe(const Network& net, const Tensor& image, const Tensor& baseline,
                                std::size_t pixel_y, std::size_t pixel_x, std::size_t class_index,
                                std::size_t steps = 1000,
                                ScoreSource score = ScoreSource::kLogit) {
  detail::require_image(net, image, class_index);
  require_shape(baseline, image.shape(), "sensitivity baseline");
  const std::size_t h = image.extent(1), w = image.extent(2);
  if (pixel_y >= h || pixel_x >= w) throw ValidationError("probe pixel outside the image");
  for (std::size_t c = 0; c < image.extent(0); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (y == pixel_y && x == pixel_x) continue;
        if (image.at(c, y, x) != baseline.at(c, y, x)) {
          throw ValidationError("image and baseline differ outside the probe pixel, at (" +
                                std::to_string(y) + ", " + std::to_string(x) + ")");
        }
      }
    }
  }
  IGConfig config;
  config.steps = steps;
  config.baseline = baseline;
  config.score = score;
  const SaliencyMap map = integrated_gradients_map(net, image, class_index, config);
  return map.at(pixel_y, pixel_x);
}

}  // namespace salmap

#endif  // SALMAP_ATTRIBUTION_HPP_
