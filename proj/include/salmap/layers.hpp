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

#ifndef SALMAP_LAYERS_HPP_
#define SALMAP_LAYERS_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>

#include "salmap/tensor.hpp"

namespace salmap {

// Cross-correlation with symmetric zero padding. Weights are
// [out_channels, in_channels, kernel, kernel]; bias is [out_channels].
struct Conv2D {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct MaxPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

// [C, H, W] -> [C], per-channel spatial mean.
struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

// Weights are [out_features, in_features]; bias is [out_features].
struct Dense {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};

using LayerSpec =
    std::variant<Conv2D, ReLU, MaxPool, GlobalAvgPool, Flatten, Dense>;

// Tags used by the weight file format. Values are stable on disk.
enum class LayerKind : std::uint8_t {
  kConv2D = 1,
  kReLU = 2,
  kMaxPool = 3,
  kGlobalAvgPool = 4,
  kFlatten = 5,
  kDense = 6,
};

inline LayerKind layer_kind(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) return LayerKind::kConv2D;
        if constexpr (std::is_same_v<T, ReLU>) return LayerKind::kReLU;
        if constexpr (std::is_same_v<T, MaxPool>) return LayerKind::kMaxPool;
        if constexpr (std::is_same_v<T, GlobalAvgPool>)
          return LayerKind::kGlobalAvgPool;
        if constexpr (std::is_same_v<T, Flatten>) return LayerKind::kFlatten;
        if constexpr (std::is_same_v<T, Dense>) return LayerKind::kDense;
      },
      spec);
}

inline std::string layer_name(const LayerSpec& spec) {
  switch (layer_kind(spec)) {
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kMaxPool: return "MaxPool";
    case LayerKind::kGlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::kFlatten: return "Flatten";
    case LayerKind::kDense: return "Dense";
  }
  return "?";
}

inline bool has_parameters(const LayerSpec& spec) {
  return std::holds_alternative<Conv2D>(spec) ||
         std::holds_alternative<Dense>(spec);
}

// Output shape of `spec` applied to `input`. Throws ShapeError tagged with
// `index` when the layer cannot accept the input.
inline Shape infer_output_shape(const LayerSpec& spec, const Shape& input,
                                std::size_t index) {
  auto fail = [&](const std::string& why) -> ShapeError {
    return ShapeError("layer " + std::to_string(index) + " (" +
                          layer_name(spec) + "): " + why + ", input shape " +
                          shape_string(input),
                      index);
  };
  return std::visit(
      [&](const auto& s) -> Shape {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          if (s.in_channels == 0 || s.out_channels == 0 ||
              s.kernel_size == 0 || s.stride == 0) {
            throw fail("extents must be positive");
          }
          if (input.size() != 3) throw fail("expects a [C, H, W] input");
          if (input[0] != s.in_channels) {
            throw fail("expects " + std::to_string(s.in_channels) +
                       " input channels");
          }
          const std::size_t ph = input[1] + 2 * s.padding;
          const std::size_t pw = input[2] + 2 * s.padding;
          if (s.kernel_size > ph || s.kernel_size > pw) {
            throw fail("kernel larger than padded input");
          }
          return {s.out_channels, (ph - s.kernel_size) / s.stride + 1,
                  (pw - s.kernel_size) / s.stride + 1};
        } else if constexpr (std::is_same_v<T, ReLU>) {
          return input;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          if (s.window == 0 || s.stride == 0) {
            throw fail("extents must be positive");
          }
          if (input.size() != 3) throw fail("expects a [C, H, W] input");
          if (s.window > input[1] || s.window > input[2]) {
            throw fail("window larger than input");
          }
          return {input[0], (input[1] - s.window) / s.stride + 1,
                  (input[2] - s.window) / s.stride + 1};
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          if (input.size() != 3) throw fail("expects a [C, H, W] input");
          return {input[0]};
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return {shape_size(input)};
        } else {
          if (s.in_features == 0 || s.out_features == 0) {
            throw fail("extents must be positive");
          }
          if (input.size() != 1 || input[0] != s.in_features) {
            throw fail("expects input shape [" +
                       std::to_string(s.in_features) + "]");
          }
          return {s.out_features};
        }
      },
      spec);
}

// A layer bound to its position in a network: resolved shapes plus
// parameters. Non-parameterized layers carry empty weight/bias tensors.
struct Layer {
  LayerSpec spec;
  Shape input_shape;
  Shape output_shape;
  Tensor weight;
  Tensor bias;
};

inline Shape weight_shape(const LayerSpec& spec) {
  if (const auto* c = std::get_if<Conv2D>(&spec)) {
    return {c->out_channels, c->in_channels, c->kernel_size, c->kernel_size};
  }
  if (const auto* d = std::get_if<Dense>(&spec)) {
    return {d->out_features, d->in_features};
  }
  return {};
}

inline Shape bias_shape(const LayerSpec& spec) {
  if (const auto* c = std::get_if<Conv2D>(&spec)) return {c->out_channels};
  if (const auto* d = std::get_if<Dense>(&spec)) return {d->out_features};
  return {};
}

// Parameter gradients for one layer, accumulated across calls.
struct LayerGrads {
  Tensor weight;
  Tensor bias;
};

namespace detail {

inline Tensor conv_forward(const Conv2D& s, const Layer& layer,
                           const Tensor& in) {
  Tensor out(layer.output_shape);
  const std::size_t ih = in.extent(1), iw = in.extent(2);
  const std::size_t oh = out.extent(1), ow = out.extent(2);
  const std::size_t k = s.kernel_size;
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    double* plane = &out.at(co, 0, 0);
    std::fill(plane, plane + oh * ow, layer.bias[co]);
    // Per output element, terms are added in (ci, ky, kx) order after the
    // bias, the same order as a direct nested-loop evaluation.
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double w = layer.weight[((co * s.in_channels + ci) * k + ky) * k + kx];
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(y * s.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            const double* row = &in.at(ci, static_cast<std::size_t>(iy), 0);
            double* orow = plane + y * ow;
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(x * s.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              orow[x] += w * row[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

inline Tensor conv_backward(const Conv2D& s, const Layer& layer,
                            const Tensor& in, const Tensor& g,
                            LayerGrads* grads, bool need_input_grad) {
  Tensor gin;
  if (need_input_grad) gin = Tensor(in.shape());
  const std::size_t ih = in.extent(1), iw = in.extent(2);
  const std::size_t oh = g.extent(1), ow = g.extent(2);
  const std::size_t k = s.kernel_size;
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    if (grads) {
      double db = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) db += g[co * oh * ow + i];
      grads->bias[co] += db;
    }
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((co * s.in_channels + ci) * k + ky) * k + kx;
          const double w = layer.weight[widx];
          double dw = 0.0;
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(y * s.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            const auto uy = static_cast<std::size_t>(iy);
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(x * s.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              const auto ux = static_cast<std::size_t>(ix);
              const double gv = g.at(co, y, x);
              dw += gv * in.at(ci, uy, ux);
              if (need_input_grad) gin.at(ci, uy, ux) += w * gv;
            }
          }
          if (grads) grads->weight[widx] += dw;
        }
      }
    }
  }
  return gin;
}

// First maximal element in row-major window order.
inline std::pair<std::size_t, std::size_t> pool_argmax(const MaxPool& s,
                                                       const Tensor& in,
                                                       std::size_t c,
                                                       std::size_t y,
                                                       std::size_t x) {
  std::size_t by = y * s.stride, bx = x * s.stride;
  double best = in.at(c, by, bx);
  for (std::size_t dy = 0; dy < s.window; ++dy) {
    for (std::size_t dx = 0; dx < s.window; ++dx) {
      const double v = in.at(c, y * s.stride + dy, x * s.stride + dx);
      if (v > best) {
        best = v;
        by = y * s.stride + dy;
        bx = x * s.stride + dx;
      }
    }
  }
  return {by, bx};
}

}  // namespace detail

inline Tensor layer_forward(const Layer& layer, const Tensor& input) {
  require_shape(input, layer.input_shape, layer_name(layer.spec) + " input");
  return std::visit(
      [&](const auto& s) -> Tensor {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          return detail::conv_forward(s, layer, input);
        } else if constexpr (std::is_same_v<T, ReLU>) {
          Tensor out = input;
          for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
          return out;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          Tensor out(layer.output_shape);
          for (std::size_t c = 0; c < out.extent(0); ++c) {
            for (std::size_t y = 0; y < out.extent(1); ++y) {
              for (std::size_t x = 0; x < out.extent(2); ++x) {
                const auto [my, mx] = detail::pool_argmax(s, input, c, y, x);
                out.at(c, y, x) = input.at(c, my, mx);
              }
            }
          }
          return out;
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          const std::size_t channels = input.extent(0);
          const std::size_t z = input.extent(1) * input.extent(2);
          Tensor out(layer.output_shape);
          for (std::size_t c = 0; c < channels; ++c) {
            double sum = 0.0;
            for (std::size_t i = 0; i < z; ++i) sum += input[c * z + i];
            out[c] = sum / static_cast<double>(z);
          }
          return out;
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return input.reshaped(layer.output_shape);
        } else {
          Tensor out(layer.output_shape);
          for (std::size_t o = 0; o < s.out_features; ++o) {
            double sum = layer.bias[o];
            const double* row = &layer.weight[o * s.in_features];
            for (std::size_t i = 0; i < s.in_features; ++i) {
              sum += row[i] * input[i];
            }
            out[o] = sum;
          }
          return out;
        }
      },
      layer.spec);
}

// Propagates `grad_output` (d loss / d output) back through one layer.
// Parameter gradients are accumulated into `grads` when it is non-null.
// Returns d loss / d input, or an empty tensor if `need_input_grad` is false.
inline Tensor layer_backward(const Layer& layer, const Tensor& input,
                             const Tensor& grad_output, LayerGrads* grads,
                             bool need_input_grad = true) {
  require_shape(grad_output, layer.output_shape,
                layer_name(layer.spec) + " output gradient");
  return std::visit(
      [&](const auto& s) -> Tensor {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          return detail::conv_backward(s, layer, input, grad_output, grads,
                                       need_input_grad);
        } else if constexpr (std::is_same_v<T, ReLU>) {
          Tensor gin = grad_output;
          for (std::size_t i = 0; i < gin.size(); ++i) {
            if (!(input[i] > 0.0)) gin[i] = 0.0;
          }
          return gin;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          Tensor gin(input.shape());
          for (std::size_t c = 0; c < grad_output.extent(0); ++c) {
            for (std::size_t y = 0; y < grad_output.extent(1); ++y) {
              for (std::size_t x = 0; x < grad_output.extent(2); ++x) {
                const auto [my, mx] = detail::pool_argmax(s, input, c, y, x);
                gin.at(c, my, mx) += grad_output.at(c, y, x);
              }
            }
          }
          return gin;
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          Tensor gin(input.shape());
          const std::size_t z = input.extent(1) * input.extent(2);
          for (std::size_t c = 0; c < input.extent(0); ++c) {
            const double v = grad_output[c] / static_cast<double>(z);
            std::fill_n(&gin[c * z], z, v);
          }
          return gin;
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return grad_output.reshaped(input.shape());
        } else {
          if (grads) {
            for (std::size_t o = 0; o < s.out_features; ++o) {
              const double g = grad_output[o];
              grads->bias[o] += g;
              double* row = &grads->weight[o * s.in_features];
              for (std::size_t i = 0; i < s.in_features; ++i) {
                row[i] += g * input[i];
              }
            }
          }
          if (!need_input_grad) return Tensor();
          Tensor gin(input.shape());
          for (std::size_t o = 0; o < s.out_features; ++o) {
            const double g = grad_output[o];
            const double* row = &layer.weight[o * s.in_features];
            for (std::size_t i = 0; i < s.in_features; ++i) {
              gin[i] += row[i] * g;
            }
          }
          return gin;
        }
      },
      layer.spec);
}

}  // namespace salmap

#endif  // SALMAP_LAYERS_HPP_
