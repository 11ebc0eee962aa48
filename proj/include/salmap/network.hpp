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

#ifndef SALMAP_NETWORK_HPP_
#define SALMAP_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "salmap/layers.hpp"
#include "salmap/tensor.hpp"

namespace salmap {

// A feed-forward stack of layers mapping one input tensor to m >= 2 logits.
// The layer chain is shape-checked on construction; parameters start at
// zero until initialized or assigned.
class Network {
 public:
  Network(const std::vector<LayerSpec>& specs, Shape input_shape)
      : input_shape_(std::move(input_shape)) {
    if (specs.empty()) throw ValidationError("network needs at least one layer");
    if (input_shape_.empty() || shape_size(input_shape_) == 0) {
      throw ShapeError("network input shape must be non-empty and positive");
    }
    Shape current = input_shape_;
    layers_.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      Layer layer;
      layer.spec = specs[i];
      layer.input_shape = current;
      layer.output_shape = infer_output_shape(specs[i], current, i);
      if (has_parameters(specs[i])) {
        layer.weight = Tensor(weight_shape(specs[i]));
        layer.bias = Tensor(bias_shape(specs[i]));
      }
      current = layer.output_shape;
      layers_.push_back(std::move(layer));
    }
    if (current.size() != 1 || current[0] < 2) {
      throw ShapeError("network must end in a vector of >= 2 logits, got " +
                           shape_string(current),
                       specs.size() - 1);
    }
    classes_ = current[0];
  }

  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return classes_; }
  std::size_t num_layers() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  std::span<const Layer> layers() const { return layers_; }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }

  // Replaces the parameters of layer `i`; shapes must match exactly.
  void set_parameters(std::size_t i, Tensor weight, Tensor bias) {
    Layer& l = layers_.at(i);
    if (!has_parameters(l.spec)) {
      throw ValidationError("layer " + std::to_string(i) + " (" +
                            layer_name(l.spec) + ") has no parameters");
    }
    require_shape(weight, weight_shape(l.spec),
                  "layer " + std::to_string(i) + " weight");
    require_shape(bias, bias_shape(l.spec),
                  "layer " + std::to_string(i) + " bias");
    l.weight = std::move(weight);
    l.bias = std::move(bias);
  }

  Tensor& weight(std::size_t i) { return layers_.at(i).weight; }
  Tensor& bias(std::size_t i) { return layers_.at(i).bias; }

  // Bitwise parameter equality with identical architecture.
  friend bool operator==(const Network& a, const Network& b) {
    if (a.input_shape_ != b.input_shape_ || a.layers_.size() != b.layers_.size())
      return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const Layer& x = a.layers_[i];
      const Layer& y = b.layers_[i];
      if (!(x.spec == y.spec)) return false;
      if (has_parameters(x.spec) && (!(x.weight == y.weight) || !(x.bias == y.bias)))
        return false;
    }
    return true;
  }

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::size_t classes_ = 0;
};

// Weights ~ Uniform(-b, b) with b = sqrt(6) / sqrt(fan_in), drawn layer by
// layer from one seeded stream; biases start at zero.
inline Network build_network(const std::vector<LayerSpec>& specs,
                             const Shape& input_shape, std::uint64_t seed) {
  Network net(specs, input_shape);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const LayerSpec& spec = net.layer(i).spec;
    if (!has_parameters(spec)) continue;
    const Shape ws = weight_shape(spec);
    const std::size_t fan_in = shape_size(ws) / ws[0];
    const double bound = std::sqrt(6.0) / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : net.weight(i).data()) w = dist(rng);
  }
  return net;
}

// Reference architecture with a global-average-pool head, so class
// activation maps can be read straight off the final dense weights.
inline std::vector<LayerSpec> gapnet_specs(std::size_t classes,
                                           std::size_t in_channels = 1) {
  return {Conv2D{in_channels, 8, 3, 2, 1}, ReLU{}, MaxPool{2, 2},
          Conv2D{8, 16, 3, 2, 1},          ReLU{}, GlobalAvgPool{},
          Dense{16, classes}};
}

// Same convolutional trunk as GapNet with a flatten + dense head.
// `input_side` is the square input extent.
inline std::vector<LayerSpec> plainnet_specs(std::size_t classes,
                                             std::size_t input_side,
                                             std::size_t in_channels = 1) {
  std::vector<LayerSpec> specs = {Conv2D{in_channels, 8, 3, 2, 1}, ReLU{},
                                  MaxPool{2, 2}, Conv2D{8, 16, 3, 2, 1},
                                  ReLU{}, Flatten{}};
  Shape shape = {in_channels, input_side, input_side};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    shape = infer_output_shape(specs[i], shape, i);
  }
  specs.push_back(Dense{shape[0], classes});
  return specs;
}

// Cached activations of one forward pass. activations[0] is the input and
// activations[i + 1] is the output of layer i.
struct ForwardTrace {
  std::vector<Tensor> activations;
  std::vector<double> logits;
  std::vector<double> probabilities;

  const Tensor& input() const { return activations.front(); }
  const Tensor& layer_output(std::size_t i) const { return activations.at(i + 1); }
};

// Max-shifted softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax of an empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline ForwardTrace network_forward(const Network& net, const Tensor& input) {
  require_shape(input, net.input_shape(), "network input");
  ForwardTrace trace;
  trace.activations.reserve(net.num_layers() + 1);
  trace.activations.push_back(input);
  for (const Layer& layer : net.layers()) {
    trace.activations.push_back(layer_forward(layer, trace.activations.back()));
  }
  const Tensor& out = trace.activations.back();
  trace.logits.assign(out.data().begin(), out.data().end());
  trace.probabilities = softmax(trace.logits);
  return trace;
}

// Which class score a gradient or attribution is taken of.
enum class ScoreSource { kLogit, kProbability };

inline const char* score_source_name(ScoreSource s) {
  return s == ScoreSource::kLogit ? "logit" : "probability";
}

inline double class_score(const ForwardTrace& trace, std::size_t class_index,
                          ScoreSource source) {
  return source == ScoreSource::kLogit ? trace.logits.at(class_index)
                                       : trace.probabilities.at(class_index);
}

inline double class_score(const Network& net, const Tensor& input,
                          std::size_t class_index, ScoreSource source) {
  return class_score(network_forward(net, input), class_index, source);
}

// Gradient target: the network input or the output activation of a layer.
struct GradTarget {
  std::optional<std::size_t> layer_index;

  static GradTarget input() { return {}; }
  static GradTarget layer(std::size_t i) { return {i}; }
};

namespace detail {

inline std::vector<double> score_seed(const ForwardTrace& trace,
                                      std::size_t class_index,
                                      ScoreSource source) {
  const std::size_t m = trace.logits.size();
  std::vector<double> seed(m, 0.0);
  if (source == ScoreSource::kLogit) {
    seed[class_index] = 1.0;
  } else {
    // dP_c / dS_j = P_c (delta_cj - P_j)
    const double pc = trace.probabilities[class_index];
    for (std::size_t j = 0; j < m; ++j) {
      seed[j] = pc * ((j == class_index ? 1.0 : 0.0) - trace.probabilities[j]);
    }
  }
  return seed;
}

}  // namespace detail

// d(class score)/d(target activation), same shape as the target.
inline Tensor backward_from_class(const Network& net, const ForwardTrace& trace,
                                  std::size_t class_index,
                                  GradTarget target = GradTarget::input(),
                                  ScoreSource source = ScoreSource::kLogit) {
  if (class_index >= net.num_classes()) {
    throw ValidationError("class index " + std::to_string(class_index) +
                          " out of range for " +
                          std::to_string(net.num_classes()) + " classes");
  }
  if (trace.activations.size() != net.num_layers() + 1) {
    throw ValidationError("trace does not belong to this network");
  }
  std::size_t stop = 0;  // gradient wanted w.r.t. activations[stop]
  if (target.layer_index) {
    if (*target.layer_index >= net.num_layers()) {
      throw ValidationError("layer index " + std::to_string(*target.layer_index) +
                            " out of range");
    }
    stop = *target.layer_index + 1;
  }
  const auto seed = detail::score_seed(trace, class_index, source);
  Tensor grad(net.layer(net.num_layers() - 1).output_shape, seed);
  for (std::size_t i = net.num_layers(); i > stop; --i) {
    grad = layer_backward(net.layer(i - 1), trace.activations[i - 1], grad,
                          nullptr, true);
  }
  return grad;
}

// Parameter gradients of sum_j grad_logits[j] * S_j, accumulated into
// `grads` (one entry per layer; empty for parameter-free layers).
inline void accumulate_parameter_gradients(const Network& net,
                                           const ForwardTrace& trace,
                                           std::span<const double> grad_logits,
                                           std::vector<LayerGrads>& grads) {
  Tensor grad(net.layer(net.num_layers() - 1).output_shape,
              std::vector<double>(grad_logits.begin(), grad_logits.end()));
  for (std::size_t i = net.num_layers(); i > 0; --i) {
    const Layer& layer = net.layer(i - 1);
    LayerGrads* slot = has_parameters(layer.spec) ? &grads[i - 1] : nullptr;
    // Input gradients are only needed while a parameterized layer remains below.
    bool below = false;
    for (std::size_t j = 0; j + 1 < i; ++j) below |= has_parameters(net.layer(j).spec);
    grad = layer_backward(layer, trace.activations[i - 1], grad, slot, below);
    if (!below) break;
  }
}

inline std::vector<LayerGrads> zero_gradients(const Network& net) {
  std::vector<LayerGrads> grads(net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    if (has_parameters(net.layer(i).spec)) {
      grads[i].weight = Tensor(net.layer(i).weight.shape());
      grads[i].bias = Tensor(net.layer(i).bias.shape());
    }
  }
  return grads;
}

// Central differences of the class score w.r.t. every input element,
// using forward passes only.
inline Tensor finite_difference_gradient(const Network& net, const Tensor& input,
                                         std::size_t class_index, double step,
                                         ScoreSource source = ScoreSource::kLogit) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be > 0");
  if (class_index >= net.num_classes()) {
    throw ValidationError("class index out of range");
  }
  Tensor grad(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double v = input[i];
    probe[i] = v + step;
    const double up = class_score(net, probe, class_index, source);
    probe[i] = v - step;
    const double down = class_score(net, probe, class_index, source);
    probe[i] = v;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

struct Prediction {
  std::size_t class_index = 0;
  double probability = 0.0;
};

// Argmax of the probabilities; ties go to the lowest index.
inline Prediction predict(const Network& net, const Tensor& image) {
  const ForwardTrace trace = network_forward(net, image);
  Prediction p{0, trace.probabilities[0]};
  for (std::size_t c = 1; c < trace.probabilities.size(); ++c) {
    if (trace.probabilities[c] > p.probability) p = {c, trace.probabilities[c]};
  }
  return p;
}

// Reorders the output channels of Conv2D layer `layer_index` so that new
// channel k is old channel permutation[k], and reorders the matching input
// slices of the next parameterized layer. The result computes the same
// function up to floating-point summation order.
inline Network permute_channels(const Network& net, std::size_t layer_index,
                                std::span<const std::size_t> permutation) {
  if (layer_index >= net.num_layers()) {
    throw ValidationError("layer index " + std::to_string(layer_index) +
                          " out of range");
  }
  const auto* conv = std::get_if<Conv2D>(&net.layer(layer_index).spec);
  if (!conv) {
    throw ValidationError("permute_channels: layer " +
                          std::to_string(layer_index) + " is " +
                          layer_name(net.layer(layer_index).spec) +
                          ", expected Conv2D");
  }
  const std::size_t channels = conv->out_channels;
  if (permutation.size() != channels) {
    throw ValidationError("permutation has length " +
                          std::to_string(permutation.size()) + ", expected " +
                          std::to_string(channels));
  }
  std::vector<bool> seen(channels, false);
  for (std::size_t p : permutation) {
    if (p >= channels || seen[p]) {
      throw ValidationError("permutation is not a bijection on " +
                            std::to_string(channels) + " channels");
    }
    seen[p] = true;
  }

  Network out = net;
  {
    const Tensor& w = net.layer(layer_index).weight;
    const Tensor& b = net.layer(layer_index).bias;
    const std::size_t block = w.size() / channels;
    Tensor nw(w.shape()), nb(b.shape());
    for (std::size_t k = 0; k < channels; ++k) {
      std::copy_n(&w[permutation[k] * block], block, &nw[k * block]);
      nb[k] = b[permutation[k]];
    }
    out.set_parameters(layer_index, std::move(nw), std::move(nb));
  }

  // Layers between here and the next parameterized layer are channel-wise
  // (ReLU, MaxPool) or fold channels into blocks (GlobalAvgPool, Flatten).
  for (std::size_t j = layer_index + 1; j < net.num_layers(); ++j) {
    const Layer& next = net.layer(j);
    if (!has_parameters(next.spec)) continue;
    const Tensor& w = next.weight;
    Tensor nw(w.shape());
    const std::size_t rows = w.extent(0);
    const std::size_t row_len = w.size() / rows;
    // Each weight row splits into `channels` contiguous blocks, one per
    // incoming channel (kernel taps for Conv2D, spatial cells after Flatten).
    const std::size_t block = row_len / channels;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < channels; ++k) {
        std::copy_n(&w[r * row_len + permutation[k] * block], block,
                    &nw[r * row_len + k * block]);
      }
    }
    out.set_parameters(j, std::move(nw), next.bias);
    break;
  }
  return out;
}

}  // namespace salmap

#endif  // SALMAP_NETWORK_HPP_
