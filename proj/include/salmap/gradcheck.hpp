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

#ifndef SALMAP_GRADCHECK_HPP_
#define SALMAP_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "salmap/network.hpp"

namespace salmap {

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  require_shape(b, a.shape(), "relative error operand");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

struct GradCheckResult {
  std::string name;
  std::size_t cases = 0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::size_t resampled = 0;  // draws discarded for sitting near a kink
};

struct GradCheckOptions {
  std::size_t cases_per_layer_kind = 100;
  std::size_t cases_per_model = 100;
  std::size_t model_input_side = 16;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Cases with a ReLU input or a MaxPool top-two gap closer than this to a
  // kink are redrawn.
  double kink_margin = 1e-4;
};

namespace gradcheck_detail {

struct Case {
  Network net;
  Tensor input;
  std::size_t class_index;
  ScoreSource source;
};

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

// A small random network whose behaviour is dominated by one layer kind.
inline Case make_layer_case(LayerKind kind, std::mt19937_64& rng) {
  const std::size_t classes = pick(rng, 2, 4);
  const std::size_t c = pick(rng, 1, 3), h = pick(rng, 4, 7), w = pick(rng, 4, 7);
  const Shape in = {c, h, w};
  std::vector<LayerSpec> specs;
  switch (kind) {
    case LayerKind::kConv2D: {
      const std::size_t k = pick(rng, 1, 3);
      specs = {Conv2D{c, pick(rng, 1, 3), k, pick(rng, 1, 2), pick(rng, 0, 1)}, Flatten{}};
      break;
    }
    case LayerKind::kReLU: specs = {ReLU{}, Flatten{}}; break;
    case LayerKind::kMaxPool: specs = {MaxPool{pick(rng, 2, 3), pick(rng, 1, 2)}, Flatten{}}; break;
    case LayerKind::kGlobalAvgPool: specs = {GlobalAvgPool{}}; break;
    case LayerKind::kFlatten: specs = {Flatten{}}; break;
    case LayerKind::kDense: specs = {Flatten{}, Dense{c * h * w, 5}, ReLU{}}; break;
  }
  // Close with a dense head onto the class logits.
  Shape out = in;
  for (std::size_t i = 0; i < specs.size(); ++i) out = infer_output_shape(specs[i], out, i);
  specs.push_back(Dense{out[0], classes});
  Case cs{build_network(specs, in, rng()), random_tensor(in, rng, -1.0, 1.0),
          pick(rng, 0, classes - 1),
          rng() % 2 ? ScoreSource::kLogit : ScoreSource::kProbability};
  return cs;
}

// Smallest distance from the evaluation point to a non-differentiable
// point of any ReLU or MaxPool in the network. Exact pooling ties (ReLU
// zeros) are skipped.
inline double kink_distance(const Network& net, const Tensor& input) {
  const ForwardTrace trace = network_forward(net, input);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Tensor& x = trace.activations[i];
    if (std::holds_alternative<ReLU>(net.layer(i).spec)) {
      for (double v : x.data()) best = std::min(best, std::abs(v));
    } else if (const auto* pool = std::get_if<MaxPool>(&net.layer(i).spec)) {
      const Shape& out = net.layer(i).output_shape;
      for (std::size_t c = 0; c < out[0]; ++c) {
        for (std::size_t oy = 0; oy < out[1]; ++oy) {
          for (std::size_t ox = 0; ox < out[2]; ++ox) {
            double top = -std::numeric_limits<double>::infinity(), second = top;
            for (std::size_t ky = 0; ky < pool->window; ++ky) {
              for (std::size_t kx = 0; kx < pool->window; ++kx) {
                const double v = x.at(c, oy * pool->stride + ky, ox * pool->stride + kx);
                if (v > top) {
                  second = top;
                  top = v;
                } else if (v > second && v < top) {
                  second = v;
                }
              }
            }
            best = std::min(best, top - second);
          }
        }
      }
    }
  }
  return best;
}

inline GradCheckResult run_cases(const std::string& name, std::size_t count,
                                 const std::function<Case()>& make,
                                 const GradCheckOptions& options) {
  GradCheckResult r{name, count, 0.0, true, 0};
  for (std::size_t i = 0; i < count; ++i) {
    Case cs = make();
    while (kink_distance(cs.net, cs.input) <= options.kink_margin) {
      if (++r.resampled > 100 * count) throw RuntimeFailure(name + ": cannot draw kink-free cases");
      cs = make();
    }
    const ForwardTrace trace = network_forward(cs.net, cs.input);
    const Tensor analytic =
        backward_from_class(cs.net, trace, cs.class_index, GradTarget::input(), cs.source);
    const Tensor numeric =
        finite_difference_gradient(cs.net, cs.input, cs.class_index, options.step, cs.source);
    r.max_rel_error = std::max(r.max_rel_error, max_relative_error(analytic, numeric));
  }
  r.passed = r.max_rel_error <= options.tolerance;
  return r;
}

}  // namespace gradcheck_detail

// Compares backward_from_class against central differences for every layer
// kind (on small random networks built around it) and for the GapNet and
// PlainNet reference models.
inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed,
                                                  const GradCheckOptions& options = {}) {
  using namespace gradcheck_detail;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> results;
  const std::pair<LayerKind, const char*> kinds[] = {
      {LayerKind::kConv2D, "Conv2D"},   {LayerKind::kReLU, "ReLU"},
      {LayerKind::kMaxPool, "MaxPool"}, {LayerKind::kGlobalAvgPool, "GlobalAvgPool"},
      {LayerKind::kFlatten, "Flatten"}, {LayerKind::kDense, "Dense"}};
  for (const auto& [kind, name] : kinds) {
    results.push_back(run_cases(name, options.cases_per_layer_kind,
                                [&, kind = kind] { return make_layer_case(kind, rng); }, options));
  }
  const std::size_t side = options.model_input_side;
  const Shape in = {1, side, side};
  auto model_case = [&](const std::vector<LayerSpec>& specs) {
    return Case{build_network(specs, in, rng()), random_tensor(in, rng, 0.0, 1.0),
                static_cast<std::size_t>(rng() % 4),
                rng() % 2 ? ScoreSource::kLogit : ScoreSource::kProbability};
  };
  results.push_back(run_cases("GapNet", options.cases_per_model,
                              [&] { return model_case(gapnet_specs(4)); }, options));
  results.push_back(run_cases("PlainNet", options.cases_per_model,
                              [&] { return model_case(plainnet_specs(4, side)); }, options));
  return results;
}

}  // namespace salmap

#endif  // SALMAP_GRADCHECK_HPP_
