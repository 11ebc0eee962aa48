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

#ifndef SALMAP_TRAIN_HPP_
#define SALMAP_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "salmap/network.hpp"
#include "salmap/parallel.hpp"

namespace salmap {

struct Example {
  Tensor image;
  std::size_t label = 0;
};

struct TrainConfig {
  double learning_rate = 0.2;
  std::size_t epochs = 150;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  // Per-sample gradients within a batch may be computed on this many
  // threads; the reduction order is fixed, so results do not depend on it.
  std::size_t workers = 1;
};

struct TrainResult {
  Network network;
  std::vector<double> epoch_losses;  // mean cross-entropy per epoch
};

// -log softmax(logits)[label], computed via log-sum-exp.
inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - top);
  return std::log(sum) + top - logits[label];
}

// Mini-batch SGD on mean cross-entropy, no momentum. Samples are visited in
// a seeded shuffle per epoch.
inline TrainResult train_sgd(Network net, std::span<const Example> data,
                             const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (config.epochs == 0) throw ValidationError("epochs must be positive");
  if (config.batch_size == 0) throw ValidationError("batch_size must be positive");
  if (data.empty()) throw ValidationError("training set is empty");
  if (config.batch_size > data.size()) {
    throw ValidationError("batch_size " + std::to_string(config.batch_size) +
                          " exceeds dataset size " + std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    require_shape(data[i].image, net.input_shape(),
                  "training example " + std::to_string(i));
    if (data[i].label >= net.num_classes()) {
      throw ValidationError("training example " + std::to_string(i) +
                            " has label " + std::to_string(data[i].label) +
                            " >= class count");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{net, {}};
  Network& model = result.network;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<std::vector<LayerGrads>> sample_grads(count);
      std::vector<double> losses(count);
      parallel_for(count, config.workers, [&](std::size_t s) {
        const Example& ex = data[order[start + s]];
        const ForwardTrace trace = network_forward(model, ex.image);
        losses[s] = cross_entropy(trace.logits, ex.label);
        std::vector<double> dlogits = trace.probabilities;
        dlogits[ex.label] -= 1.0;
        sample_grads[s] = zero_gradients(model);
        accumulate_parameter_gradients(model, trace, dlogits, sample_grads[s]);
      });
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
      }
      epoch_loss += batch_loss;

      const double scale = config.learning_rate / static_cast<double>(count);
      for (std::size_t li = 0; li < model.num_layers(); ++li) {
        if (!has_parameters(model.layer(li).spec)) continue;
        Tensor& w = model.weight(li);
        Tensor& b = model.bias(li);
        for (std::size_t k = 0; k < w.size(); ++k) {
          double g = 0.0;
          for (std::size_t s = 0; s < count; ++s) g += sample_grads[s][li].weight[k];
          w[k] -= scale * g;
        }
        for (std::size_t k = 0; k < b.size(); ++k) {
          double g = 0.0;
          for (std::size_t s = 0; s < count; ++s) g += sample_grads[s][li].bias[k];
          b[k] -= scale * g;
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

inline double accuracy(const Network& net, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Example& ex : data) {
    if (predict(net, ex.image).class_index == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace salmap

#endif  // SALMAP_TRAIN_HPP_
