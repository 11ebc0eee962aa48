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

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "salmap/pgm.hpp"
#include "salmap/train.hpp"
#include "salmap/weights_io.hpp"

namespace salmap {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  std::filesystem::create_directories(SALMAP_TEST_TMPDIR);
  return std::filesystem::path(SALMAP_TEST_TMPDIR) / name;
}

// Bright-left (class 0) versus bright-right (class 1), 12x12.
std::vector<Example> toy_left_right(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bright(0.6, 1.0), dark(0.0, 0.4);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    Tensor img({1, 12, 12});
    for (std::size_t y = 0; y < 12; ++y) {
      for (std::size_t x = 0; x < 12; ++x) {
        const bool left = x < 6;
        img.at(0, y, x) = (left == (label == 0)) ? bright(rng) : dark(rng);
      }
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

// Hand-written linear rule: sign of (left sum - right sum).
std::size_t linear_oracle(const Tensor& img) {
  double s = 0.0;
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 12; ++x) s += (x < 6 ? 1.0 : -1.0) * img.at(0, y, x);
  }
  return s > 0 ? 0 : 1;
}

TEST(NetworkConstruction, ReferenceArchitectures) {
  const Network gap(gapnet_specs(4), {1, 64, 64});
  EXPECT_EQ(gap.num_layers(), 7u);
  EXPECT_EQ(gap.num_classes(), 4u);
  EXPECT_EQ(gap.layer(4).output_shape, (Shape{16, 8, 8}));
  EXPECT_EQ(gap.layer(5).output_shape, (Shape{16}));
  const Network plain(plainnet_specs(4, 64), {1, 64, 64});
  EXPECT_EQ(plain.layer(5).output_shape, (Shape{16 * 8 * 8}));
  EXPECT_EQ(plain.num_classes(), 4u);
}

TEST(NetworkConstruction, ShapeErrorsNameTheLayer) {
  try {
    Network({Flatten{}, Dense{5, 2}}, {1, 2, 2});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.layer_index(), 1u);
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  EXPECT_NO_THROW(Network({Flatten{}, Dense{4, 2}}, {1, 2, 2}));
  EXPECT_THROW(Network({Conv2D{2, 4, 3, 1, 1}, Flatten{}}, {1, 8, 8}), ShapeError);
  EXPECT_THROW(Network({}, {1, 8, 8}), ValidationError);
}

TEST(NetworkConstruction, SeededInitIsReproducible) {
  const Network a = build_network(gapnet_specs(4), {1, 32, 32}, 3);
  const Network b = build_network(gapnet_specs(4), {1, 32, 32}, 3);
  const Network c = build_network(gapnet_specs(4), {1, 32, 32}, 4);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(CrossEntropy, ClosedForm) {
  const std::vector<double> z = {1.0, 2.0, 0.5};
  const double expect = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(0.5)));
  EXPECT_NEAR(cross_entropy(z, 1), expect, 1e-14);
  const std::vector<double> big = {1000.0, 0.0};
  EXPECT_NEAR(cross_entropy(big, 1), 1000.0, 1e-9);
}

TEST(TrainSgd, ZeroLearningRateKeepsParametersBitwise) {
  const auto data = toy_left_right(20, 1);
  const Network init = build_network(plainnet_specs(2, 12), {1, 12, 12}, 7);
  TrainConfig config;
  config.learning_rate = 0.0;
  config.epochs = 3;
  config.batch_size = 4;
  const TrainResult r = train_sgd(init, data, config);
  EXPECT_TRUE(r.network == init);
  EXPECT_EQ(r.epoch_losses.size(), 3u);
}

TEST(TrainSgd, ToySeparableSetReachesFullAccuracy) {
  const auto data = toy_left_right(40, 2);
  for (const Example& ex : data) ASSERT_EQ(linear_oracle(ex.image), ex.label);
  const Network init = build_network(plainnet_specs(2, 12), {1, 12, 12}, 0);
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 8;
  const TrainResult r = train_sgd(init, data, config);
  EXPECT_EQ(accuracy(r.network, data), 1.0);
  EXPECT_LE(r.epoch_losses.back(), r.epoch_losses.front());
  for (const Example& ex : data) {
    EXPECT_EQ(predict(r.network, ex.image).class_index, linear_oracle(ex.image));
  }
}

TEST(TrainSgd, WorkerCountDoesNotChangeResult) {
  const auto data = toy_left_right(24, 3);
  const Network init = build_network(gapnet_specs(2), {1, 12, 12}, 1);
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 5;
  config.seed = 9;
  const TrainResult one = train_sgd(init, data, config);
  config.workers = 3;
  const TrainResult three = train_sgd(init, data, config);
  EXPECT_TRUE(one.network == three.network);
  EXPECT_EQ(one.epoch_losses, three.epoch_losses);
  config.seed = 10;
  EXPECT_FALSE(train_sgd(init, data, config).network == one.network);
}

TEST(TrainSgd, RejectsBadConfigs) {
  const auto data = toy_left_right(6, 4);
  const Network init = build_network(plainnet_specs(2, 12), {1, 12, 12}, 0);
  TrainConfig config;
  config.batch_size = 7;
  EXPECT_THROW(train_sgd(init, data, config), ValidationError);
  config.batch_size = 2;
  config.learning_rate = -1;
  EXPECT_THROW(train_sgd(init, data, config), ValidationError);
  config.learning_rate = 0.1;
  config.epochs = 0;
  EXPECT_THROW(train_sgd(init, data, config), ValidationError);
  auto wrong = data;
  wrong[2].label = 5;
  config.epochs = 1;
  EXPECT_THROW(train_sgd(init, wrong, config), ValidationError);
}

TEST(TrainSgd, NonFiniteLossNamesEpochAndBatch) {
  const auto data = toy_left_right(8, 5);
  const Network init = build_network(plainnet_specs(2, 12), {1, 12, 12}, 0);
  TrainConfig config;
  config.learning_rate = 1e300;
  config.epochs = 5;
  config.batch_size = 2;
  try {
    train_sgd(init, data, config);
    FAIL() << "expected RuntimeFailure";
  } catch (const RuntimeFailure& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos);
    EXPECT_NE(msg.find("batch"), std::string::npos);
  }
}

TEST(Predict, ArgmaxWithLowestIndexOnTies) {
  Network net({Flatten{}, Dense{4, 3}}, {1, 2, 2});
  const Prediction p = predict(net, Tensor({1, 2, 2}, 0.5));
  EXPECT_EQ(p.class_index, 0u);
  EXPECT_NEAR(p.probability, 1.0 / 3.0, 1e-15);
}

TEST(PermuteChannels, PreservesPredictions) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& specs : {gapnet_specs(3), plainnet_specs(3, 24)}) {
    const Network net = build_network(specs, {1, 24, 24}, 6);
    std::vector<std::size_t> p1(8), p2(16);
    std::iota(p1.begin(), p1.end(), std::size_t{0});
    std::iota(p2.begin(), p2.end(), std::size_t{0});
    std::shuffle(p1.begin(), p1.end(), rng);
    std::shuffle(p2.begin(), p2.end(), rng);
    const Network permuted = permute_channels(permute_channels(net, 0, p1), 3, p2);
    EXPECT_FALSE(permuted == net);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x({1, 24, 24});
      for (double& v : x.data()) v = u(rng);
      const Prediction a = predict(net, x), b = predict(permuted, x);
      EXPECT_EQ(a.class_index, b.class_index);
      EXPECT_NEAR(a.probability, b.probability, 1e-12);
    }
  }
}

TEST(PermuteChannels, RejectsInvalidPermutations) {
  const Network net = build_network(gapnet_specs(3), {1, 24, 24}, 6);
  const std::vector<std::size_t> short_perm = {0, 1, 2};
  EXPECT_THROW(permute_channels(net, 0, short_perm), ValidationError);
  const std::vector<std::size_t> repeated = {0, 0, 1, 2, 3, 4, 5, 6};
  EXPECT_THROW(permute_channels(net, 0, repeated), ValidationError);
  const std::vector<std::size_t> ident = {0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_THROW(permute_channels(net, 1, ident), ValidationError);
  EXPECT_TRUE(permute_channels(net, 0, ident) == net);
}

TEST(WeightsIo, RoundTripPreservesLogitsBitwise) {
  const Network net = build_network(gapnet_specs(4), {1, 32, 32}, 13);
  const auto path = temp_path("roundtrip.smlw");
  save_weights(net, path.string());
  const Network back = load_weights(path.string());
  EXPECT_TRUE(back == net);
  Tensor x({1, 32, 32});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : x.data()) v = u(rng);
  const auto a = network_forward(net, x).logits, b = network_forward(back, x).logits;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
  }
}

TEST(WeightsIo, HeaderLayout) {
  const Network net({Flatten{}, Dense{4, 2}}, {1, 2, 2});
  const std::string bytes = serialize_weights(net);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "SMLW");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0);
  // 8 header + 13 input shape + 2 flatten + 2+8+8*8 dense weights + 2*8 bias
  EXPECT_EQ(bytes.size(), 8u + 13u + 2u + 10u + 64u + 16u);
}

TEST(WeightsIo, CorruptFilesAreRejectedWithOffset) {
  const Network net = build_network(gapnet_specs(2), {1, 16, 16}, 0);
  const std::string good = serialize_weights(net);
  const std::vector<unsigned char> ok(good.begin(), good.end());
  EXPECT_TRUE(parse_weights(ok, "mem") == net);

  auto truncated = ok;
  truncated.resize(ok.size() - 3);
  try {
    parse_weights(truncated, "mem");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 8u);
  }
  auto magic = ok;
  magic[0] = 'X';
  EXPECT_THROW(parse_weights(magic, "mem"), FormatError);
  auto version = ok;
  version[4] = 9;
  EXPECT_THROW(parse_weights(version, "mem"), FormatError);
  auto trailing = ok;
  trailing.push_back(0);
  EXPECT_THROW(parse_weights(trailing, "mem"), FormatError);
  EXPECT_THROW(parse_weights({}, "mem"), FormatError);
  EXPECT_THROW(load_weights(temp_path("missing.smlw").string()), ValidationError);
}

}  // namespace
}  // namespace salmap
