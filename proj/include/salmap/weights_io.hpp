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

#ifndef SALMAP_WEIGHTS_IO_HPP_
#define SALMAP_WEIGHTS_IO_HPP_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "salmap/network.hpp"
#include "salmap/pgm.hpp"

namespace salmap {

// "SMLW" weight file, all integers little-endian:
//   magic "SMLW" | version u16 | layer count u16
//   input rank u8 | input extents u32...
//   per layer: kind u8 | rank u8 | extents u32... | parameters f64...
// Layer extents are the layer's hyperparameters:
//   Conv2D [in, out, kernel, stride, padding], MaxPool [window, stride],
//   Dense [in, out], ReLU / GlobalAvgPool / Flatten [].
// Parameters (Conv2D, Dense only) are the weights then the bias, row-major.
inline constexpr char kWeightsMagic[4] = {'S', 'M', 'L', 'W'};
inline constexpr std::uint16_t kWeightsVersion = 1;

namespace weights_detail {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(std::size_t width, const char* what) {
    if (bytes_.size() - pos_ < width) {
      throw FormatError(path_, pos_, std::string("truncated file while reading ") + what);
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(uint(8, what)); }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint32_t> layer_extents(const LayerSpec& spec) {
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  if (const auto* c = std::get_if<Conv2D>(&spec)) {
    return {u(c->in_channels), u(c->out_channels), u(c->kernel_size), u(c->stride), u(c->padding)};
  }
  if (const auto* p = std::get_if<MaxPool>(&spec)) return {u(p->window), u(p->stride)};
  if (const auto* d = std::get_if<Dense>(&spec)) return {u(d->in_features), u(d->out_features)};
  return {};
}

}  // namespace weights_detail

inline std::string serialize_weights(const Network& net) {
  weights_detail::Writer w;
  w.raw(kWeightsMagic, 4);
  w.u16(kWeightsVersion);
  if (net.num_layers() > 0xffff) throw ValidationError("too many layers to serialize");
  w.u16(static_cast<std::uint16_t>(net.num_layers()));
  w.u8(static_cast<std::uint8_t>(net.input_shape().size()));
  for (std::size_t e : net.input_shape()) w.u32(static_cast<std::uint32_t>(e));
  for (const Layer& layer : net.layers()) {
    w.u8(static_cast<std::uint8_t>(layer_kind(layer.spec)));
    const auto extents = weights_detail::layer_extents(layer.spec);
    w.u8(static_cast<std::uint8_t>(extents.size()));
    for (std::uint32_t e : extents) w.u32(e);
    if (has_parameters(layer.spec)) {
      for (double v : layer.weight.data()) w.f64(v);
      for (double v : layer.bias.data()) w.f64(v);
    }
  }
  return w.bytes();
}

inline void save_weights(const Network& net, const std::string& path) {
  write_file_bytes(path, serialize_weights(net));
}

inline Network parse_weights(const std::vector<unsigned char>& bytes, const std::string& path) {
  using weights_detail::Reader;
  if (bytes.size() < 4 || !std::equal(kWeightsMagic, kWeightsMagic + 4, bytes.begin())) {
    throw FormatError(path, 0, "bad magic, expected SMLW weight file");
  }
  Reader r(bytes, path);
  r.uint(4, "magic");
  const std::size_t version_at = r.offset();
  const auto version = r.uint(2, "version");
  if (version != kWeightsVersion) {
    throw FormatError(path, version_at, "unsupported format version " + std::to_string(version));
  }
  const auto layer_count = static_cast<std::size_t>(r.uint(2, "layer count"));
  if (layer_count == 0) throw FormatError(path, r.offset() - 2, "zero layers");
  const auto input_rank = static_cast<std::size_t>(r.uint(1, "input rank"));
  Shape input;
  for (std::size_t i = 0; i < input_rank; ++i) input.push_back(r.uint(4, "input extent"));

  std::vector<LayerSpec> specs;
  std::vector<std::size_t> layer_offsets;
  for (std::size_t li = 0; li < layer_count; ++li) {
    layer_offsets.push_back(r.offset());
    const auto kind = static_cast<LayerKind>(r.uint(1, "layer kind"));
    const std::size_t rank_at = r.offset();
    const auto rank = static_cast<std::size_t>(r.uint(1, "layer rank"));
    std::vector<std::size_t> e;
    for (std::size_t i = 0; i < rank; ++i) e.push_back(r.uint(4, "layer extent"));
    auto expect_rank = [&](std::size_t n) {
      if (rank != n) {
        throw FormatError(path, rank_at, "layer " + std::to_string(li) + " has rank " +
                                             std::to_string(rank) + ", expected " +
                                             std::to_string(n));
      }
    };
    switch (kind) {
      case LayerKind::kConv2D: expect_rank(5); specs.push_back(Conv2D{e[0], e[1], e[2], e[3], e[4]}); break;
      case LayerKind::kReLU: expect_rank(0); specs.push_back(ReLU{}); break;
      case LayerKind::kMaxPool: expect_rank(2); specs.push_back(MaxPool{e[0], e[1]}); break;
      case LayerKind::kGlobalAvgPool: expect_rank(0); specs.push_back(GlobalAvgPool{}); break;
      case LayerKind::kFlatten: expect_rank(0); specs.push_back(Flatten{}); break;
      case LayerKind::kDense: expect_rank(2); specs.push_back(Dense{e[0], e[1]}); break;
      default:
        throw FormatError(path, layer_offsets.back(),
                          "unknown layer kind " + std::to_string(static_cast<int>(kind)));
    }
    if (has_parameters(specs.back())) {
      const std::size_t n = shape_size(weight_shape(specs.back())) +
                            shape_size(bias_shape(specs.back()));
      if (bytes.size() - r.offset() < n * 8) {
        throw FormatError(path, bytes.size(),
                          "truncated parameters for layer " + std::to_string(li) + ": need " +
                              std::to_string(n * 8) + " bytes");
      }
      for (std::size_t i = 0; i < n; ++i) r.f64("parameter");
    }
  }
  if (!r.at_end()) {
    throw FormatError(path, r.offset(), "trailing bytes after the last layer");
  }

  Network net = [&] {
    try {
      return Network(specs, input);
    } catch (const ShapeError& e) {
      const std::size_t at = e.layer_index() < layer_offsets.size()
                                 ? layer_offsets[e.layer_index()]
                                 : 0;
      throw FormatError(path, at, std::string("header describes an inconsistent network: ") + e.what());
    }
  }();

  // Second pass: copy parameters now that shapes are known to be consistent.
  Reader p(bytes, path);
  p.skip(4 + 2 + 2 + 1 + 4 * input_rank);
  for (std::size_t li = 0; li < layer_count; ++li) {
    p.uint(1, "kind");
    const auto rank = static_cast<std::size_t>(p.uint(1, "rank"));
    for (std::size_t i = 0; i < rank; ++i) p.uint(4, "extent");
    if (!has_parameters(specs[li])) continue;
    Tensor weight(weight_shape(specs[li])), bias(bias_shape(specs[li]));
    for (double& v : weight.data()) v = p.f64("weight");
    for (double& v : bias.data()) v = p.f64("bias");
    net.set_parameters(li, std::move(weight), std::move(bias));
  }
  return net;
}

inline Network load_weights(const std::string& path) {
  return parse_weights(read_file_bytes(path), path);
}

}  // namespace salmap

#endif  // SALMAP_WEIGHTS_IO_HPP_
