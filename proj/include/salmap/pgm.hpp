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

#ifndef SALMAP_PGM_HPP_
#define SALMAP_PGM_HPP_

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include "salmap/attribution.hpp"
#include "salmap/mask.hpp"
#include "salmap/tensor.hpp"

namespace salmap {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure(path + ": write failed");
}

// Raw P5 samples before scaling.
struct PgmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t maxval = 0;
  std::vector<std::uint16_t> samples;
};

namespace pgm_detail {

class HeaderCursor {
 public:
  HeaderCursor(const std::vector<unsigned char>& bytes, const std::string& path,
               std::size_t start)
      : bytes_(bytes), path_(path), pos_(start) {}

  std::size_t offset() const { return pos_; }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 100'000'000) throw FormatError(path_, start, std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(path_, start, std::string("expected ") + what);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError(path_, pos_, "expected a whitespace byte before the raster");
    }
    ++pos_;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::string& path_;
  std::size_t pos_;
};

}  // namespace pgm_detail

inline PgmImage read_pgm_samples(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 2) throw FormatError(path, 0, "file too short for a PGM header");
  if (bytes[0] != 'P' || bytes[1] != '5') {
    if (bytes[0] == 'P' && bytes[1] == '2') {
      throw FormatError(path, 0, "ASCII PGM (P2) is not supported, expected binary P5");
    }
    throw FormatError(path, 0, "bad magic, expected P5");
  }
  pgm_detail::HeaderCursor cur(bytes, path, 2);
  PgmImage img;
  const std::size_t width_at = cur.offset();
  img.width = cur.number("width");
  img.height = cur.number("height");
  if (img.width == 0 || img.height == 0) throw FormatError(path, width_at, "zero image extent");
  const std::size_t maxval_at = cur.offset();
  img.maxval = cur.number("maxval");
  if (img.maxval == 0 || img.maxval > 65535) {
    throw FormatError(path, maxval_at, "maxval must be in 1..65535");
  }
  cur.single_whitespace();
  const std::size_t bytes_per = img.maxval < 256 ? 1 : 2;
  const std::size_t start = cur.offset();
  const std::size_t need = img.width * img.height * bytes_per;
  if (bytes.size() - start < need) {
    throw FormatError(path, bytes.size(),
                      "truncated raster: expected " + std::to_string(need) + " bytes, found " +
                          std::to_string(bytes.size() - start));
  }
  img.samples.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    std::uint16_t v = bytes[start + i * bytes_per];
    if (bytes_per == 2) v = static_cast<std::uint16_t>((v << 8) | bytes[start + i * bytes_per + 1]);
    if (v > img.maxval) {
      throw FormatError(path, start + i * bytes_per, "sample exceeds maxval");
    }
    img.samples[i] = v;
  }
  return img;
}

// Reads a binary PGM as a [1, H, W] tensor scaled to [0, 1] by maxval.
inline Tensor read_pgm(const std::string& path) {
  const PgmImage img = read_pgm_samples(path);
  std::vector<double> data(img.samples.size());
  const auto maxval = static_cast<double>(img.maxval);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = img.samples[i] / maxval;
  return Tensor({1, img.height, img.width}, std::move(data));
}

inline void write_pgm_samples(const PgmImage& img, const std::string& path) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n" + std::to_string(img.maxval) + "\n";
  const bool wide = img.maxval >= 256;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t v : img.samples) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  write_file_bytes(path, out);
}

// Writes a [1, H, W] or [H, W] tensor with values in [0, 1].
inline void write_pgm(const Tensor& image, const std::string& path,
                      std::size_t maxval = 65535) {
  if (maxval == 0 || maxval > 65535) throw ValidationError("maxval must be in 1..65535");
  std::size_t h = 0, w = 0;
  if (image.rank() == 3 && image.extent(0) == 1) {
    h = image.extent(1);
    w = image.extent(2);
  } else if (image.rank() == 2) {
    h = image.extent(0);
    w = image.extent(1);
  } else {
    throw ShapeError("write_pgm expects a single-channel image, got " + shape_string(image.shape()));
  }
  PgmImage img{h, w, maxval, std::vector<std::uint16_t>(h * w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = image[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(path + ": pixel " + std::to_string(i) + " value " +
                            std::to_string(v) + " outside [0, 1]");
    }
    img.samples[i] = static_cast<std::uint16_t>(std::lround(v * static_cast<double>(maxval)));
  }
  write_pgm_samples(img, path);
}

// Masks are stored as 8-bit PGM with values 0 and 255.
inline void write_mask_pgm(const Mask& mask, const std::string& path) {
  PgmImage img{mask.height, mask.width, 255, std::vector<std::uint16_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) img.samples[i] = mask.bits[i] ? 255 : 0;
  write_pgm_samples(img, path);
}

inline Mask read_mask_pgm(const std::string& path) {
  const PgmImage img = read_pgm_samples(path);
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = img.samples[i] * 2 > img.maxval ? 1 : 0;
  return m;
}

// Shortest decimal text that parses back to exactly `v`.
inline std::string exact_decimal(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// One line per row, comma-separated, exact round trip.
inline std::string grid_csv(const Grid& g) {
  std::string out;
  for (std::size_t y = 0; y < g.height; ++y) {
    for (std::size_t x = 0; x < g.width; ++x) {
      if (x) out.push_back(',');
      out += exact_decimal(g.at(y, x));
    }
    out.push_back('\n');
  }
  return out;
}

inline Grid read_grid_csv(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  Grid g;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (end > pos) {
      std::size_t cols = 0;
      const char* p = text.data() + pos;
      const char* stop = text.data() + end;
      while (p < stop) {
        double v = 0.0;
        const auto res = std::from_chars(p, stop, v);
        if (res.ec != std::errc()) {
          throw FormatError(path, static_cast<std::size_t>(p - text.data()), "expected a number");
        }
        g.values.push_back(v);
        ++cols;
        p = res.ptr;
        if (p < stop) {
          if (*p != ',') throw FormatError(path, static_cast<std::size_t>(p - text.data()), "expected ','");
          ++p;
        }
      }
      if (g.height == 0) g.width = cols;
      if (cols != g.width) throw FormatError(path, pos, "ragged row");
      ++g.height;
    }
    pos = end + 1;
  }
  if (g.height == 0) throw FormatError(path, 0, "no values");
  return g;
}

// Min-max normalization to [0, 1]; a constant grid maps to all zeros.
inline std::vector<double> normalize_min_max(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::clamp((values[i] - *lo) / span, 0.0, 1.0);
  }
  return out;
}

struct ExportedFiles {
  std::string raw_csv;
  std::string normalized_pgm;
  std::optional<std::string> overlay_pgm;
};

// Writes <stem>.csv (raw values), <stem>.pgm (min-max normalized, 16-bit)
// and, when a source image is given, <stem>_overlay.pgm with
// 0.5 * image + 0.5 * normalized map.
inline ExportedFiles export_saliency(const Grid& map, const std::string& stem,
                                     const Tensor* source_image = nullptr) {
  for (double v : map.values) {
    if (!std::isfinite(v)) throw ValidationError("cannot export a map with non-finite values");
  }
  ExportedFiles files{stem + ".csv", stem + ".pgm", std::nullopt};
  write_file_bytes(files.raw_csv, grid_csv(map));
  const std::vector<double> norm = normalize_min_max(map.values);
  write_pgm(Tensor({map.height, map.width}, norm), files.normalized_pgm);
  if (source_image) {
    if (source_image->rank() != 3 || source_image->extent(0) != 1 ||
        source_image->extent(1) != map.height || source_image->extent(2) != map.width) {
      throw ShapeError("overlay source image " + shape_string(source_image->shape()) +
                       " does not match map " + std::to_string(map.height) + "x" +
                       std::to_string(map.width));
    }
    std::vector<double> blend(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i) {
      blend[i] = std::clamp(0.5 * (*source_image)[i] + 0.5 * norm[i], 0.0, 1.0);
    }
    files.overlay_pgm = stem + "_overlay.pgm";
    write_pgm(Tensor({map.height, map.width}, std::move(blend)), *files.overlay_pgm);
  }
  return files;
}

inline ExportedFiles export_saliency(const SaliencyMap& map, const std::string& stem,
                                     const Tensor* source_image = nullptr) {
  return export_saliency(Grid{map.height, map.width, map.values}, stem, source_image);
}

}  // namespace salmap

#endif  // SALMAP_PGM_HPP_
