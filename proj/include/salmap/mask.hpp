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

#ifndef SALMAP_MASK_HPP_
#define SALMAP_MASK_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "salmap/errors.hpp"

namespace salmap {

// Binary pixel mask, row-major.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  bool test(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x) { bits[y * width + x] = 1; }
  std::size_t size() const { return bits.size(); }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
  }
  bool empty() const { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline void require_same_extent(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("mask extents differ");
  }
}

inline Mask mask_union(std::span<const Mask> masks) {
  if (masks.empty()) throw ValidationError("union of an empty mask list");
  Mask out(masks[0].height, masks[0].width);
  for (const Mask& m : masks) {
    require_same_extent(out, m);
    for (std::size_t i = 0; i < m.size(); ++i) out.bits[i] |= m.bits[i];
  }
  return out;
}

inline std::size_t intersection_count(const Mask& a, const Mask& b) {
  require_same_extent(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a.bits[i] && b.bits[i]) ? 1 : 0;
  return n;
}

// Square (Chebyshev) dilation.
inline Mask dilate(const Mask& m, std::size_t radius) {
  Mask out(m.height, m.width);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.test(y, x)) continue;
      const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - r);
      const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(m.height) - 1, static_cast<std::ptrdiff_t>(y) + r);
      const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - r);
      const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(m.width) - 1, static_cast<std::ptrdiff_t>(x) + r);
      for (std::ptrdiff_t yy = y0; yy <= y1; ++yy) {
        for (std::ptrdiff_t xx = x0; xx <= x1; ++xx) {
          out.set(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        }
      }
    }
  }
  return out;
}

}  // namespace salmap

#endif  // SALMAP_MASK_HPP_
