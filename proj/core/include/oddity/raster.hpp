#pragma once

#include <array>
#include <cstdint>

#include "oddity/geometry.hpp"

namespace oddity {

/// 100x100 8-bit grayscale raster. Backgrounds live in [235,255] and
/// foregrounds in [0,61]; the two bands never overlap, so every pixel of a
/// rendered frame is unambiguously background or figure.
struct Frame {
  static constexpr int kSize = 100;
  static constexpr int kMinBg = 235, kMaxBg = 255;
  static constexpr int kMinFg = 0, kMaxFg = 61;

  std::array<uint8_t, kSize * kSize> pixels{};
  uint8_t bg = 255;
  uint8_t fg = 0;  // level used by the last rasterize call

  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * kSize + x]; }
  uint8_t at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * kSize + x];
  }
};

/// All pixels set to bg. Throws ValueError outside [235,255].
Frame new_frame(int bg);

/// Draws `shape` in level fg (must lie in [0,61]). Rendering is two-level
/// (no anti-aliasing) and purely deterministic; geometry partially outside
/// the frame is clipped. Segments step integer pixels midpoint-style and
/// widen perpendicular to the stroke; filled regions use even-odd scanline
/// fill; points render as filled discs.
void rasterize(Frame& frame, const Shape& shape, int fg);

/// Strict pixel equality (bg/fg metadata is not compared).
bool frames_equal(const Frame& a, const Frame& b);

}  // namespace oddity
