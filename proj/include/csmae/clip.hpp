#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace csmae {

// Raw video block, pixels in [0,1], stored T×C×H×W row-major.
struct VideoClip {
  std::size_t frames = 0;
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  double fps = 1.0;
  std::string source_id;
  // Per-pixel foreground flags (T×H×W) when the generator knows them; empty otherwise.
  std::vector<std::uint8_t> foreground;

  static VideoClip blank(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width);

  std::size_t index(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const {
    return ((t * channels + c) * height + h) * width + w;
  }
  float& at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) { return pixels[index(t, c, h, w)]; }
  float at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const { return pixels[index(t, c, h, w)]; }
  bool is_foreground(std::size_t t, std::size_t h, std::size_t w) const {
    return !foreground.empty() && foreground[(t * height + h) * width + w] != 0;
  }
};

}  // namespace csmae
