#include "csmae/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "csmae/errors.hpp"

namespace csmae {

std::vector<std::uint8_t> frame_rgb(const VideoClip& clip, std::size_t t) {
  if (t >= clip.frames) throw IndexError("frame " + std::to_string(t) + " of " + std::to_string(clip.frames));
  if (clip.channels != 1 && clip.channels != 3) {
    throw DimensionError("frame_rgb needs 1 or 3 channels, got " + std::to_string(clip.channels));
  }
  std::vector<std::uint8_t> rgb(clip.height * clip.width * 3);
  for (std::size_t y = 0; y < clip.height; ++y) {
    for (std::size_t x = 0; x < clip.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = clip.at(t, clip.channels == 1 ? 0 : c, y, x);
        const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
        rgb[(y * clip.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
      }
    }
  }
  return rgb;
}

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != width * height * 3) {
    throw DimensionError("PPM payload of " + std::to_string(rgb.size()) + " bytes for " + std::to_string(width) +
                         "x" + std::to_string(height));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace csmae
