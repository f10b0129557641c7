#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "csmae/clip.hpp"

namespace csmae {

// Interleaved 8-bit RGB of frame t; values are clamped to [0,1]. One-channel clips are grey.
std::vector<std::uint8_t> frame_rgb(const VideoClip& clip, std::size_t t);

// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb);

}  // namespace csmae
