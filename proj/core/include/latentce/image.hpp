#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace latentce {

// Grayscale raster, row-major, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0f) {}
  Image(int h, int w, std::vector<float> px);

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const noexcept { return pixels.size(); }

  bool operator==(const Image&) const = default;
};

// Rounds to the nearest of 256 levels after clamping to [0,1].
std::uint8_t quantize_pixel(float v);
Image quantized(const Image& img);

// Binary PGM (P5, maxval 255).
void write_pgm(const Image& img, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace latentce
