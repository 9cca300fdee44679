#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace facenet {

/// 8-bit image, interleaved H x W x C. Colour images are stored RGB.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return pixels.empty(); }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

  bool operator==(const Image&) const = default;
};

/// Reads a PNG as `channels` channels (1 = grayscale, 3 = RGB). Throws IngestionError.
Image read_image(const std::filesystem::path& path, int channels);
void write_image(const std::filesystem::path& path, const Image& image);

/// Bilinear resize; returns the input unchanged when the size already matches.
Image resize_bilinear(const Image& image, int height, int width);
Image flip_horizontal(const Image& image);

}  // namespace facenet
