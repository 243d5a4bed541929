#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace bt {

/// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image() = default;
  Image(int w, int h);

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const Image&) const = default;
};

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

Image read_png(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Bilinear resize (half-pixel centers).
Image resize(const Image& src, int width, int height);
/// Resize so the shorter side equals `size`, keeping aspect ratio.
Image resize_shorter(const Image& src, int size);
Image crop(const Image& src, int x0, int y0, int width, int height);
Image center_crop(const Image& src, int size);
Image flip_horizontal(const Image& src);

/// Random-resized-crop (scale min_scale-1, ratio 3/4-4/3) + horizontal flip,
/// output `size` x `size`.
Image train_augment(const Image& src, int size, std::mt19937_64& rng, double min_scale = 0.08);
/// Resize shorter side to round(size * 256 / 224) then center-crop `size`.
Image eval_preprocess(const Image& src, int size);

/// CHW float tensor in [0,1], normalized by per-channel mean/std.
std::vector<float> to_chw(const Image& img);

}  // namespace bt
