#include "bt/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "bt/core/errors.hpp"

namespace bt {

Image::Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {
  if (w <= 0 || h <= 0) throw ValidationError("image dimensions must be positive");
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + desc.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw IoError(std::string("png decode failed: ") + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw IoError(std::string("png decode failed: ") + desc.message);
  }
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Image resize(const Image& src, int width, int height) {
  Image dst(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
        double bot = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
        dst.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return dst;
}

Image resize_shorter(const Image& src, int size) {
  if (src.width <= src.height) {
    int h = static_cast<int>(std::lround(static_cast<double>(src.height) * size / src.width));
    return resize(src, size, std::max(h, size));
  }
  int w = static_cast<int>(std::lround(static_cast<double>(src.width) * size / src.height));
  return resize(src, std::max(w, size), size);
}

Image crop(const Image& src, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > src.width || y0 + height > src.height) {
    throw ValidationError("crop window outside image");
  }
  Image dst(width, height);
  for (int y = 0; y < height; ++y) {
    auto row = src.pixels.begin() + (static_cast<std::ptrdiff_t>(y0 + y) * src.width + x0) * 3;
    std::copy(row, row + width * 3, dst.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width * 3);
  }
  return dst;
}

Image center_crop(const Image& src, int size) {
  int w = std::min(size, src.width);
  int h = std::min(size, src.height);
  return crop(src, (src.width - w) / 2, (src.height - h) / 2, w, h);
}

Image flip_horizontal(const Image& src) {
  Image dst(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) dst.at(src.width - 1 - x, y, c) = src.at(x, y, c);
  return dst;
}

Image train_augment(const Image& src, int size, std::mt19937_64& rng, double min_scale) {
  const double area = static_cast<double>(src.width) * src.height;
  std::uniform_real_distribution<double> scale(min_scale, 1.0);
  std::uniform_real_distribution<double> log_ratio(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
  Image cropped;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    double target = area * scale(rng);
    double ratio = std::exp(log_ratio(rng));
    int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= src.width && h <= src.height) {
      std::uniform_int_distribution<int> ox(0, src.width - w), oy(0, src.height - h);
      int x0 = ox(rng);
      int y0 = oy(rng);
      cropped = crop(src, x0, y0, w, h);
      found = true;
    }
  }
  if (!found) {
    int s = std::min(src.width, src.height);
    cropped = center_crop(src, s);
  }
  Image out = resize(cropped, size, size);
  if (std::bernoulli_distribution(0.5)(rng)) out = flip_horizontal(out);
  return out;
}

Image eval_preprocess(const Image& src, int size) {
  int shorter = static_cast<int>(std::lround(size * 256.0 / 224.0));
  return center_crop(resize_shorter(src, shorter), size);
}

std::vector<float> to_chw(const Image& img) {
  static constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
  static constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      out[c * plane + i] = (img.pixels[i * 3 + c] / 255.0f - kMean[c]) / kStd[c];
  return out;
}

}  // namespace bt
