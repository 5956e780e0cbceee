#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "splatkit/formats.hpp"
#include "splatkit/geometry.hpp"

// 8-bit PNG image I/O. Values are quantized by round(v*255); grayscale for
// 1-channel buffers, RGB otherwise.

namespace splatkit {

inline void write_png(const std::filesystem::path& path,
                      const ImageBuffer& image) {
  const int channels = image.channels;
  std::vector<std::uint8_t> bytes(size_t(image.width) * image.height * channels);
  for (size_t i = 0; i < image.values.size(); ++i) {
    const double v = std::clamp(image.values[i], 0.0, 1.0);
    bytes[i] = std::uint8_t(std::lround(v * 255.0));
  }

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(image.width);
  png.height = png_uint_32(image.height);
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(),
                               0, nullptr))
    throw FormatError("png write failed: " + path.string() + ": " +
                      png.message);
}

inline ImageBuffer read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw FormatError("png read failed: " + path.string() + ": " + png.message);

  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    throw FormatError("png decode failed: " + path.string() + ": " +
                      png.message);
  }

  ImageBuffer image(int(png.width), int(png.height), channels);
  for (size_t i = 0; i < image.values.size(); ++i)
    image.values[i] = bytes[i] / 255.0;
  return image;
}

}  // namespace splatkit
