// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neumat/util/binary_io.hpp"

namespace neumat {

/// Linear HDR RGB image, rows top to bottom.
struct Image {
  std::uint32_t width = 0, height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h) : width(w), height(h), rgb(3ull * w * h, 0.0f) {}
  float* at(std::uint32_t x, std::uint32_t y) { return rgb.data() + 3ull * (static_cast<std::size_t>(y) * width + x); }
  const float* at(std::uint32_t x, std::uint32_t y) const {
    return rgb.data() + 3ull * (static_cast<std::size_t>(y) * width + x);
  }
};

/// 8-bit preview value: round(clamp(x, 0, 1)^(1/2.2) * 255).
inline std::uint8_t tone_map(float x) {
  const double c = std::clamp(static_cast<double>(x), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(std::pow(c, 1.0 / 2.2) * 255.0));
}

/// PFM colour image, little-endian (scale -1.0). PFM stores rows bottom up.
inline void write_pfm(const std::string& path, const Image& img) {
  std::ostringstream os(std::ios::binary);
  os << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  for (std::uint32_t y = img.height; y-- > 0;) {
    io::write_bytes(os, img.at(0, y), 3ull * img.width * sizeof(float));
  }
  io::write_file_atomic(path, os.str());
}

inline Image read_pfm(const std::string& path) {
  const auto bytes = io::read_file(path);
  const std::string text(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 128));
  std::istringstream is(text);
  std::string magic;
  long w = 0, h = 0;
  double scale = 0;
  is >> magic >> w >> h >> scale;
  if (!is || magic != "PF") throw FormatError(path + ": not a colour PFM file");
  if (scale >= 0) throw FormatError(path + ": big-endian PFM is not supported");
  if (w <= 0 || h <= 0) throw FormatError(path + ": invalid PFM extent");
  const auto header = static_cast<std::size_t>(is.tellg()) + 1;  // single whitespace after scale
  Image img(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h));
  const std::size_t row = 3ull * img.width * sizeof(float);
  if (bytes.size() != header + row * img.height) {
    throw FormatError(path + ": PFM payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                      std::to_string(row * img.height));
  }
  for (std::uint32_t y = 0; y < img.height; ++y) {
    std::memcpy(img.at(0, img.height - 1 - y), bytes.data() + header + y * row, row);
  }
  return img;
}

/// 8-bit RGB pixels, rows top to bottom.
struct Rgb8Image {
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

inline Rgb8Image preview(const Image& img) {
  Rgb8Image out{img.width, img.height, std::vector<std::uint8_t>(img.rgb.size())};
  std::transform(img.rgb.begin(), img.rgb.end(), out.rgb.begin(), tone_map);
  return out;
}

inline void write_png(const std::string& path, const Rgb8Image& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw std::runtime_error(path + ": cannot write PNG: " + image.message);
  }
}

namespace detail {

inline std::vector<std::uint8_t> read_png_as(const std::string& path, std::uint32_t format, std::uint32_t& w,
                                             std::uint32_t& h) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path + ": cannot read PNG: " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path + ": cannot decode PNG: " + image.message);
  }
  w = image.width;
  h = image.height;
  return buf;
}

}  // namespace detail

inline Rgb8Image read_png_rgb(const std::string& path) {
  Rgb8Image img;
  img.rgb = detail::read_png_as(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

/// Grayscale values in [0, 1], rows top to bottom.
struct GrayImage {
  std::uint32_t width = 0, height = 0;
  std::vector<float> value;
};

inline GrayImage read_png_gray(const std::string& path) {
  GrayImage img;
  const auto buf = detail::read_png_as(path, PNG_FORMAT_GRAY, img.width, img.height);
  img.value.resize(buf.size());
  std::transform(buf.begin(), buf.end(), img.value.begin(), [](std::uint8_t v) { return v / 255.0f; });
  return img;
}

inline void write_png_gray(const std::string& path, const GrayImage& img) {
  std::vector<std::uint8_t> buf(img.value.size());
  std::transform(img.value.begin(), img.value.end(), buf.begin(),
                 [](float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); });
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error(path + ": cannot write PNG: " + image.message);
  }
}

}  // namespace neumat
