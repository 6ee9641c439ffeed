// Copyright 2026 The Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/feature_store.hpp"

namespace forge {

/// 8-bit interleaved image, row major.
struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::int64_t w, std::int64_t h, int c, std::uint8_t fill = 0);

  ImageSize size() const noexcept { return {width, height}; }
  std::uint8_t* at(std::int64_t x, std::int64_t y) {
    return pixels.data() + (y * width + x) * channels;
  }
  const std::uint8_t* at(std::int64_t x, std::int64_t y) const {
    return pixels.data() + (y * width + x) * channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Decodes PNG or JPEG (detected from the file signature) into RGB.
Image read_image(const std::filesystem::path& path);
/// Width and height from the file header only.
ImageSize read_image_size(const std::filesystem::path& path);
/// 1, 3, or 4 channel PNG.
void write_png(const std::filesystem::path& path, const Image& img);
std::string encode_png(const Image& img);

/// Exact sub-image. Throws ValidationError if the box leaves the image.
Image crop_to_bbox(const Image& img, const BBox& box);

/// Copies `src` into `dst` with its top-left corner at (x, y).
void blit(const Image& src, Image& dst, std::int64_t x, std::int64_t y);

Image resize_bilinear(const Image& img, std::int64_t width, std::int64_t height);

/// Mapping from source pixel coordinates into a letterboxed tile.
struct LetterboxTransform {
  double scale = 1.0;
  std::int64_t pad_x = 0;  // padding in source pixels before scaling
  std::int64_t pad_y = 0;

  BBox map(const BBox& box) const;
};

/// Pads to a centered square with black, then resizes to side x side.
Image letterbox(const Image& img, std::int64_t side,
                LetterboxTransform* transform = nullptr);

}  // namespace forge
