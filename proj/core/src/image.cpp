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

#include "forge/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>
#include <png.h>

#include "forge/error.hpp"
#include "forge/io.hpp"

namespace forge {

namespace fs = std::filesystem;

Image::Image(std::int64_t w, std::int64_t h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w * h * c), fill) {
  if (w < 0 || h < 0 || c < 1 || c > 4) throw ValidationError("bad image shape");
}

namespace {

enum class Kind { kPng, kJpeg, kUnknown };

Kind sniff(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), sizeof(sig));
  static const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() == 8 && std::memcmp(sig, kPngSig, 8) == 0) return Kind::kPng;
  if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) {
    return Kind::kJpeg;
  }
  return Kind::kUnknown;
}

Image read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.width, img.height, 3);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Decodes header (and optionally pixels). No C++ objects with destructors
// may live across the setjmp boundary, so the buffer is passed in.
bool decode_jpeg(const fs::path& path, bool pixels, ImageSize& size,
                 std::vector<std::uint8_t>& buf, std::string& error) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) {
    error = "cannot open";
    return false;
  }
  jpeg_decompress_struct cinfo;
  JpegError jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = on_jpeg_error;
  if (setjmp(jerr.jump)) {
    error = jerr.message;
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  size = {static_cast<std::int64_t>(cinfo.image_width),
          static_cast<std::int64_t>(cinfo.image_height)};
  if (pixels) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
    buf.resize(stride * cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = buf.data() + stride * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return true;
}

}  // namespace

Image read_image(const fs::path& path) {
  switch (sniff(path)) {
    case Kind::kPng:
      return read_png(path);
    case Kind::kJpeg: {
      ImageSize size;
      std::vector<std::uint8_t> buf;
      std::string error;
      if (!decode_jpeg(path, true, size, buf, error)) {
        throw FormatError("cannot decode JPEG " + path.string() + ": " + error);
      }
      Image out;
      out.width = size.width;
      out.height = size.height;
      out.channels = 3;
      out.pixels = std::move(buf);
      return out;
    }
    case Kind::kUnknown:
      break;
  }
  throw FormatError("unsupported image format: " + path.string());
}

ImageSize read_image_size(const fs::path& path) {
  switch (sniff(path)) {
    case Kind::kPng: {
      png_image img;
      std::memset(&img, 0, sizeof(img));
      img.version = PNG_IMAGE_VERSION;
      if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw FormatError("cannot read PNG header " + path.string() + ": " + img.message);
      }
      ImageSize s{static_cast<std::int64_t>(img.width),
                  static_cast<std::int64_t>(img.height)};
      png_image_free(&img);
      return s;
    }
    case Kind::kJpeg: {
      ImageSize size;
      std::vector<std::uint8_t> unused;
      std::string error;
      if (!decode_jpeg(path, false, size, unused, error)) {
        throw FormatError("cannot read JPEG header " + path.string() + ": " + error);
      }
      return size;
    }
    case Kind::kUnknown:
      break;
  }
  throw FormatError("unsupported image format: " + path.string());
}

std::string encode_png(const Image& img) {
  png_image p;
  std::memset(&p, 0, sizeof(p));
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.width);
  p.height = static_cast<png_uint_32>(img.height);
  switch (img.channels) {
    case 1: p.format = PNG_FORMAT_GRAY; break;
    case 3: p.format = PNG_FORMAT_RGB; break;
    case 4: p.format = PNG_FORMAT_RGBA; break;
    default: throw ValidationError("PNG output needs 1, 3 or 4 channels");
  }
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + p.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, img.pixels.data(), 0,
                                 nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + p.message);
  }
  out.resize(size);
  return out;
}

void write_png(const fs::path& path, const Image& img) {
  write_file_atomic(path, encode_png(img));
}

Image crop_to_bbox(const Image& img, const BBox& box) {
  if (!bbox_inside(box, img.size())) {
    throw ValidationError("bbox [" + std::to_string(box.x) + ", " + std::to_string(box.y) +
                          ", " + std::to_string(box.w) + ", " + std::to_string(box.h) +
                          "] outside " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " image");
  }
  Image out(box.w, box.h, img.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(box.w * img.channels);
  for (std::int64_t y = 0; y < box.h; ++y) {
    std::memcpy(out.at(0, y), img.at(box.x, box.y + y), row_bytes);
  }
  return out;
}

void blit(const Image& src, Image& dst, std::int64_t x, std::int64_t y) {
  if (src.channels != dst.channels) throw ValidationError("blit channel mismatch");
  if (x < 0 || y < 0 || x + src.width > dst.width || y + src.height > dst.height) {
    throw ValidationError("blit target outside canvas");
  }
  const std::size_t row_bytes = static_cast<std::size_t>(src.width * src.channels);
  for (std::int64_t r = 0; r < src.height; ++r) {
    std::memcpy(dst.at(x, y + r), src.at(0, r), row_bytes);
  }
}

Image resize_bilinear(const Image& img, std::int64_t width, std::int64_t height) {
  if (img.width <= 0 || img.height <= 0 || width <= 0 || height <= 0) {
    throw ValidationError("resize needs non-empty images");
  }
  if (width == img.width && height == img.height) return img;
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (std::int64_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const auto y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (std::int64_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const auto x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0)[c] * (1 - wx) + img.at(x1, y0)[c] * wx;
        const double bot = img.at(x0, y1)[c] * (1 - wx) + img.at(x1, y1)[c] * wx;
        out.at(x, y)[c] = static_cast<std::uint8_t>(
            std::clamp(std::lround(top * (1 - wy) + bot * wy), 0L, 255L));
      }
    }
  }
  return out;
}

BBox LetterboxTransform::map(const BBox& box) const {
  const auto x0 = static_cast<std::int64_t>(std::floor((box.x + pad_x) * scale));
  const auto y0 = static_cast<std::int64_t>(std::floor((box.y + pad_y) * scale));
  const auto x1 = static_cast<std::int64_t>(std::ceil((box.x + box.w + pad_x) * scale));
  const auto y1 = static_cast<std::int64_t>(std::ceil((box.y + box.h + pad_y) * scale));
  return {x0, y0, std::max<std::int64_t>(1, x1 - x0), std::max<std::int64_t>(1, y1 - y0)};
}

Image letterbox(const Image& img, std::int64_t side, LetterboxTransform* transform) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("letterbox of empty image");
  const std::int64_t square = std::max(img.width, img.height);
  Image padded(square, square, img.channels, 0);
  const std::int64_t pad_x = (square - img.width) / 2;
  const std::int64_t pad_y = (square - img.height) / 2;
  blit(img, padded, pad_x, pad_y);
  if (transform) {
    transform->scale = static_cast<double>(side) / static_cast<double>(square);
    transform->pad_x = pad_x;
    transform->pad_y = pad_y;
  }
  return resize_bilinear(padded, side, side);
}

}  // namespace forge
