// Copyright 2026 The netdissect Authors
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

#include "dataset/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <string>

#include "common/error.hpp"
#include "common/files.hpp"

namespace nd {

namespace fs = std::filesystem;

namespace {

class PgmReader {
 public:
  PgmReader(const std::vector<std::uint8_t>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  std::size_t next_int() {
    skip_space_and_comments();
    require(pos_ < bytes_.size() && std::isdigit(bytes_[pos_]), ErrorCode::kParse,
            "'" + path_.string() + "': malformed PGM header");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      require(v < (1u << 24), ErrorCode::kParse, "'" + path_.string() + "': PGM header value too large");
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

Tensor decode_pgm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  PgmReader reader(bytes, path);
  const std::size_t width = reader.next_int();
  const std::size_t height = reader.next_int();
  const std::size_t maxval = reader.next_int();
  require(width >= 1 && height >= 1, ErrorCode::kParse, "'" + path.string() + "': PGM has zero size");
  require(maxval >= 1 && maxval <= 65535, ErrorCode::kParse, "'" + path.string() + "': PGM maxval out of range");
  require(reader.pos() < bytes.size() && std::isspace(bytes[reader.pos()]), ErrorCode::kParse,
          "'" + path.string() + "': malformed PGM header");
  reader.advance();
  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t need = width * height * sample_bytes;
  require(bytes.size() - reader.pos() >= need, ErrorCode::kParse,
          "'" + path.string() + "': PGM pixel data truncated");
  Tensor out({height, width});
  const std::uint8_t* data = bytes.data() + reader.pos();
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    const std::size_t v = sample_bytes == 1 ? data[i] : (static_cast<std::size_t>(data[2 * i]) << 8) | data[2 * i + 1];
    out[i] = static_cast<float>(std::min<std::size_t>(v, maxval) * scale);
  }
  return out;
}

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->pos + len > state->bytes->size()) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, state->bytes->data() + state->pos, len);
  state->pos += len;
}

Tensor decode_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kInternal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> pixels;
  png_uint_32 width = 0, height = 0;
  PngReadState state{&bytes, 0};
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kParse, "'" + path.string() + "': unreadable PNG");
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  require(width >= 1 && height >= 1 && rowbytes >= width, ErrorCode::kParse,
          "'" + path.string() + "': PNG has unsupported layout");
  Tensor out({height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out.at(y, x) = static_cast<float>(pixels[y * rowbytes + x] / 255.0);
  }
  return out;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

std::pair<std::size_t, std::size_t> image_dims(const Tensor& image) {
  if (image.rank() == 2) return {image.dim(0), image.dim(1)};
  require(image.rank() == 3 && image.dim(0) == 1, ErrorCode::kShape,
          "grayscale image must be [H,W] or [1,H,W], got " + shape_string(image.shape()));
  return {image.dim(1), image.dim(2)};
}

}  // namespace

Tensor read_gray_image(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes, path);
  fail(ErrorCode::kParse, "'" + path.string() + "': unsupported image format (expected binary PGM or PNG)");
}

std::vector<std::uint8_t> quantize_u8(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    out[i] = static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
  }
  return out;
}

void write_pgm(const fs::path& path, const Tensor& image) {
  const auto [h, w] = image_dims(image);
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const auto pixels = quantize_u8(image.values());
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  write_file_bytes(path, bytes);
}

std::vector<std::uint8_t> encode_png_gray(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels) {
  require(pixels.size() == width * height, ErrorCode::kShape, "encode_png_gray: pixel count mismatch");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kInternal, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kInternal, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(pixels.data() + y * width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png_gray(const fs::path& path, const Tensor& image) {
  const auto [h, w] = image_dims(image);
  const auto pixels = quantize_u8(image.values());
  write_file_bytes(path, encode_png_gray(w, h, pixels));
}

}  // namespace nd
