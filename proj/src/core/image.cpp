// Copyright 2026 The Facefit Authors
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

#include "core/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace facefit {

namespace {

struct BilinearWeights {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;
};

BilinearWeights bilinear_setup(int width, int height, double x, double y) {
  BilinearWeights w;
  double u = x - 0.5;
  double v = y - 0.5;
  const double u_max = static_cast<double>(width - 1);
  const double v_max = static_cast<double>(height - 1);
  w.clamped_x = u < 0.0 || u > u_max;
  w.clamped_y = v < 0.0 || v > v_max;
  u = std::min(std::max(u, 0.0), u_max);
  v = std::min(std::max(v, 0.0), v_max);
  w.x0 = std::min(static_cast<int>(u), width - 2 >= 0 ? width - 2 : 0);
  w.y0 = std::min(static_cast<int>(v), height - 2 >= 0 ? height - 2 : 0);
  w.x1 = std::min(w.x0 + 1, width - 1);
  w.y1 = std::min(w.y0 + 1, height - 1);
  w.fx = u - w.x0;
  w.fy = v - w.y0;
  return w;
}

}  // namespace

BilinearFootprint bilinear_footprint(int width, int height, double x,
                                     double y) {
  const BilinearWeights w = bilinear_setup(width, height, x, y);
  BilinearFootprint f;
  f.x0 = w.x0;
  f.x1 = w.x1;
  f.y0 = w.y0;
  f.y1 = w.y1;
  f.w00 = (1 - w.fx) * (1 - w.fy);
  f.w10 = w.fx * (1 - w.fy);
  f.w01 = (1 - w.fx) * w.fy;
  f.w11 = w.fx * w.fy;
  return f;
}

Eigen::Vector3d bilinear_sample(const RgbImage& img, double x, double y) {
  const BilinearWeights w = bilinear_setup(img.width, img.height, x, y);
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double top = (1 - w.fx) * img.at(w.x0, w.y0, c) +
                       w.fx * img.at(w.x1, w.y0, c);
    const double bot = (1 - w.fx) * img.at(w.x0, w.y1, c) +
                       w.fx * img.at(w.x1, w.y1, c);
    out[c] = (1 - w.fy) * top + w.fy * bot;
  }
  return out;
}

double bilinear_sample(const GrayImage& img, double x, double y) {
  const BilinearWeights w = bilinear_setup(img.width, img.height, x, y);
  const double top =
      (1 - w.fx) * img.at(w.x0, w.y0) + w.fx * img.at(w.x1, w.y0);
  const double bot =
      (1 - w.fx) * img.at(w.x0, w.y1) + w.fx * img.at(w.x1, w.y1);
  return (1 - w.fy) * top + w.fy * bot;
}

BilinearTap bilinear_sample_grad(const RgbImage& img, double x, double y) {
  const BilinearWeights w = bilinear_setup(img.width, img.height, x, y);
  BilinearTap tap;
  for (int c = 0; c < 3; ++c) {
    const double c00 = img.at(w.x0, w.y0, c);
    const double c10 = img.at(w.x1, w.y0, c);
    const double c01 = img.at(w.x0, w.y1, c);
    const double c11 = img.at(w.x1, w.y1, c);
    const double top = (1 - w.fx) * c00 + w.fx * c10;
    const double bot = (1 - w.fx) * c01 + w.fx * c11;
    tap.value[c] = (1 - w.fy) * top + w.fy * bot;
    tap.d_x[c] = w.clamped_x
                     ? 0.0
                     : (1 - w.fy) * (c10 - c00) + w.fy * (c11 - c01);
    tap.d_y[c] = w.clamped_y ? 0.0 : bot - top;
  }
  return tap;
}

GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                     0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

RgbImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, ErrorCode::kIo, "cannot open png: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::kIo, "png info allocation failed");
  }
  std::vector<uint8_t> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kFormat, "malformed png: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  require(png_get_channels(png, info) == 3, ErrorCode::kFormat,
          "png did not decode to rgb");
  raw.resize(static_cast<size_t>(3) * width * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = raw.data() + static_cast<size_t>(3) * width * y;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  RgbImage img(width, height);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void write_png(const RgbImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorCode::kIo, "cannot create png: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIo, "png info allocation failed");
  }
  std::vector<uint8_t> raw(static_cast<size_t>(3) * img.width * img.height);
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize8(img.data[i]);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = raw.data() + static_cast<size_t>(3) * img.width * y;
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_gray_png(const std::string& path, int* width,
                                   int* height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, ErrorCode::kIo, "cannot open png: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::kIo, "png info allocation failed");
  }
  std::vector<uint8_t> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kFormat, "malformed png: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY &&
      png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  require(png_get_channels(png, info) == 1, ErrorCode::kFormat,
          "png did not decode to grayscale");
  raw.resize(static_cast<size_t>(*width) * *height);
  rows.resize(*height);
  for (int y = 0; y < *height; ++y) {
    rows[y] = raw.data() + static_cast<size_t>(*width) * y;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

void write_gray_png(const std::vector<uint8_t>& pixels, int width, int height,
                    const std::string& path) {
  require(pixels.size() == static_cast<size_t>(width) * height,
          ErrorCode::kDimensionMismatch, "pixel buffer size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorCode::kIo, "cannot create png: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIo, "png info allocation failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels.data()) +
              static_cast<size_t>(width) * y;
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::kIo, "cannot open ppm: " + path);
  std::string magic;
  is >> magic;
  require(magic == "P6", ErrorCode::kFormat, "not a binary ppm");
  // Header tokens may be separated by whitespace and '#' comments.
  const auto next_int = [&is, &path]() {
    for (;;) {
      int c = is.peek();
      require(c != EOF, ErrorCode::kFormat, "truncated ppm: " + path);
      if (std::isspace(c)) {
        is.get();
      } else if (c == '#') {
        std::string comment;
        std::getline(is, comment);
      } else {
        break;
      }
    }
    int value;
    require(static_cast<bool>(is >> value), ErrorCode::kFormat,
            "malformed ppm header");
    return value;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  require(width > 0 && height > 0 && maxval == 255, ErrorCode::kFormat,
          "unsupported ppm header");
  is.get();
  std::vector<uint8_t> raw(static_cast<size_t>(3) * width * height);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  require(static_cast<size_t>(is.gcount()) == raw.size(), ErrorCode::kFormat,
          "truncated ppm: " + path);
  RgbImage img(width, height);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::kIo, "cannot create ppm: " + path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<uint8_t> raw(img.data.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize8(img.data[i]);
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  os.flush();
  require(os.good(), ErrorCode::kIo, "ppm write failed: " + path);
}

RgbImage read_image(const std::string& path) {
  if (has_suffix(path, ".ppm")) return read_ppm(path);
  return read_png(path);
}

void write_image(const RgbImage& img, const std::string& path) {
  if (has_suffix(path, ".ppm")) {
    write_ppm(img, path);
  } else {
    write_png(img, path);
  }
}

}  // namespace facefit
