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

#ifndef FACEFIT_CORE_IMAGE_HPP_
#define FACEFIT_CORE_IMAGE_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace facefit {

// Row-major interleaved RGB, channels in [0,1]. Pixel (x,y) has its sampling
// center at continuous position (x+0.5, y+0.5); y grows downward.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(3) * w * h, fill) {
    require(w > 0 && h > 0, ErrorCode::kInvalidArgument,
            "image dimensions must be positive");
  }

  double& at(int x, int y, int c) {
    return data[3 * (static_cast<size_t>(y) * width + x) + c];
  }
  double at(int x, int y, int c) const {
    return data[3 * (static_cast<size_t>(y) * width + x) + c];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool same_size(const RgbImage& o) const {
    return width == o.width && height == o.height;
  }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
    require(w > 0 && h > 0, ErrorCode::kInvalidArgument,
            "image dimensions must be positive");
  }

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

// Bilinear sample at continuous position (x,y) in the pixel-center
// convention above; positions outside the image clamp to the border.
Eigen::Vector3d bilinear_sample(const RgbImage& img, double x, double y);
double bilinear_sample(const GrayImage& img, double x, double y);

// Sample plus its derivative with respect to the sample position. The
// derivative is zero in a direction where the position clamped at the border.
struct BilinearTap {
  Eigen::Vector3d value;
  Eigen::Vector3d d_x;
  Eigen::Vector3d d_y;
};
BilinearTap bilinear_sample_grad(const RgbImage& img, double x, double y);

// The four pixels and weights a bilinear sample at (x, y) reads. Weights sum
// to 1; at a clamped border some corners coincide.
struct BilinearFootprint {
  int x0, x1, y0, y1;
  double w00, w10, w01, w11;
};
BilinearFootprint bilinear_footprint(int width, int height, double x, double y);

GrayImage to_gray(const RgbImage& img);

RgbImage read_image(const std::string& path);  // dispatches on extension
void write_image(const RgbImage& img, const std::string& path);

RgbImage read_png(const std::string& path);
void write_png(const RgbImage& img, const std::string& path);
RgbImage read_ppm(const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);

// 8-bit single-channel PNG, used for masks (0/255) and debug heat maps.
std::vector<uint8_t> read_gray_png(const std::string& path, int* width,
                                   int* height);
void write_gray_png(const std::vector<uint8_t>& pixels, int width, int height,
                    const std::string& path);

// Round-to-nearest 8-bit quantization, the single conversion used by all
// image writers.
inline uint8_t quantize8(double v) {
  return static_cast<uint8_t>(std::lround(clamp01(v) * 255.0));
}

}  // namespace facefit

#endif  // FACEFIT_CORE_IMAGE_HPP_
