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

#include <cmath>
#include <fstream>

#include "core/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace facefit;
using facefit::test::TempPath;

TEST_CASE("bilinear sample at a pixel center returns that pixel") {
  RgbImage img(8, 6);
  Rng rng(1);
  for (auto& v : img.data) v = rng.uniform();
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Eigen::Vector3d s = bilinear_sample(img, x + 0.5, y + 0.5);
      for (int c = 0; c < 3; ++c) CHECK(s[c] == img.at(x, y, c));
    }
  }
}

TEST_CASE("bilinear sample blends four neighbors") {
  RgbImage img(4, 4);
  Rng rng(2);
  for (auto& v : img.data) v = rng.uniform();
  const double x = 1.5 + 0.3;  // between pixel columns 1 and 2, fx = 0.3
  const double y = 2.5 + 0.6;  // between rows 2 and 3, fy = 0.6
  const Eigen::Vector3d s = bilinear_sample(img, x, y);
  for (int c = 0; c < 3; ++c) {
    const double expect = (1 - 0.3) * (1 - 0.6) * img.at(1, 2, c) +
                          0.3 * (1 - 0.6) * img.at(2, 2, c) +
                          (1 - 0.3) * 0.6 * img.at(1, 3, c) +
                          0.3 * 0.6 * img.at(2, 3, c);
    CHECK(s[c] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("bilinear sample clamps outside the image") {
  RgbImage img(4, 3);
  Rng rng(3);
  for (auto& v : img.data) v = rng.uniform();
  const Eigen::Vector3d corner = bilinear_sample(img, -5.0, -5.0);
  for (int c = 0; c < 3; ++c) CHECK(corner[c] == img.at(0, 0, c));
  const Eigen::Vector3d far = bilinear_sample(img, 100.0, 100.0);
  for (int c = 0; c < 3; ++c) CHECK(far[c] == img.at(3, 2, c));
}

TEST_CASE("bilinear gradient matches finite differences inside a cell") {
  RgbImage img(16, 16);
  Rng rng(4);
  for (auto& v : img.data) v = rng.uniform();
  const double h = 1e-6;
  Rng pts(5);
  for (int trial = 0; trial < 30; ++trial) {
    // Keep probes away from lattice lines where the derivative jumps.
    const double x = pts.uniform_int(1, 13) + 0.5 + pts.uniform(0.1, 0.9);
    const double y = pts.uniform_int(1, 13) + 0.5 + pts.uniform(0.1, 0.9);
    const BilinearTap tap = bilinear_sample_grad(img, x, y);
    const Eigen::Vector3d fx =
        (bilinear_sample(img, x + h, y) - bilinear_sample(img, x - h, y)) /
        (2 * h);
    const Eigen::Vector3d fy =
        (bilinear_sample(img, x, y + h) - bilinear_sample(img, x, y - h)) /
        (2 * h);
    for (int c = 0; c < 3; ++c) {
      CHECK(tap.d_x[c] == doctest::Approx(fx[c]).epsilon(1e-6));
      CHECK(tap.d_y[c] == doctest::Approx(fy[c]).epsilon(1e-6));
      CHECK(tap.value[c] == bilinear_sample(img, x, y)[c]);
    }
  }
}

TEST_CASE("bilinear gradient is zero where the position clamps") {
  RgbImage img(6, 6);
  Rng rng(6);
  for (auto& v : img.data) v = rng.uniform();
  const BilinearTap tap = bilinear_sample_grad(img, -2.0, 3.1);
  for (int c = 0; c < 3; ++c) CHECK(tap.d_x[c] == 0.0);
  const BilinearTap tap2 = bilinear_sample_grad(img, 3.1, 100.0);
  for (int c = 0; c < 3; ++c) CHECK(tap2.d_y[c] == 0.0);
}

TEST_CASE("gray conversion uses the luma weights") {
  RgbImage img(2, 1);
  img.at(0, 0, 0) = 1.0;
  img.at(1, 0, 1) = 0.5;
  const GrayImage g = to_gray(img);
  CHECK(g.at(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
  CHECK(g.at(1, 0) == doctest::Approx(0.587 * 0.5).epsilon(1e-12));
}

TEST_CASE("png round trip stays within quantization error") {
  const RgbImage img = test::textured_image(37, 23, 7);
  TempPath path(".png");
  write_png(img, path.str());
  const RgbImage back = read_png(path.str());
  REQUIRE(back.width == 37);
  REQUIRE(back.height == 23);
  double max_diff = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(img.data[i] - back.data[i]));
  }
  CHECK(max_diff <= 0.5 / 255.0 + 1e-12);

  // A second round trip is exact: the data is already on the 8-bit lattice.
  TempPath path2(".png");
  write_png(back, path2.str());
  const RgbImage back2 = read_png(path2.str());
  CHECK(back2.data == back.data);
}

TEST_CASE("ppm round trip stays within quantization error") {
  const RgbImage img = test::textured_image(19, 31, 8);
  TempPath path(".ppm");
  write_ppm(img, path.str());
  const RgbImage back = read_ppm(path.str());
  REQUIRE(back.width == 19);
  REQUIRE(back.height == 31);
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(std::abs(img.data[i] - back.data[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("read_image dispatches on the file extension") {
  const RgbImage img = test::textured_image(9, 9, 9);
  TempPath ppm(".ppm");
  write_image(img, ppm.str());
  CHECK(read_image(ppm.str()).width == 9);
  TempPath png(".png");
  write_image(img, png.str());
  CHECK(read_image(png.str()).height == 9);
}

TEST_CASE("gray png round trip is exact for 8-bit data") {
  std::vector<uint8_t> pixels(12 * 5);
  Rng rng(10);
  for (auto& p : pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  TempPath path(".png");
  write_gray_png(pixels, 12, 5, path.str());
  int w = 0, h = 0;
  const std::vector<uint8_t> back = read_gray_png(path.str(), &w, &h);
  CHECK(w == 12);
  CHECK(h == 5);
  CHECK(back == pixels);
}

TEST_CASE("image readers reject missing and malformed files") {
  CHECK_THROWS_AS(read_png("/nonexistent/x.png"), Error);
  TempPath bad(".png");
  {
    std::ofstream os(bad.str(), std::ios::binary);
    os << "garbage";
  }
  CHECK_THROWS_AS(read_png(bad.str()), Error);
  TempPath badppm(".ppm");
  {
    std::ofstream os(badppm.str(), std::ios::binary);
    os << "P6\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(read_ppm(badppm.str()), Error);
}

TEST_CASE("quantize8 rounds to nearest and clamps") {
  CHECK(quantize8(0.0) == 0);
  CHECK(quantize8(1.0) == 255);
  CHECK(quantize8(-0.5) == 0);
  CHECK(quantize8(2.0) == 255);
  CHECK(quantize8(0.5) == 128);
  CHECK(quantize8(127.4 / 255.0) == 127);
}
