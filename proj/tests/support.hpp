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

#ifndef FACEFIT_TESTS_SUPPORT_HPP_
#define FACEFIT_TESTS_SUPPORT_HPP_

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "core/image.hpp"
#include "core/rng.hpp"

namespace facefit::test {

// Unique path under the system temp dir; removed on destruction.
class TempPath {
 public:
  explicit TempPath(const std::string& suffix) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("facefit_test_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++) + suffix))
                .string();
  }
  ~TempPath() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& str() const { return path_; }

 private:
  std::string path_;
};

inline double central_difference(const std::function<double(double)>& fn,
                                 double x, double h) {
  return (fn(x + h) - fn(x - h)) / (2.0 * h);
}

// Relative error with an absolute floor, for comparing against
// finite-difference references.
inline double rel_error(double got, double want, double floor = 1e-8) {
  const double denom = std::max(std::abs(want), floor);
  return std::abs(got - want) / denom;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

// Smooth color bands plus faint per-pixel noise. Band wavelengths stay well
// above typical triangle sizes so interpolation error is small, while the
// gradients are strong enough for flow and photometric tests.
inline RgbImage textured_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  const double ax = rng.uniform(0.5, 1.5), ay = rng.uniform(0.5, 1.5);
  const double px = rng.uniform(0.0, 2.0 * M_PI), py = rng.uniform(0.0, 2.0 * M_PI);
  const double pd = rng.uniform(0.0, 2.0 * M_PI);
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = 2.0 * M_PI * x / w;
      const double v = 2.0 * M_PI * y / h;
      const double band1 = std::sin(ax * 3.0 * u + px);
      const double band2 = std::sin(ay * 3.0 * v + py);
      const double band3 = std::sin(2.0 * (u + v) + pd);
      const double noise = 0.02 * (hash_unit(x, y, seed) - 0.5);
      img.at(x, y, 0) = clamp01(0.5 + 0.18 * band1 + 0.08 * band3 + noise);
      img.at(x, y, 1) = clamp01(0.5 + 0.18 * band2 - 0.08 * band3 + noise);
      img.at(x, y, 2) = clamp01(0.5 + 0.12 * band1 + 0.12 * band2 + noise);
    }
  }
  return img;
}

}  // namespace facefit::test

#endif  // FACEFIT_TESTS_SUPPORT_HPP_
