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

#ifndef FACEFIT_CORE_RASTER_HPP_
#define FACEFIT_CORE_RASTER_HPP_

#include <cstdint>
#include <vector>

#include "core/camera.hpp"
#include "core/model.hpp"

namespace facefit {

// Per-pixel rasterization output. Pixels not covered by any front-facing
// triangle carry kBackground and zeroed barycentrics/depth.
struct RasterBuffers {
  static constexpr int32_t kBackground = -1;

  int width = 0;
  int height = 0;
  std::vector<int32_t> tri_id;
  std::vector<double> bary;  // 3 weights per pixel
  std::vector<double> depth;

  RasterBuffers() = default;
  RasterBuffers(int w, int h)
      : width(w),
        height(h),
        tri_id(static_cast<size_t>(w) * h, kBackground),
        bary(static_cast<size_t>(3) * w * h, 0.0),
        depth(static_cast<size_t>(w) * h, 0.0) {}

  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * width + x;
  }
  bool covered(int x, int y) const {
    return tri_id[index(x, y)] != kBackground;
  }
};

// Signed doubled area of the projected triangle in the y-down image frame;
// positive iff front-facing under this project's winding convention. The
// exhaustive-check path in tests mirrors this exact expression.
inline double signed_area2(double x0, double y0, double x1, double y1,
                           double x2, double y2) {
  return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0);
}

// Z-buffer rasterization over pre-projected vertices. Pixel (x,y) is tested
// at center (x+0.5, y+0.5); a pixel is inside when all three edge functions
// are >= 0; larger interpolated depth wins, ties keep the lower triangle
// index; triangles with signed_area2 <= 0 (back-facing or degenerate) are
// skipped.
RasterBuffers rasterize_projected(const Eigen::MatrixX2d& positions,
                                  const Eigen::VectorXd& depths,
                                  const std::vector<std::array<int32_t, 3>>& triangles,
                                  int width, int height);

RasterBuffers rasterize(const Mesh& mesh, const CameraPose& pose, int width,
                        int height);

// 255 where the pixel and all 8 neighbors are covered, else 0. Border pixels
// are never interior.
std::vector<uint8_t> interior_coverage(const RasterBuffers& buffers);

}  // namespace facefit

#endif  // FACEFIT_CORE_RASTER_HPP_
