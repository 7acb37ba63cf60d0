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

#include "core/raster.hpp"

#include <algorithm>
#include <cmath>

namespace facefit {

RasterBuffers rasterize_projected(
    const Eigen::MatrixX2d& positions, const Eigen::VectorXd& depths,
    const std::vector<std::array<int32_t, 3>>& triangles, int width,
    int height) {
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument,
          "raster dimensions must be positive");
  require(positions.rows() == depths.size(), ErrorCode::kDimensionMismatch,
          "positions/depths size mismatch");
  RasterBuffers buf(width, height);
  for (size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const double x0 = positions(tri[0], 0), y0 = positions(tri[0], 1);
    const double x1 = positions(tri[1], 0), y1 = positions(tri[1], 1);
    const double x2 = positions(tri[2], 0), y2 = positions(tri[2], 1);
    const double area2 = signed_area2(x0, y0, x1, y1, x2, y2);
    if (area2 <= 0.0) continue;

    const double min_x = std::min({x0, x1, x2});
    const double max_x = std::max({x0, x1, x2});
    const double min_y = std::min({y0, y1, y2});
    const double max_y = std::max({y0, y1, y2});
    const int px0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int px1 =
        std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
    const int py0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int py1 =
        std::min(height - 1, static_cast<int>(std::ceil(max_y - 0.5)));

    for (int py = py0; py <= py1; ++py) {
      const double qy = py + 0.5;
      for (int px = px0; px <= px1; ++px) {
        const double qx = px + 0.5;
        const double g0 = (x2 - x1) * (qy - y1) - (y2 - y1) * (qx - x1);
        const double g1 = (x0 - x2) * (qy - y2) - (y0 - y2) * (qx - x2);
        const double g2 = (x1 - x0) * (qy - y0) - (y1 - y0) * (qx - x0);
        if (g0 < 0.0 || g1 < 0.0 || g2 < 0.0) continue;
        const double w0 = g0 / area2;
        const double w1 = g1 / area2;
        const double w2 = g2 / area2;
        const double d =
            w0 * depths[tri[0]] + w1 * depths[tri[1]] + w2 * depths[tri[2]];
        const size_t at = buf.index(px, py);
        if (buf.tri_id[at] != RasterBuffers::kBackground &&
            d <= buf.depth[at]) {
          continue;
        }
        buf.tri_id[at] = static_cast<int32_t>(t);
        buf.depth[at] = d;
        buf.bary[3 * at + 0] = w0;
        buf.bary[3 * at + 1] = w1;
        buf.bary[3 * at + 2] = w2;
      }
    }
  }
  return buf;
}

RasterBuffers rasterize(const Mesh& mesh, const CameraPose& pose, int width,
                        int height) {
  pose.validate();
  const ProjectedMesh pm = project_mesh(mesh, pose);
  return rasterize_projected(pm.positions, pm.depths, mesh.topology->triangles,
                             width, height);
}

std::vector<uint8_t> interior_coverage(const RasterBuffers& buffers) {
  std::vector<uint8_t> out(static_cast<size_t>(buffers.width) * buffers.height,
                           0);
  for (int y = 1; y + 1 < buffers.height; ++y) {
    for (int x = 1; x + 1 < buffers.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!buffers.covered(x + dx, y + dy)) {
            all = false;
            break;
          }
        }
      }
      if (all) out[buffers.index(x, y)] = 255;
    }
  }
  return out;
}

}  // namespace facefit
