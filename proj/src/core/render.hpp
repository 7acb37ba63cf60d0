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

#ifndef FACEFIT_CORE_RENDER_HPP_
#define FACEFIT_CORE_RENDER_HPP_

#include <cstdint>
#include <vector>

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/model.hpp"
#include "core/raster.hpp"

namespace facefit {

struct TextureMap {
  Eigen::MatrixX3d colors;     // V×3 in [0,1]
  std::vector<uint8_t> valid;  // 0 where the vertex projected outside
};

// Projects every vertex and bilinearly fetches its color from the image.
// Occlusion is deliberately not handled here; masks deal with it downstream.
TextureMap sample_texture(const RgbImage& image, const Mesh& mesh,
                          const CameraPose& pose);

struct RenderResult {
  RgbImage image;
  RasterBuffers buffers;
  // 255 on covered pixels whose triangle has three valid-texture vertices.
  std::vector<uint8_t> valid;
};

// Per covered pixel, barycentric blend of the triangle's vertex colors.
// Background stays black; callers composite or pattern-fill it.
RenderResult render_textured(const Mesh& mesh, const TextureMap& texture,
                             const CameraPose& pose, int width, int height);

// Rendered projection of one view into another: rasterize the shape under
// pose_dst, map each covered pixel to its surface point via barycentrics,
// project that point under pose_src, fetch the source image there. The
// per-pixel source position is kept for the backward pass.
struct CrossProjection {
  RgbImage image;
  RasterBuffers buffers;
  // 255 on covered pixels whose source sample position lies inside the image.
  std::vector<uint8_t> valid;
  std::vector<double> src_xy;      // 2 per pixel, defined where covered
  Eigen::MatrixX2d positions_src;  // per-vertex projections under pose_src
  Eigen::MatrixX2d positions_dst;
};

CrossProjection cross_project(const RgbImage& source_image, const Mesh& shape,
                              const CameraPose& pose_src,
                              const CameraPose& pose_dst, int width,
                              int height);

struct ShapePoseGrad {
  Eigen::MatrixX3d d_vertices;
  Eigen::Matrix<double, 6, 1> d_pose_src = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> d_pose_dst = Eigen::Matrix<double, 6, 1>::Zero();
};

// Pulls a per-pixel color gradient back onto vertices and the two poses.
// Fixed-topology derivative: per-pixel triangle assignment is held constant;
// gradients flow through barycentric weights and the bilinear sample
// position. Pixels outside the coverage, with invalid samples, or excluded
// by pixel_filter (nonzero = keep) contribute nothing.
ShapePoseGrad cross_project_backward(const CrossProjection& fwd,
                                     const RgbImage& source_image,
                                     const Mesh& shape,
                                     const CameraPose& pose_src,
                                     const CameraPose& pose_dst,
                                     const std::vector<double>& d_image,
                                     const std::vector<uint8_t>* pixel_filter
                                     = nullptr);

}  // namespace facefit

#endif  // FACEFIT_CORE_RENDER_HPP_
