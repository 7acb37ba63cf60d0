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

#ifndef FACEFIT_CORE_MASK_HPP_
#define FACEFIT_CORE_MASK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/model.hpp"
#include "core/raster.hpp"

namespace facefit {

enum class MaskOrigin { kRendered, kObserved };

// Half of the face to remove when a view pair makes one side unreliable;
// kLeft removes pixels left of the cut polyline (image left = smaller x).
enum class CutSide { kNone, kLeft, kRight };

struct VisibilityMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> membership;  // 0 or 255
  MaskOrigin origin = MaskOrigin::kRendered;
  std::string view_pair;

  VisibilityMask() = default;
  VisibilityMask(int w, int h, uint8_t fill = 0)
      : width(w),
        height(h),
        membership(static_cast<size_t>(w) * h, fill) {
    require(w > 0 && h > 0, ErrorCode::kInvalidArgument,
            "mask dimensions must be positive");
  }

  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * width + x;
  }
  bool at(int x, int y) const { return membership[index(x, y)] != 0; }
  void set(int x, int y, bool on) { membership[index(x, y)] = on ? 255 : 0; }
  size_t count() const;
  bool same_size(const VisibilityMask& o) const {
    return width == o.width && height == o.height;
  }
};

VisibilityMask coverage_mask(const RasterBuffers& buffers);
VisibilityMask mask_union(const VisibilityMask& a, const VisibilityMask& b);
VisibilityMask mask_intersection(const VisibilityMask& a,
                                 const VisibilityMask& b);
double mask_iou(const VisibilityMask& a, const VisibilityMask& b);

void write_mask_png(const VisibilityMask& mask, const std::string& path);
VisibilityMask read_mask_png(const std::string& path);

// Removes the pixels on `side` of the polyline that runs vertically down to
// the brow point, straight from brow to nose tip, then vertically down from
// the nose tip. Pixels whose center lies exactly on the boundary stay.
void cut_mask(VisibilityMask* mask, const Eigen::Vector2d& brow,
              const Eigen::Vector2d& nose, CutSide side);

// Rasterized coverage of the shape under pose_dst, minus the half occluded
// from the paired source view. The cut polyline passes through the projected
// outer-brow landmark of the removed side and the nose tip.
VisibilityMask rendered_visibility_mask(const Mesh& shape,
                                        const CameraPose& pose_dst,
                                        CutSide side, int width, int height);

struct GuidedFilterConfig {
  int radius = 4;
  double epsilon = 1e-3;
};

// Edge-preserving smoothing of `input` guided by `guidance` (standard
// guided-filter formulation with box windows). Uniform guidance carries no
// edge information; the input is then returned unchanged.
GrayImage guided_filter(const GrayImage& input, const GrayImage& guidance,
                        const GuidedFilterConfig& config);

// Observed-face mask: the sampling-region coverage refined toward image
// edges by the guided filter (threshold 0.5), then cut like the rendered
// mask using detected 2D landmarks. Landmark row indices for the cut come
// from the model topology's anchors.
VisibilityMask observed_visibility_mask(const RgbImage& image,
                                        const VisibilityMask& sampling_coverage,
                                        const Eigen::MatrixX2d& landmarks_2d,
                                        const MeshTopology& topology,
                                        CutSide side,
                                        const GuidedFilterConfig& config = {});

// Replaces everything outside the mask with a seeded checkerboard+noise
// pattern. Two images filled with the same seed agree bitwise outside their
// masks, which pins the background flow between them to zero.
RgbImage fill_background(const RgbImage& image, const VisibilityMask& mask,
                         uint64_t pattern_seed);

}  // namespace facefit

#endif  // FACEFIT_CORE_MASK_HPP_
