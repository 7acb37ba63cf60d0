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

#ifndef FACEFIT_CORE_FLOW_HPP_
#define FACEFIT_CORE_FLOW_HPP_

#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/mask.hpp"

namespace facefit {

// Dense displacement field. warp_image(from, flow) samples `from` at
// pixel + (u, v), so a good field satisfies from(p + flow(p)) == to(p).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        u(static_cast<size_t>(w) * h, 0.0),
        v(static_cast<size_t>(w) * h, 0.0) {}

  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * width + x;
  }
};

struct FlowConfig {
  int levels = 4;
  double level_scale = 0.5;
  int warp_iters = 5;
  int solver_iters = 20;
  double smooth_weight = 15.0;
  // Standardizes each grayscale image to zero mean and unit deviation
  // before solving, cancelling global brightness and contrast changes.
  bool normalize = true;
  bool median_filter = true;
  double max_displacement = 32.0;

  void validate() const;
};

// Coarse-to-fine dense flow between two equally sized images. Deterministic;
// returns the zero field whenever the estimate fails to reduce the mean
// absolute residual of `warp_image(from, flow)` against `to`.
FlowField estimate_flow(const RgbImage& from, const RgbImage& to,
                        const FlowConfig& config = {});

// Sum of squared displacement magnitudes over mask pixels.
double flow_magnitude(const FlowField& flow, const VisibilityMask& mask);

// Backward bilinear warp; out-of-bounds samples clamp to the border.
RgbImage warp_image(const RgbImage& image, const FlowField& flow);

// Middlebury .flo layout: "PIEH" tag, int32 dims, float32 interleaved u,v.
void write_flo(const FlowField& flow, const std::string& path);
FlowField read_flo(const std::string& path);

}  // namespace facefit

#endif  // FACEFIT_CORE_FLOW_HPP_
