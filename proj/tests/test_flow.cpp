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

#include "core/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "core/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace facefit;
using facefit::test::TempPath;

namespace {

RgbImage shift_image(const RgbImage& img, int dx, int dy) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x + dx, 0, img.width - 1);
      const int sy = std::clamp(y + dy, 0, img.height - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

double median_shift_error(const FlowField& flow, double dx, double dy,
                          int margin) {
  std::vector<double> errs;
  for (int y = margin; y < flow.height - margin; ++y) {
    for (int x = margin; x < flow.width - margin; ++x) {
      const size_t i = flow.index(x, y);
      errs.push_back(std::hypot(flow.u[i] - dx, flow.v[i] - dy));
    }
  }
  std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
  return errs[errs.size() / 2];
}

double mean_abs(const RgbImage& a, const RgbImage& b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
  return sum / a.data.size();
}

}  // namespace

TEST_CASE("identical images produce a zero flow field") {
  const RgbImage img = test::textured_image(64, 64, 40);
  const FlowField flow = estimate_flow(img, img);
  double peak = 0.0;
  for (size_t i = 0; i < flow.u.size(); ++i) {
    peak = std::max(peak, std::hypot(flow.u[i], flow.v[i]));
  }
  CHECK(peak < 0.05);
}

TEST_CASE("integer shifts are recovered to subpixel accuracy") {
  const struct {
    int dx, dy;
  } shifts[] = {{3, 0}, {0, 2}, {-4, 3}, {8, 0}, {5, -6}};
  int idx = 0;
  for (const auto& s : shifts) {
    CAPTURE(s.dx);
    CAPTURE(s.dy);
    const RgbImage img = test::textured_image(96, 96, 41 + idx++);
    const RgbImage moved = shift_image(img, s.dx, s.dy);
    const FlowField flow = estimate_flow(img, moved);
    const int margin = 4 + std::max(std::abs(s.dx), std::abs(s.dy));
    CHECK(median_shift_error(flow, s.dx, s.dy, margin) < 0.25);
  }
}

TEST_CASE("a brightness change alone induces no flow") {
  RgbImage img = test::textured_image(80, 80, 47);
  for (double& v : img.data) v *= 0.5;
  RgbImage bright = img;
  for (double& v : bright.data) v = clamp01(v * 1.5);
  const FlowField flow = estimate_flow(img, bright);
  std::vector<double> mags(flow.u.size());
  for (size_t i = 0; i < mags.size(); ++i) {
    mags[i] = std::hypot(flow.u[i], flow.v[i]);
  }
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  CHECK(mags[mags.size() / 2] < 0.5);
}

TEST_CASE("shift recovery with a mild brightness change on the moved image") {
  // A stronger brightness change makes the zero field the better raw
  // photometric fit and legitimately triggers the fallback; at 20% the
  // recovered field clearly wins the residual comparison.
  RgbImage img = test::textured_image(96, 96, 48);
  for (double& v : img.data) v *= 0.5;
  RgbImage moved = shift_image(img, 4, -2);
  for (double& v : moved.data) v = clamp01(v * 1.2);
  const FlowField flow = estimate_flow(img, moved);
  CHECK(median_shift_error(flow, 4, -2, 9) < 0.35);
}

TEST_CASE("estimated flow never worsens the photometric residual") {
  for (int trial = 0; trial < 4; ++trial) {
    const RgbImage a = test::textured_image(64, 64, 50 + trial);
    RgbImage b = trial < 2 ? shift_image(a, 3 + trial, -trial)
                           : test::textured_image(64, 64, 60 + trial);
    const FlowField flow = estimate_flow(a, b);
    CHECK(mean_abs(warp_image(a, flow), b) <= mean_abs(a, b) + 1e-12);
  }
}

TEST_CASE("flow magnitudes stay within the configured bound") {
  const RgbImage a = test::textured_image(64, 64, 70);
  const RgbImage b = test::textured_image(64, 64, 71);
  FlowConfig config;
  config.max_displacement = 5.0;
  const FlowField flow = estimate_flow(a, b, config);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    CHECK(std::hypot(flow.u[i], flow.v[i]) <= 5.0 + 1e-9);
  }
}

TEST_CASE("estimate_flow is deterministic") {
  const RgbImage a = test::textured_image(48, 48, 72);
  const RgbImage b = shift_image(a, 2, 1);
  const FlowField f1 = estimate_flow(a, b);
  const FlowField f2 = estimate_flow(a, b);
  CHECK(f1.u == f2.u);
  CHECK(f1.v == f2.v);
}

TEST_CASE("estimate_flow rejects mismatched or tiny inputs") {
  const RgbImage a(32, 32, 0.5);
  CHECK_THROWS_AS(estimate_flow(a, RgbImage(16, 32, 0.5)), Error);
  CHECK_THROWS_AS(estimate_flow(RgbImage(2, 2, 0.1), RgbImage(2, 2, 0.1)),
                  Error);
  FlowConfig bad;
  bad.levels = 0;
  CHECK_THROWS_AS(estimate_flow(a, a, bad), Error);
}

TEST_CASE("flow_magnitude matches a direct double loop") {
  FlowField flow(13, 9);
  VisibilityMask mask(13, 9);
  Rng rng(5);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    flow.u[i] = rng.uniform(-3.0, 3.0);
    flow.v[i] = rng.uniform(-3.0, 3.0);
    mask.membership[i] = rng.uniform() < 0.6 ? 255 : 0;
  }
  double want = 0.0;
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 13; ++x) {
      if (!mask.at(x, y)) continue;
      const size_t i = flow.index(x, y);
      want += flow.u[i] * flow.u[i] + flow.v[i] * flow.v[i];
    }
  }
  CHECK(flow_magnitude(flow, mask) == doctest::Approx(want).epsilon(1e-12));

  const FlowField zero(13, 9);
  CHECK(flow_magnitude(zero, mask) == 0.0);

  FlowField ones(13, 9);
  std::fill(ones.u.begin(), ones.u.end(), 1.0);
  std::fill(ones.v.begin(), ones.v.end(), 1.0);
  VisibilityMask all(13, 9, 255);
  CHECK(flow_magnitude(ones, all) == doctest::Approx(2.0 * 13 * 9));
  CHECK_THROWS_AS(flow_magnitude(flow, VisibilityMask(5, 5)), Error);
}

TEST_CASE("warp_image with zero flow is the identity") {
  const RgbImage img = test::textured_image(32, 24, 80);
  const RgbImage out = warp_image(img, FlowField(32, 24));
  CHECK(out.data == img.data);
}

TEST_CASE("warp_image with unit flow shifts by one pixel and clamps") {
  const RgbImage img = test::textured_image(16, 8, 81);
  FlowField flow(16, 8);
  std::fill(flow.u.begin(), flow.u.end(), 1.0);
  const RgbImage out = warp_image(img, flow);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 16; ++x) {
      const int sx = std::min(15, x + 1);
      for (int c = 0; c < 3; ++c) {
        CHECK(out.at(x, y, c) == doctest::Approx(img.at(sx, y, c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("warp_image equals a per-pixel bilinear oracle") {
  const RgbImage img = test::textured_image(24, 20, 82);
  FlowField flow(24, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      const size_t i = flow.index(x, y);
      flow.u[i] = 2.0 * std::sin(0.3 * x + 0.1 * y);
      flow.v[i] = 1.5 * std::cos(0.2 * x - 0.25 * y);
    }
  }
  const RgbImage out = warp_image(img, flow);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      const size_t i = flow.index(x, y);
      const Eigen::Vector3d want =
          bilinear_sample(img, x + 0.5 + flow.u[i], y + 0.5 + flow.v[i]);
      for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == want[c]);
    }
  }
  CHECK_THROWS_AS(warp_image(img, FlowField(8, 8)), Error);
}

TEST_CASE("flo files round trip through float precision") {
  FlowField flow(7, 5);
  Rng rng(6);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    flow.u[i] = rng.uniform(-10.0, 10.0);
    flow.v[i] = rng.uniform(-10.0, 10.0);
  }
  TempPath path(".flo");
  write_flo(flow, path.str());
  const FlowField back = read_flo(path.str());
  REQUIRE(back.width == 7);
  REQUIRE(back.height == 5);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    CHECK(back.u[i] == static_cast<double>(static_cast<float>(flow.u[i])));
    CHECK(back.v[i] == static_cast<double>(static_cast<float>(flow.v[i])));
  }
}

TEST_CASE("read_flo rejects files without the magic tag") {
  TempPath path(".flo");
  std::ofstream out(path.str(), std::ios::binary);
  out << "not a flow file at all";
  out.close();
  CHECK_THROWS_AS(read_flo(path.str()), Error);
  CHECK_THROWS_AS(read_flo("/nonexistent/path.flo"), Error);
}
