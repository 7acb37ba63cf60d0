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
#include <cstdio>
#include <cstring>
#include <numeric>

#include "core/common.hpp"

namespace facefit {
namespace {

// Relaxation factor for the in-place solver and the per-step displacement
// clamp keeping each update inside the linearization range.
constexpr double kRelaxation = 1.9;
constexpr double kStepClamp = 1.0;

GrayImage blur3(const GrayImage& img) {
  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int xm = std::max(0, x - 1);
      const int xp = std::min(img.width - 1, x + 1);
      tmp.at(x, y) = 0.25 * (img.at(xm, y) + 2.0 * img.at(x, y) + img.at(xp, y));
    }
  }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const int ym = std::max(0, y - 1);
    const int yp = std::min(img.height - 1, y + 1);
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) =
          0.25 * (tmp.at(x, ym) + 2.0 * tmp.at(x, y) + tmp.at(x, yp));
    }
  }
  return out;
}

GrayImage resize_gray(const GrayImage& img, int nw, int nh) {
  GrayImage out(nw, nh);
  const double sx = static_cast<double>(img.width) / nw;
  const double sy = static_cast<double>(img.height) / nh;
  for (int y = 0; y < nh; ++y) {
    for (int x = 0; x < nw; ++x) {
      out.at(x, y) = bilinear_sample(img, (x + 0.5) * sx, (y + 0.5) * sy);
    }
  }
  return out;
}

void standardize(GrayImage* img) {
  const size_t n = img->data.size();
  const double mean =
      std::accumulate(img->data.begin(), img->data.end(), 0.0) / n;
  double var = 0.0;
  for (double v : img->data) var += (v - mean) * (v - mean);
  const double dev = std::sqrt(var / n);
  const double scale = dev > 1e-12 ? 1.0 / dev : 0.0;
  for (double& v : img->data) v = (v - mean) * scale;
}

GrayImage warp_gray(const GrayImage& img, const std::vector<double>& u,
                    const std::vector<double>& v) {
  GrayImage out(img.width, img.height);
  size_t i = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x, ++i) {
      out.data[i] = bilinear_sample(img, x + 0.5 + u[i], y + 0.5 + v[i]);
    }
  }
  return out;
}

void median3(std::vector<double>* field, int w, int h) {
  std::vector<double> src = *field;
  double window[9];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          window[n++] = src[static_cast<size_t>(ny) * w + nx];
        }
      }
      std::nth_element(window, window + n / 2, window + n);
      (*field)[static_cast<size_t>(y) * w + x] = window[n / 2];
    }
  }
}

void clamp_magnitude(std::vector<double>* u, std::vector<double>* v,
                     double bound) {
  for (size_t i = 0; i < u->size(); ++i) {
    const double mag = std::hypot((*u)[i], (*v)[i]);
    if (mag > bound) {
      const double s = bound / mag;
      (*u)[i] *= s;
      (*v)[i] *= s;
    }
  }
}

// One pyramid level of incremental solves: repeatedly warp `from` by the
// current field, linearize the residual, and relax the displacement update
// with a smoothness coupling to the neighbor average of the total field.
void solve_level(const GrayImage& from, const GrayImage& to,
                 const FlowConfig& config, std::vector<double>* fu,
                 std::vector<double>* fv) {
  const int w = from.width, h = from.height;
  const size_t n = static_cast<size_t>(w) * h;
  const double alpha = config.smooth_weight;
  std::vector<double> ix(n), iy(n), it(n), du(n), dv(n);
  const auto at = [w](int x, int y) {
    return static_cast<size_t>(y) * w + x;
  };
  for (int iter = 0; iter < config.warp_iters; ++iter) {
    const GrayImage warped = warp_gray(from, *fu, *fv);
    for (int y = 0; y < h; ++y) {
      const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
      for (int x = 0; x < w; ++x) {
        const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
        const size_t i = at(x, y);
        ix[i] = 0.25 * (warped.at(xp, y) - warped.at(xm, y) + to.at(xp, y) -
                        to.at(xm, y));
        iy[i] = 0.25 * (warped.at(x, yp) - warped.at(x, ym) + to.at(x, yp) -
                        to.at(x, ym));
        it[i] = warped.data[i] - to.data[i];
      }
    }
    std::fill(du.begin(), du.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    // In-place successive over-relaxation in raster order; deterministic.
    const double omega = kRelaxation;
    for (int relax = 0; relax < config.solver_iters; ++relax) {
      for (int y = 0; y < h; ++y) {
        const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
        for (int x = 0; x < w; ++x) {
          const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
          const size_t i = at(x, y);
          const size_t l = at(xm, y), r = at(xp, y), t = at(x, ym),
                       b = at(x, yp);
          // Neighbor average of the total field, expressed as an update.
          const double au = 0.25 * ((*fu)[l] + du[l] + (*fu)[r] + du[r] +
                                    (*fu)[t] + du[t] + (*fu)[b] + du[b]) -
                            (*fu)[i];
          const double av = 0.25 * ((*fv)[l] + dv[l] + (*fv)[r] + dv[r] +
                                    (*fv)[t] + dv[t] + (*fv)[b] + dv[b]) -
                            (*fv)[i];
          const double denom = alpha + ix[i] * ix[i] + iy[i] * iy[i];
          const double common = (ix[i] * au + iy[i] * av + it[i]) / denom;
          du[i] += omega * (au - ix[i] * common - du[i]);
          dv[i] += omega * (av - iy[i] * common - dv[i]);
        }
      }
    }
    for (size_t i = 0; i < n; ++i) {
      (*fu)[i] += std::clamp(du[i], -kStepClamp, kStepClamp);
      (*fv)[i] += std::clamp(dv[i], -kStepClamp, kStepClamp);
    }
    if (config.median_filter) {
      median3(fu, w, h);
      median3(fv, w, h);
    }
    clamp_magnitude(fu, fv, config.max_displacement);
  }
}

double mean_abs_diff(const RgbImage& a, const RgbImage& b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    sum += std::abs(a.data[i] - b.data[i]);
  }
  return sum / a.data.size();
}

}  // namespace

void FlowConfig::validate() const {
  require(levels >= 1 && levels <= 12, ErrorCode::kInvalidArgument,
          "flow levels out of range");
  require(level_scale > 0.2 && level_scale < 0.95, ErrorCode::kInvalidArgument,
          "flow level scale out of range");
  require(warp_iters >= 1 && solver_iters >= 1, ErrorCode::kInvalidArgument,
          "flow iteration counts must be positive");
  require(std::isfinite(smooth_weight) && smooth_weight > 0,
          ErrorCode::kInvalidArgument, "flow smooth weight must be positive");
  require(std::isfinite(max_displacement) && max_displacement > 0,
          ErrorCode::kInvalidArgument,
          "flow displacement bound must be positive");
}

FlowField estimate_flow(const RgbImage& from, const RgbImage& to,
                        const FlowConfig& config) {
  config.validate();
  require(from.same_size(to), ErrorCode::kDimensionMismatch,
          "flow inputs must share dimensions");
  require(from.width >= 4 && from.height >= 4, ErrorCode::kInvalidArgument,
          "flow inputs too small");

  GrayImage g_from = to_gray(from);
  GrayImage g_to = to_gray(to);
  if (config.normalize) {
    standardize(&g_from);
    standardize(&g_to);
  } else {
    // Fixed gain keeps the smoothing weight on the same contrast scale as
    // the normalized mode without cancelling brightness differences.
    for (double& v : g_from.data) v *= 4.0;
    for (double& v : g_to.data) v *= 4.0;
  }

  struct Level {
    GrayImage from, to;
  };
  std::vector<Level> pyramid;
  pyramid.push_back({g_from, g_to});
  for (int l = 1; l < config.levels; ++l) {
    const GrayImage& pf = pyramid.back().from;
    const int nw = std::max(4, static_cast<int>(
                                   std::lround(pf.width * config.level_scale)));
    const int nh = std::max(
        4, static_cast<int>(std::lround(pf.height * config.level_scale)));
    if (nw == pf.width && nh == pf.height) break;
    pyramid.push_back({resize_gray(blur3(pyramid.back().from), nw, nh),
                       resize_gray(blur3(pyramid.back().to), nw, nh)});
    if (nw <= 8 && nh <= 8) break;
  }

  std::vector<double> fu, fv;
  for (int l = static_cast<int>(pyramid.size()) - 1; l >= 0; --l) {
    const Level& level = pyramid[l];
    const int w = level.from.width, h = level.from.height;
    const size_t n = static_cast<size_t>(w) * h;
    if (fu.empty()) {
      fu.assign(n, 0.0);
      fv.assign(n, 0.0);
    } else {
      const Level& prev = pyramid[l + 1];
      GrayImage cu(prev.from.width, prev.from.height);
      GrayImage cv(prev.from.width, prev.from.height);
      cu.data = fu;
      cv.data = fv;
      const GrayImage ru = resize_gray(cu, w, h);
      const GrayImage rv = resize_gray(cv, w, h);
      const double rx = static_cast<double>(w) / prev.from.width;
      const double ry = static_cast<double>(h) / prev.from.height;
      fu.assign(n, 0.0);
      fv.assign(n, 0.0);
      for (size_t i = 0; i < n; ++i) {
        fu[i] = ru.data[i] * rx;
        fv[i] = rv.data[i] * ry;
      }
    }
    solve_level(level.from, level.to, config, &fu, &fv);
  }

  FlowField flow(from.width, from.height);
  flow.u = std::move(fu);
  flow.v = std::move(fv);

  // A field that fails to improve on the zero field is discarded.
  if (mean_abs_diff(warp_image(from, flow), to) > mean_abs_diff(from, to)) {
    std::fill(flow.u.begin(), flow.u.end(), 0.0);
    std::fill(flow.v.begin(), flow.v.end(), 0.0);
  }
  return flow;
}

double flow_magnitude(const FlowField& flow, const VisibilityMask& mask) {
  require(flow.width == mask.width && flow.height == mask.height,
          ErrorCode::kDimensionMismatch, "flow and mask dimensions differ");
  double sum = 0.0;
  for (size_t i = 0; i < flow.u.size(); ++i) {
    if (!mask.membership[i]) continue;
    sum += flow.u[i] * flow.u[i] + flow.v[i] * flow.v[i];
  }
  return sum;
}

RgbImage warp_image(const RgbImage& image, const FlowField& flow) {
  require(image.width == flow.width && image.height == flow.height,
          ErrorCode::kDimensionMismatch, "image and flow dimensions differ");
  RgbImage out(image.width, image.height);
  size_t i = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x, ++i) {
      const Eigen::Vector3d c =
          bilinear_sample(image, x + 0.5 + flow.u[i], y + 0.5 + flow.v[i]);
      out.data[3 * i] = c[0];
      out.data[3 * i + 1] = c[1];
      out.data[3 * i + 2] = c[2];
    }
  }
  return out;
}

void write_flo(const FlowField& flow, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, ErrorCode::kIo, "cannot open flow file for writing");
  const float tag = 202021.25f;
  const int32_t w = flow.width, h = flow.height;
  bool ok = std::fwrite(&tag, sizeof tag, 1, f) == 1 &&
            std::fwrite(&w, sizeof w, 1, f) == 1 &&
            std::fwrite(&h, sizeof h, 1, f) == 1;
  for (int y = 0; ok && y < h; ++y) {
    for (int x = 0; ok && x < w; ++x) {
      const float uv[2] = {static_cast<float>(flow.u[flow.index(x, y)]),
                           static_cast<float>(flow.v[flow.index(x, y)])};
      ok = std::fwrite(uv, sizeof uv, 1, f) == 1;
    }
  }
  std::fclose(f);
  require(ok, ErrorCode::kIo, "flow file write failed");
}

FlowField read_flo(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  require(f != nullptr, ErrorCode::kIo, "cannot open flow file");
  float tag = 0.0f;
  int32_t w = 0, h = 0;
  bool ok = std::fread(&tag, sizeof tag, 1, f) == 1 &&
            std::fread(&w, sizeof w, 1, f) == 1 &&
            std::fread(&h, sizeof h, 1, f) == 1;
  if (!ok || tag != 202021.25f || w <= 0 || h <= 0 || w > 1 << 16 ||
      h > 1 << 16) {
    std::fclose(f);
    fail(ErrorCode::kFormat, "not a flow file");
  }
  FlowField flow(w, h);
  for (int y = 0; ok && y < h; ++y) {
    for (int x = 0; ok && x < w; ++x) {
      float uv[2];
      ok = std::fread(uv, sizeof uv, 1, f) == 1;
      if (ok) {
        flow.u[flow.index(x, y)] = uv[0];
        flow.v[flow.index(x, y)] = uv[1];
      }
    }
  }
  std::fclose(f);
  require(ok, ErrorCode::kFormat, "flow file truncated");
  return flow;
}

}  // namespace facefit
