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

#ifndef FACEFIT_CORE_COMMON_HPP_
#define FACEFIT_CORE_COMMON_HPP_

#include <cmath>
#include <stdexcept>
#include <string>

namespace facefit {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kIo,
  kFormat,
  kDegenerate,
  kDiverged,
  kNotConverged,
};

// All recoverable failures in the core surface as Error; the C boundary maps
// ErrorCode onto ff_status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a <= -M_PI) a += two_pi;
  if (a > M_PI) a -= two_pi;
  return a;
}

}  // namespace facefit

#endif  // FACEFIT_CORE_COMMON_HPP_
