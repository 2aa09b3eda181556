// Copyright 2026 The peakscope Authors
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

#pragma once

#include <string>

#include "peakscope/core.hpp"

namespace peakscope {

/// N x F activations tapped from one network layer. Frame n is centered at
/// n * frame_shift_ms + frame_offset_ms.
struct ActivationMap {
  Matrix values;
  double frame_shift_ms = 10.0;
  double frame_offset_ms = 12.5;
  std::string tap_layer;

  std::size_t frames() const { return values.rows(); }
  std::size_t channels() const { return values.cols(); }

  double frame_time_s(std::size_t n) const {
    return (static_cast<double>(n) * frame_shift_ms + frame_offset_ms) / 1000.0;
  }
};

}  // namespace peakscope
