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

// Frame-ablation masks: keep the peak frames (or a baseline selection of
// frames) of an activation map and zero every other row.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"
#include "peakscope/peaks.hpp"

namespace peakscope {

enum class MaskStrategy { peaks, uniform, random, midpoint };

inline const char *to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::peaks: return "peaks";
    case MaskStrategy::uniform: return "uniform";
    case MaskStrategy::random: return "random";
    case MaskStrategy::midpoint: return "midpoint";
  }
  return "?";
}

inline MaskStrategy parse_mask_strategy(const std::string &s) {
  for (auto k : {MaskStrategy::peaks, MaskStrategy::uniform, MaskStrategy::random, MaskStrategy::midpoint})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown strategy '" + s + "' (peaks, uniform, random, midpoint)");
}

struct AblationMask {
  std::vector<std::size_t> keep_frames;  // sorted, distinct
  std::size_t n_frames = 0;
  std::size_t n_channels = 0;
  std::size_t n_peaks = 0;
  MaskStrategy strategy = MaskStrategy::peaks;
  std::uint64_t seed = 0;
};

inline AblationMask build_mask(const PeakSet &peakset, std::size_t n_frames, std::size_t n_channels,
                               MaskStrategy strategy, std::uint64_t seed = 0) {
  const auto peaks = peakset.frames();
  const std::size_t np = peaks.size();
  for (auto f : peaks)
    require(f < n_frames, "peak frame " + std::to_string(f) + " outside map of " + std::to_string(n_frames) + " frames");
  require(np <= n_frames, "cannot keep " + std::to_string(np) + " frames of " + std::to_string(n_frames));
  AblationMask m{{}, n_frames, n_channels, np, strategy, seed};
  switch (strategy) {
    case MaskStrategy::peaks:
      m.keep_frames = peaks;
      break;
    case MaskStrategy::uniform: {
      // Centered strata floor((i + 0.5) * N / Np); collisions move up to the next free frame.
      std::vector<bool> used(n_frames, false);
      for (std::size_t i = 0; i < np; ++i) {
        std::size_t f = ((2 * i + 1) * n_frames) / (2 * np);
        while (used[f]) f = (f + 1) % n_frames;
        used[f] = true;
        m.keep_frames.push_back(f);
      }
      break;
    }
    case MaskStrategy::random: {
      Rng rng(seed);
      std::vector<std::size_t> pool(n_frames);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < np; ++i) std::swap(pool[i], pool[i + rng.below(n_frames - i)]);
      m.keep_frames.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(np));
      break;
    }
    case MaskStrategy::midpoint:
      for (std::size_t i = 0; i + 1 < np; ++i) m.keep_frames.push_back((peaks[i] + peaks[i + 1]) / 2);
      break;
  }
  std::sort(m.keep_frames.begin(), m.keep_frames.end());
  return m;
}

inline ActivationMap apply_mask(const ActivationMap &map, const AblationMask &mask) {
  require(mask.n_frames == map.frames() && mask.n_channels == map.channels(),
          "mask is " + std::to_string(mask.n_frames) + "x" + std::to_string(mask.n_channels) + ", map is " +
              std::to_string(map.frames()) + "x" + std::to_string(map.channels()));
  ActivationMap out = map;
  out.values = Matrix(map.frames(), map.channels());
  for (auto f : mask.keep_frames) std::copy(map.values.row(f).begin(), map.values.row(f).end(), out.values.row(f).begin());
  return out;
}

struct AblationStats {
  double kept_fraction = 0.0;
  double mean_frames_per_peak = 0.0;  // 0 when no peaks were found
  std::size_t total_frames = 0;
  std::size_t total_kept = 0;
  std::size_t total_peaks = 0;
};

inline AblationStats ablation_stats(const std::vector<AblationMask> &masks) {
  require(!masks.empty(), "ablation_stats needs at least one mask");
  AblationStats s;
  for (const auto &m : masks) {
    s.total_frames += m.n_frames;
    s.total_kept += m.keep_frames.size();
    s.total_peaks += m.n_peaks;
  }
  s.kept_fraction = s.total_frames ? static_cast<double>(s.total_kept) / s.total_frames : 0.0;
  s.mean_frames_per_peak = s.total_peaks ? static_cast<double>(s.total_frames) / s.total_peaks : 0.0;
  return s;
}

}  // namespace peakscope
