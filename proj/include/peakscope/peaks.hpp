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

// Activation envelope and derivative-of-Gaussian peak picking.
//
//   e[n] = sqrt(sum_f A[n,f]^2)
//   d[n] = sum_k h[k] e[n-k],  h[k] = -k exp(-k^2 / (2 sigma^2)) / Z
//
// Peaks are positive-to-negative zero crossings of d. Each crossing is
// scored by (max of d over the rising run) - (min of d over the falling
// run) and kept when that sharpness exceeds tau.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"

namespace peakscope {

struct Envelope {
  std::vector<double> values;
  double frame_shift_ms = 10.0;
  double frame_offset_ms = 12.5;
};

inline Envelope compute_envelope(const ActivationMap &map) {
  Envelope env{std::vector<double>(map.frames()), map.frame_shift_ms, map.frame_offset_ms};
  for (std::size_t n = 0; n < map.frames(); ++n) {
    double s = 0.0;
    for (double a : map.values.row(n)) s += a * a;
    env.values[n] = std::sqrt(s);
  }
  return env;
}

enum class DogNormalization {
  slope_unit,  // a unit-slope ramp filters to exactly 1.0
  raw,
};

struct DoGKernel {
  double sigma = 1.0;
  int radius = 1;
  DogNormalization normalization = DogNormalization::slope_unit;
  std::vector<double> taps;  // taps[k + radius] == h[k], k in [-radius, radius]

  double tap(int k) const { return taps[static_cast<std::size_t>(k + radius)]; }
};

inline int dog_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(4.0 * sigma))); }

inline DoGKernel make_dog_kernel(double sigma, DogNormalization norm = DogNormalization::slope_unit) {
  require(sigma > 0 && std::isfinite(sigma), "sigma must be > 0");
  DoGKernel kern;
  kern.sigma = sigma;
  kern.radius = dog_radius(sigma);
  kern.normalization = norm;
  const int r = kern.radius;
  double z = 0.0;
  for (int k = 1; k <= r; ++k) z += 2.0 * k * k * std::exp(-k * k / (2.0 * sigma * sigma));
  const double scale = norm == DogNormalization::slope_unit ? 1.0 / z : 1.0;
  kern.taps.assign(2 * r + 1, 0.0);
  // Only k > 0 is evaluated; mirroring makes the kernel exactly antisymmetric.
  for (int k = 1; k <= r; ++k) {
    const double h = -k * std::exp(-k * k / (2.0 * sigma * sigma)) * scale;
    kern.taps[r + k] = h;
    kern.taps[r - k] = -h;
  }
  return kern;
}

/// Index into a length-n signal under reflect padding (edge sample not repeated).
inline std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * (static_cast<long long>(n) - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

/// Same-length DoG response; rising e gives d > 0.
inline std::vector<double> dog_filter(std::span<const double> e, const DoGKernel &kern) {
  const std::size_t n = e.size();
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    // Paired form h[k] * (e[i-k] - e[i+k]): a constant signal gives exactly 0.
    for (int k = 1; k <= kern.radius; ++k) {
      const auto ii = static_cast<long long>(i);
      acc += kern.tap(k) * (e[reflect_index(ii - k, n)] - e[reflect_index(ii + k, n)]);
    }
    d[i] = acc;
  }
  return d;
}

inline std::vector<double> dog_filter(const Envelope &env, const DoGKernel &kern) {
  return dog_filter(std::span<const double>(env.values), kern);
}

struct Peak {
  std::size_t frame = 0;
  double time_s = 0.0;
  double sharpness = 0.0;

  friend bool operator==(const Peak &, const Peak &) = default;
};

struct PeakSet {
  std::string utterance_id;
  std::vector<Peak> peaks;
  double sigma = 0.0;
  double tau = 0.0;

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(peaks.size());
    for (const auto &p : peaks) t.push_back(p.time_s);
    return t;
  }
  std::vector<std::size_t> frames() const {
    std::vector<std::size_t> f;
    f.reserve(peaks.size());
    for (const auto &p : peaks) f.push_back(p.frame);
    return f;
  }
};

inline PeakSet pick_peaks(std::span<const double> d, double tau, double frame_shift_ms = 10.0,
                          double frame_offset_ms = 12.5) {
  require(tau >= 0 && std::isfinite(tau), "tau must be >= 0");
  PeakSet out;
  out.tau = tau;
  const std::size_t n = d.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(d[i] > 0.0 && d[i + 1] <= 0.0)) continue;
    double rise = d[i];
    for (std::size_t j = i; j-- > 0 && d[j] > 0.0;) rise = std::max(rise, d[j]);
    double fall = d[i + 1];
    for (std::size_t j = i + 2; j < n && d[j] <= 0.0; ++j) fall = std::min(fall, d[j]);
    const double sharpness = rise - fall;
    if (!(sharpness > tau)) continue;
    // The crossing goes to whichever neighbour is closer to zero.
    const std::size_t frame = d[i] <= -d[i + 1] ? i : i + 1;
    out.peaks.push_back({frame, (frame * frame_shift_ms + frame_offset_ms) / 1000.0, sharpness});
  }
  return out;
}

inline PeakSet detect(const Envelope &env, double sigma, double tau) {
  const auto kern = make_dog_kernel(sigma);
  const auto d = dog_filter(env, kern);
  auto ps = pick_peaks(d, tau, env.frame_shift_ms, env.frame_offset_ms);
  ps.sigma = sigma;
  return ps;
}

inline PeakSet detect(const ActivationMap &map, double sigma, double tau) {
  return detect(compute_envelope(map), sigma, tau);
}

}  // namespace peakscope
