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

// Log mel-filterbank spectrograms: preemphasis, Hamming window, power
// spectrum, HTK-scale triangular filters with unit area, floored natural log.

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "peakscope/core.hpp"
#include "peakscope/ingest.hpp"

namespace peakscope {

struct MelConfig {
  double sample_rate = 16000.0;
  double window_ms = 25.0;
  double shift_ms = 10.0;
  int n_fft = 512;
  int n_mels = 40;
  double fmin = 20.0;
  double fmax = 8000.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0));
  }
  std::size_t shift_samples() const {
    return static_cast<std::size_t>(std::lround(shift_ms * sample_rate / 1000.0));
  }

  void validate() const {
    require(sample_rate > 0, "sample_rate must be > 0");
    require(shift_ms > 0 && shift_samples() >= 1, "shift_ms must be > 0");
    require(window_ms >= shift_ms, "window_ms must be >= shift_ms");
    require(n_fft >= 1 && static_cast<std::size_t>(n_fft) >= window_samples(),
            "n_fft must be >= the window length in samples");
    require(n_mels >= 1, "n_mels must be >= 1");
    require(fmin >= 0 && fmin < fmax && fmax <= sample_rate / 2, "need 0 <= fmin < fmax <= sample_rate/2");
    require(preemphasis >= 0 && preemphasis < 1, "preemphasis must be in [0, 1)");
    require(log_floor > 0, "log_floor must be > 0");
  }
};

inline MelConfig default_mel_config() { return MelConfig{}; }

struct Spectrogram {
  Matrix frames;  // N x n_mels
  MelConfig config;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Filter edge/center frequencies in Hz: n_mels + 2 points equally spaced on
/// the mel scale; filter m spans [f[m], f[m+2]] and peaks at f[m+1].
inline std::vector<double> mel_points_hz(const MelConfig &c) {
  const double lo = hz_to_mel(c.fmin), hi = hz_to_mel(c.fmax);
  std::vector<double> pts(c.n_mels + 2);
  for (int i = 0; i < c.n_mels + 2; ++i) pts[i] = mel_to_hz(lo + (hi - lo) * i / (c.n_mels + 1));
  return pts;
}

/// n_mels x (n_fft/2 + 1) weights. Each triangle is scaled by
/// 2 / (upper - lower) so that its area over frequency is one.
inline Matrix mel_filterbank(const MelConfig &c) {
  const auto pts = mel_points_hz(c);
  const std::size_t n_bins = static_cast<std::size_t>(c.n_fft) / 2 + 1;
  Matrix w(c.n_mels, n_bins);
  for (int m = 0; m < c.n_mels; ++m) {
    const double left = pts[m], center = pts[m + 1], right = pts[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = k * c.sample_rate / c.n_fft;
      double v = 0.0;
      if (f > left && f < center)
        v = (f - left) / (center - left);
      else if (f >= center && f < right)
        v = (right - f) / (right - center);
      w(m, k) = v * norm;
    }
  }
  return w;
}

namespace frontend_detail {

// FFTW's planner is not re-entrant; execution on distinct buffers is.
inline std::mutex &planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *input() { return in_; }

  // |X[k]|^2 for k in [0, n/2].
  void power(std::vector<double> &out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double *in_;
  fftw_complex *out_;
  fftw_plan plan_;
};

}  // namespace frontend_detail

inline std::size_t melspec_frame_count(std::size_t n_samples, const MelConfig &c) {
  const std::size_t win = c.window_samples();
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / c.shift_samples();
}

inline Spectrogram melspec(const Waveform &wave, const MelConfig &config) {
  config.validate();
  require(wave.sample_rate == config.sample_rate, "waveform sample rate " + std::to_string(wave.sample_rate) +
                                                      " does not match config " +
                                                      std::to_string(config.sample_rate));
  const std::size_t win = config.window_samples();
  const std::size_t shift = config.shift_samples();
  require(wave.samples.size() >= win, "waveform shorter than one analysis window");
  const std::size_t n_frames = melspec_frame_count(wave.samples.size(), config);

  std::vector<double> emphasized(wave.samples.size());
  emphasized[0] = wave.samples[0];
  for (std::size_t i = 1; i < wave.samples.size(); ++i)
    emphasized[i] = wave.samples[i] - config.preemphasis * wave.samples[i - 1];

  std::vector<double> hamming(win);
  for (std::size_t i = 0; i < win; ++i)
    hamming[i] = win == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));

  const Matrix bank = mel_filterbank(config);
  frontend_detail::RealFft fft(config.n_fft);
  std::vector<double> power;
  Spectrogram spec{Matrix(n_frames, config.n_mels), config};
  const double log_floor = std::log(config.log_floor);
  for (std::size_t t = 0; t < n_frames; ++t) {
    double *buf = fft.input();
    for (std::size_t i = 0; i < static_cast<std::size_t>(config.n_fft); ++i)
      buf[i] = i < win ? emphasized[t * shift + i] * hamming[i] : 0.0;
    fft.power(power);
    for (int m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      const auto weights = bank.row(m);
      for (std::size_t k = 0; k < power.size(); ++k) e += weights[k] * power[k];
      spec.frames(t, m) = std::max(std::log(std::max(e, config.log_floor)), log_floor);
    }
  }
  return spec;
}

}  // namespace peakscope
