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

// Tolerance-window boundary scoring and (sigma, tau) grid search.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"
#include "peakscope/ingest.hpp"
#include "peakscope/peaks.hpp"

namespace peakscope {

struct EvalConfig {
  double tolerance_s = 0.020;  // +/- window around each reference boundary
};

struct EvalResult {
  std::size_t true_positives = 0;
  std::size_t n_detected = 0;
  std::size_t n_reference = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static EvalResult from_counts(std::size_t tp, std::size_t n_det, std::size_t n_ref) {
    EvalResult r{tp, n_det, n_ref};
    r.precision = n_det ? static_cast<double>(tp) / n_det : 0.0;
    r.recall = n_ref ? static_cast<double>(tp) / n_ref : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
  }
};

/// One-to-one matching of two ascending time lists: advance two cursors,
/// pair the heads when they are within `tolerance`, otherwise drop the
/// earlier head. For interval tolerance this greedy pass is a maximum
/// matching.
inline std::size_t match_boundaries(std::span<const double> detected, std::span<const double> reference,
                                    double tolerance) {
  require(tolerance >= 0, "tolerance must be >= 0");
  require(std::is_sorted(detected.begin(), detected.end()), "detected boundaries must be sorted");
  require(std::is_sorted(reference.begin(), reference.end()), "reference boundaries must be sorted");
  // Frame times and sample times rarely land on the same binary fraction;
  // a nanosecond of slack keeps an exact 20 ms offset inside the window.
  const double window = tolerance + 1e-9;
  std::size_t i = 0, j = 0, tp = 0;
  while (i < detected.size() && j < reference.size()) {
    if (std::fabs(detected[i] - reference[j]) <= window) {
      ++tp;
      ++i;
      ++j;
    } else if (detected[i] < reference[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return tp;
}

inline EvalResult evaluate(std::span<const double> detected, std::span<const double> reference,
                           const EvalConfig &config = {}) {
  return EvalResult::from_counts(match_boundaries(detected, reference, config.tolerance_s), detected.size(),
                                 reference.size());
}

/// Micro-averaged corpus score: counts are pooled before P/R/F1.
inline EvalResult evaluate_corpus(const std::vector<PeakSet> &peaksets,
                                  const std::map<std::string, PhoneTier> &tiers, const EvalConfig &config = {}) {
  require(peaksets.size() == tiers.size(), "peak sets and tiers cover different utterances");
  std::size_t tp = 0, n_det = 0, n_ref = 0;
  for (const auto &ps : peaksets) {
    auto it = tiers.find(ps.utterance_id);
    require(it != tiers.end(), "no reference tier for utterance '" + ps.utterance_id + "'");
    const auto det = ps.times();
    const auto ref = tier_boundaries(it->second);
    tp += match_boundaries(det, ref, config.tolerance_s);
    n_det += det.size();
    n_ref += ref.size();
  }
  return EvalResult::from_counts(tp, n_det, n_ref);
}

struct CorpusUtterance {
  std::string id;
  ActivationMap map;
  PhoneTier tier;
};

struct GridRow {
  double sigma = 0.0;
  double tau = 0.0;
  EvalResult result;
};

struct GridResult {
  std::vector<GridRow> rows;  // sigma-major
  GridRow best;
};

inline std::vector<double> default_sigma_grid() { return {0.3, 0.5, 0.7, 1.0, 1.5, 2.0}; }

/// 13 log-spaced points over [0.01, 1.0] plus 0.15, ascending.
inline std::vector<double> default_tau_grid() {
  std::vector<double> g;
  for (int i = 0; i < 13; ++i) g.push_back(std::pow(10.0, -2.0 + 2.0 * i / 12.0));
  g.push_back(0.15);
  std::sort(g.begin(), g.end());
  return g;
}

/// Full Cartesian sweep. Envelopes are computed once per utterance and DoG
/// responses once per (utterance, sigma). Rows are filled by index, so the
/// result is independent of `threads`.
inline GridResult grid_search(const std::vector<CorpusUtterance> &corpus, const std::vector<double> &sigma_grid,
                              const std::vector<double> &tau_grid, const EvalConfig &config = {},
                              std::size_t threads = 1) {
  require(!sigma_grid.empty() && !tau_grid.empty(), "grids must be non-empty");
  for (double s : sigma_grid) require(s > 0, "sigma must be > 0");
  for (double t : tau_grid) require(t >= 0, "tau must be >= 0");

  const std::size_t n_utt = corpus.size();
  std::vector<Envelope> envelopes(n_utt);
  std::vector<std::vector<double>> references(n_utt);
  parallel_for(n_utt, threads, [&](std::size_t u) {
    envelopes[u] = compute_envelope(corpus[u].map);
    references[u] = tier_boundaries(corpus[u].tier);
  });

  const std::size_t n_tau = tau_grid.size();
  // counts[(s * n_tau + t) * n_utt + u] = {tp, n_det}
  std::vector<std::pair<std::size_t, std::size_t>> counts(sigma_grid.size() * n_tau * n_utt);
  for (std::size_t s = 0; s < sigma_grid.size(); ++s) {
    const auto kern = make_dog_kernel(sigma_grid[s]);
    parallel_for(n_utt, threads, [&](std::size_t u) {
      const auto d = dog_filter(envelopes[u], kern);
      for (std::size_t t = 0; t < n_tau; ++t) {
        const auto ps = pick_peaks(d, tau_grid[t], envelopes[u].frame_shift_ms, envelopes[u].frame_offset_ms);
        const auto det = ps.times();
        counts[(s * n_tau + t) * n_utt + u] = {match_boundaries(det, references[u], config.tolerance_s),
                                               det.size()};
      }
    });
  }

  std::size_t n_ref = 0;
  for (const auto &r : references) n_ref += r.size();
  GridResult out;
  bool have_best = false;
  for (std::size_t s = 0; s < sigma_grid.size(); ++s)
    for (std::size_t t = 0; t < n_tau; ++t) {
      std::size_t tp = 0, n_det = 0;
      for (std::size_t u = 0; u < n_utt; ++u) {
        tp += counts[(s * n_tau + t) * n_utt + u].first;
        n_det += counts[(s * n_tau + t) * n_utt + u].second;
      }
      GridRow row{sigma_grid[s], tau_grid[t], EvalResult::from_counts(tp, n_det, n_ref)};
      if (!have_best || row.result.f1 > out.best.result.f1) {
        out.best = row;
        have_best = true;
      }
      out.rows.push_back(row);
    }
  return out;
}

}  // namespace peakscope
