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

// Synthetic activation corpora with known transition frames.
//
// Each utterance is a run of segments. A segment repeats its planted class's
// sparse non-negative channel pattern (unit L2 norm) on every frame. The first
// frame of every segment after the first is a transition: it additionally
// carries `transition_bump` along the normalized sum of the left and right
// patterns. Folded Gaussian noise |N(0, noise_sigma)| is added everywhere.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"
#include "peakscope/ingest.hpp"
#include "peakscope/phone_map.hpp"
#include "peakscope/tensorio.hpp"

namespace peakscope {

struct SynthConfig {
  std::size_t n_utterances = 50;
  std::size_t frames_min = 200, frames_max = 400;
  std::size_t channels = 64;
  std::size_t segments_min = 6, segments_max = 10;
  std::size_t min_segment_frames = 8;
  std::size_t active_channels = 8;
  double transition_bump = 1.0;
  double noise_sigma = 0.0;
  std::size_t n_planted_classes = 4;
  std::uint64_t seed = 1;
  double frame_shift_ms = 10.0;
  double frame_offset_ms = 12.5;
  double sample_rate = 16000.0;

  void validate() const {
    require(n_utterances >= 1, "n_utterances must be >= 1");
    require(frames_min >= 1 && frames_min <= frames_max, "need 1 <= frames_min <= frames_max");
    require(channels >= 1, "channels must be >= 1");
    require(segments_min >= 1 && segments_min <= segments_max, "need 1 <= segments_min <= segments_max");
    require(min_segment_frames >= 1, "min_segment_frames must be >= 1");
    require(segments_max * min_segment_frames <= frames_min,
            "frames_min too small for segments_max segments of min_segment_frames");
    require(active_channels >= 1 && active_channels <= channels, "active_channels must be in [1, channels]");
    require(transition_bump >= 0, "transition_bump must be >= 0");
    require(noise_sigma >= 0, "noise_sigma must be >= 0");
    require(n_planted_classes >= 1, "n_planted_classes must be >= 1");
    require(frame_shift_ms > 0, "frame_shift_ms must be > 0");
    require(sample_rate > 0, "sample_rate must be > 0");
  }
};

struct SynthUtterance {
  std::string id;
  ActivationMap map;
  PhoneTier tier;
  std::vector<std::size_t> transition_frames;
  std::vector<std::pair<std::size_t, std::size_t>> transition_classes;  // (left, right)
  std::vector<std::size_t> segment_classes;
};

struct SynthCorpus {
  SynthConfig config;
  Matrix class_patterns;  // n_planted_classes x channels
  std::vector<SynthUtterance> utterances;
};

namespace synth_detail {

// Planted class c draws its phones from the inventory of manner c % 7.
inline const std::vector<std::vector<std::string>> &phone_inventories() {
  static const std::vector<std::vector<std::string>> inv = {
      {"iy", "aa", "uw", "eh", "ae", "ow"},  // vowel
      {"s", "sh", "f", "z", "v"},            // fricative
      {"m", "n", "ng"},                      // nasal
      {"p", "t", "k", "b", "d", "g"},        // stop
      {"l", "r", "w", "y"},                  // semivowel
      {"jh", "ch"},                          // affricate
      {"dx"},                                // flap
  };
  return inv;
}

inline std::int64_t time_to_sample(double ms, double sample_rate) {
  return static_cast<std::int64_t>(std::llround(ms * sample_rate / 1000.0));
}

}  // namespace synth_detail

inline const std::vector<std::string> &synth_phones_for_class(std::size_t planted_class) {
  const auto &inv = synth_detail::phone_inventories();
  return inv[planted_class % inv.size()];
}

inline SynthCorpus generate(const SynthConfig &config) {
  config.validate();
  using namespace synth_detail;
  const Rng root(config.seed);
  SynthCorpus corpus{config, Matrix(config.n_planted_classes, config.channels), {}};

  Rng pattern_rng = root.fork(0);
  for (std::size_t c = 0; c < config.n_planted_classes; ++c) {
    std::vector<std::size_t> idx(config.channels);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < config.active_channels; ++i)
      std::swap(idx[i], idx[i + pattern_rng.below(config.channels - i)]);
    double norm = 0.0;
    for (std::size_t i = 0; i < config.active_channels; ++i) {
      const double v = pattern_rng.uniform(0.5, 1.5);
      corpus.class_patterns(c, idx[i]) = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto &v : corpus.class_patterns.row(c)) v /= norm;
  }

  for (std::size_t u = 0; u < config.n_utterances; ++u) {
    Rng rng = root.fork(u + 1);
    SynthUtterance utt;
    char id[32];
    std::snprintf(id, sizeof id, "synth%04zu", u);
    utt.id = id;
    const auto n_frames = static_cast<std::size_t>(rng.between(config.frames_min, config.frames_max));
    const auto n_seg = static_cast<std::size_t>(rng.between(config.segments_min, config.segments_max));

    // Segment lengths: min_segment_frames each plus a random split of the rest.
    const std::size_t extra = n_frames - n_seg * config.min_segment_frames;
    std::vector<std::size_t> cuts;
    for (std::size_t i = 0; i + 1 < n_seg; ++i) cuts.push_back(static_cast<std::size_t>(rng.below(extra + 1)));
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < cuts.size(); ++i) starts.push_back(cuts[i] + (i + 1) * config.min_segment_frames);

    // Classes and phones; neighbouring segments never share a phone symbol.
    std::vector<std::string> phones;
    for (std::size_t s = 0; s < n_seg; ++s) {
      while (true) {
        const auto c = static_cast<std::size_t>(rng.below(config.n_planted_classes));
        const auto &inv = synth_phones_for_class(c);
        std::vector<std::string> options;
        for (const auto &p : inv)
          if (phones.empty() || p != phones.back()) options.push_back(p);
        if (options.empty()) continue;
        utt.segment_classes.push_back(c);
        phones.push_back(options[rng.below(options.size())]);
        break;
      }
    }

    Matrix values(n_frames, config.channels);
    for (std::size_t s = 0; s < n_seg; ++s) {
      const std::size_t end = s + 1 < n_seg ? starts[s + 1] : n_frames;
      const auto pattern = corpus.class_patterns.row(utt.segment_classes[s]);
      for (std::size_t t = starts[s]; t < end; ++t) std::copy(pattern.begin(), pattern.end(), values.row(t).begin());
    }
    for (std::size_t s = 1; s < n_seg; ++s) {
      const std::size_t t = starts[s];
      const auto left = utt.segment_classes[s - 1], right = utt.segment_classes[s];
      std::vector<double> dir(config.channels);
      double norm = 0.0;
      for (std::size_t j = 0; j < config.channels; ++j) {
        dir[j] = corpus.class_patterns(left, j) + corpus.class_patterns(right, j);
        norm += dir[j] * dir[j];
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < config.channels; ++j) values(t, j) += config.transition_bump * dir[j] / norm;
      utt.transition_frames.push_back(t);
      utt.transition_classes.emplace_back(left, right);
    }
    if (config.noise_sigma > 0)
      for (auto &v : values.data()) v += std::fabs(config.noise_sigma * rng.normal());

    utt.map = ActivationMap{std::move(values), config.frame_shift_ms, config.frame_offset_ms, "synth"};

    // Tier boundaries sit at the center times of the transition frames.
    utt.tier.sample_rate = config.sample_rate;
    auto frame_sample = [&](std::size_t t) {
      return time_to_sample(t * config.frame_shift_ms + config.frame_offset_ms, config.sample_rate);
    };
    for (std::size_t s = 0; s < n_seg; ++s) {
      const std::int64_t start = s == 0 ? 0 : frame_sample(starts[s]);
      const std::int64_t end = s + 1 < n_seg ? frame_sample(starts[s + 1]) : frame_sample(n_frames);
      utt.tier.segments.push_back({start, end, phones[s]});
    }
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

/// Writes <dir>/<id>.npy (f32), <dir>/<id>.phn, <dir>/transitions.csv and
/// <dir>/manifest.json.
inline CorpusManifest write_synth_corpus(const SynthCorpus &corpus, const std::filesystem::path &dir) {
  CorpusManifest manifest;
  manifest.frame_shift_ms = corpus.config.frame_shift_ms;
  manifest.frame_offset_ms = corpus.config.frame_offset_ms;
  manifest.sample_rate_hz = corpus.config.sample_rate;
  std::string transitions = "id,frame,left_class,right_class\n";
  for (const auto &u : corpus.utterances) {
    ManifestEntry e{u.id, dir / (u.id + ".npy"), dir / (u.id + ".phn"), std::nullopt};
    write_tensor(e.activations, Tensor::from_matrix(u.map.values, DType::f32));
    write_file_atomic(*e.phn, format_phn(u.tier));
    for (std::size_t i = 0; i < u.transition_frames.size(); ++i)
      transitions += u.id + "," + std::to_string(u.transition_frames[i]) + "," +
                     std::to_string(u.transition_classes[i].first) + "," +
                     std::to_string(u.transition_classes[i].second) + "\n";
    manifest.entries.push_back(std::move(e));
  }
  write_file_atomic(dir / "transitions.csv", transitions);
  write_manifest(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace peakscope
