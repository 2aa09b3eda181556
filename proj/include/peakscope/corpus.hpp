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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "peakscope/activation.hpp"
#include "peakscope/boundary_eval.hpp"
#include "peakscope/ingest.hpp"
#include "peakscope/tensorio.hpp"

namespace peakscope {

inline ActivationMap load_activation_map(const ManifestEntry &e, const CorpusManifest &m) {
  const auto t = read_tensor(e.activations);
  if (t.shape().size() != 2)
    throw FormatError(e.activations.string() + ": activation tensor must be N x F, got " +
                      std::to_string(t.shape().size()) + " axes");
  return ActivationMap{t.to_matrix(), m.frame_shift_ms, m.frame_offset_ms, ""};
}

/// Loads every manifest entry. With `require_tiers`, entries without a .phn
/// are an error; otherwise their tier is left empty.
inline std::vector<CorpusUtterance> load_corpus(const CorpusManifest &m, bool require_tiers = true,
                                                std::size_t threads = 1) {
  std::vector<CorpusUtterance> out(m.entries.size());
  parallel_for(m.entries.size(), threads, [&](std::size_t i) {
    const auto &e = m.entries[i];
    out[i].id = e.id;
    out[i].map = load_activation_map(e, m);
    if (e.phn) {
      out[i].tier = read_phn(*e.phn, m.sample_rate_hz);
    } else if (require_tiers) {
      throw ValidationError("utterance '" + e.id + "' has no phn annotation");
    }
  });
  return out;
}

inline std::map<std::string, PhoneTier> tiers_by_id(const std::vector<CorpusUtterance> &corpus) {
  std::map<std::string, PhoneTier> out;
  for (const auto &u : corpus) out.emplace(u.id, u.tier);
  return out;
}

}  // namespace peakscope
