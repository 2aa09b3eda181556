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

// TIMIT 61-symbol inventory folded to the 39-class set, except that stop
// closures fold into their stop (bcl -> b, ..., kcl -> k) instead of
// silence. Each reduced phone carries a broad manner class.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "peakscope/core.hpp"
#include "peakscope/fileio.hpp"

namespace peakscope {

enum class Manner { vowel, stop, nasal, fricative, semivowel, affricate, flap, silence };

inline const char *to_string(Manner m) {
  switch (m) {
    case Manner::vowel: return "vowel";
    case Manner::stop: return "stop";
    case Manner::nasal: return "nasal";
    case Manner::fricative: return "fricative";
    case Manner::semivowel: return "semivowel";
    case Manner::affricate: return "affricate";
    case Manner::flap: return "flap";
    case Manner::silence: return "silence";
  }
  return "?";
}

inline Manner parse_manner(std::string_view s) {
  for (auto m : {Manner::vowel, Manner::stop, Manner::nasal, Manner::fricative, Manner::semivowel,
                 Manner::affricate, Manner::flap, Manner::silence})
    if (s == to_string(m)) return m;
  throw FormatError("unknown manner class '" + std::string(s) + "'");
}

struct PhoneMapEntry {
  const char *surface;
  const char *reduced;
  Manner manner;
};

// clang-format off
inline constexpr PhoneMapEntry kTimitPhoneMap[] = {
  // vowels
  {"iy", "iy", Manner::vowel}, {"ih", "ih", Manner::vowel}, {"ix", "ih", Manner::vowel},
  {"eh", "eh", Manner::vowel}, {"ey", "ey", Manner::vowel}, {"ae", "ae", Manner::vowel},
  {"aa", "aa", Manner::vowel}, {"ao", "aa", Manner::vowel}, {"aw", "aw", Manner::vowel},
  {"ay", "ay", Manner::vowel}, {"ah", "ah", Manner::vowel}, {"ax", "ah", Manner::vowel},
  {"ax-h", "ah", Manner::vowel}, {"oy", "oy", Manner::vowel}, {"ow", "ow", Manner::vowel},
  {"uh", "uh", Manner::vowel}, {"uw", "uw", Manner::vowel}, {"ux", "uw", Manner::vowel},
  {"er", "er", Manner::vowel}, {"axr", "er", Manner::vowel},
  // stops and their closures
  {"b", "b", Manner::stop}, {"bcl", "b", Manner::stop},
  {"d", "d", Manner::stop}, {"dcl", "d", Manner::stop},
  {"g", "g", Manner::stop}, {"gcl", "g", Manner::stop},
  {"p", "p", Manner::stop}, {"pcl", "p", Manner::stop},
  {"t", "t", Manner::stop}, {"tcl", "t", Manner::stop},
  {"k", "k", Manner::stop}, {"kcl", "k", Manner::stop},
  // affricates
  {"jh", "jh", Manner::affricate}, {"ch", "ch", Manner::affricate},
  // fricatives
  {"s", "s", Manner::fricative}, {"sh", "sh", Manner::fricative}, {"zh", "sh", Manner::fricative},
  {"z", "z", Manner::fricative}, {"f", "f", Manner::fricative}, {"th", "th", Manner::fricative},
  {"v", "v", Manner::fricative}, {"dh", "dh", Manner::fricative},
  // nasals
  {"m", "m", Manner::nasal}, {"em", "m", Manner::nasal}, {"n", "n", Manner::nasal},
  {"en", "n", Manner::nasal}, {"nx", "n", Manner::nasal}, {"ng", "ng", Manner::nasal},
  {"eng", "ng", Manner::nasal},
  // semivowels and glides
  {"l", "l", Manner::semivowel}, {"el", "l", Manner::semivowel}, {"r", "r", Manner::semivowel},
  {"w", "w", Manner::semivowel}, {"y", "y", Manner::semivowel}, {"hh", "hh", Manner::semivowel},
  {"hv", "hh", Manner::semivowel},
  // flap
  {"dx", "dx", Manner::flap},
  // silence; "q" (glottal stop) has no 39-set class and is treated as silence
  {"h#", "sil", Manner::silence}, {"pau", "sil", Manner::silence}, {"epi", "sil", Manner::silence},
  {"q", "sil", Manner::silence},
};
// clang-format on

class PhoneMapping {
 public:
  struct Entry {
    std::string reduced;
    Manner manner;
  };

  static PhoneMapping timit() {
    PhoneMapping m;
    for (const auto &e : kTimitPhoneMap) m.add(e.surface, e.reduced, e.manner);
    return m;
  }

  /// Whitespace-separated "surface reduced manner" rows; '#' starts a comment
  /// only at the beginning of a line (h# is a phone).
  static PhoneMapping parse(std::string_view text) {
    PhoneMapping m;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      const auto line = trim(text.substr(pos, nl - pos));
      pos = nl + 1;
      ++line_no;
      if (line.empty() || line.substr(0, 2) == "# " || line == "#") continue;
      const auto f = split_whitespace(line);
      if (f.size() != 3)
        throw FormatError("phone map line " + std::to_string(line_no) + ": expected 'surface reduced manner'");
      m.add(std::string(f[0]), std::string(f[1]), parse_manner(f[2]));
    }
    return m;
  }

  static PhoneMapping read(const std::filesystem::path &path) { return parse(read_file(path)); }

  const Entry &lookup(const std::string &surface) const {
    auto it = table_.find(surface);
    if (it == table_.end()) throw ValidationError("phone '" + surface + "' is not in the phone mapping");
    return it->second;
  }

  bool contains(const std::string &surface) const { return table_.count(surface) > 0; }
  std::size_t size() const { return table_.size(); }
  const std::map<std::string, Entry> &table() const { return table_; }

 private:
  void add(std::string surface, std::string reduced, Manner manner) {
    for (const auto &[s, e] : table_)
      if (e.reduced == reduced && e.manner != manner)
        throw FormatError("reduced phone '" + reduced + "' assigned two manner classes");
    table_[std::move(surface)] = {std::move(reduced), manner};
  }

  std::map<std::string, Entry> table_;
};

}  // namespace peakscope
