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

// TIMIT-style .PHN phone tiers and PCM16 mono WAV audio.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "peakscope/core.hpp"
#include "peakscope/fileio.hpp"

namespace peakscope {

/// Half-open sample interval [start_sample, end_sample) carrying a surface
/// phone symbol.
struct PhoneSegment {
  std::int64_t start_sample = 0;
  std::int64_t end_sample = 0;
  std::string label;

  friend bool operator==(const PhoneSegment &, const PhoneSegment &) = default;
};

struct PhoneTier {
  std::vector<PhoneSegment> segments;
  double sample_rate = 16000.0;

  double start_time() const { return segments.front().start_sample / sample_rate; }
  double end_time() const { return segments.back().end_sample / sample_rate; }
};

inline PhoneTier parse_phn(std::string_view text, double sample_rate) {
  require(sample_rate > 0, "sample_rate must be > 0");
  PhoneTier tier;
  tier.sample_rate = sample_rate;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto fields = split_whitespace(line);
    if (fields.size() != 3)
      throw FormatError(where + "expected '<start> <end> <label>', got " + std::to_string(fields.size()) + " fields");
    auto to_int = [&](std::string_view f) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw FormatError(where + "non-integer sample index '" + std::string(f) + "'");
      return v;
    };
    PhoneSegment seg{to_int(fields[0]), to_int(fields[1]), std::string(fields[2])};
    if (seg.start_sample < 0) throw FormatError(where + "negative start sample");
    if (seg.end_sample <= seg.start_sample)
      throw FormatError(where + "end " + std::to_string(seg.end_sample) + " <= start " +
                        std::to_string(seg.start_sample));
    if (!tier.segments.empty()) {
      const auto prev_end = tier.segments.back().end_sample;
      if (seg.start_sample > prev_end)
        throw FormatError(where + "gap at sample " + std::to_string(prev_end));
      if (seg.start_sample < prev_end)
        throw FormatError(where + "overlap at sample " + std::to_string(seg.start_sample));
    }
    tier.segments.push_back(std::move(seg));
  }
  if (tier.segments.empty()) throw FormatError("empty tier");
  return tier;
}

inline PhoneTier read_phn(const std::filesystem::path &path, double sample_rate) {
  try {
    return parse_phn(read_file(path), sample_rate);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string format_phn(const PhoneTier &tier) {
  std::string out;
  for (const auto &s : tier.segments)
    out += std::to_string(s.start_sample) + " " + std::to_string(s.end_sample) + " " + s.label + "\n";
  return out;
}

/// Interior boundaries in seconds; utterance start and end are excluded.
inline std::vector<double> tier_boundaries(const PhoneTier &tier) {
  std::vector<double> out;
  if (tier.segments.size() < 2) return out;
  out.reserve(tier.segments.size() - 1);
  for (std::size_t i = 0; i + 1 < tier.segments.size(); ++i)
    out.push_back(static_cast<double>(tier.segments[i].end_sample) / tier.sample_rate);
  return out;
}

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

namespace wav_detail {

inline std::uint32_t u32(std::string_view b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}
inline std::uint16_t u16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}
inline void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string &out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace wav_detail

inline Waveform decode_wav(std::string_view bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE")
    throw FormatError("not a RIFF/WAVE file");
  std::size_t at = 12;
  bool have_fmt = false;
  Waveform w;
  while (at + 8 <= bytes.size()) {
    const auto id = bytes.substr(at, 4);
    const std::size_t size = u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + size > bytes.size()) throw FormatError("malformed chunk '" + std::string(id) + "': truncated");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("malformed fmt chunk");
      const auto format = u16(bytes, body);
      const auto channels = u16(bytes, body + 2);
      const auto bits = u16(bytes, body + 14);
      if (format != 1) throw FormatError("unsupported WAV format " + std::to_string(format) + " (PCM16 required)");
      if (channels != 1) throw FormatError("mono required, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw FormatError("PCM16 required, got " + std::to_string(bits) + " bits");
      w.sample_rate = u32(bytes, body + 4);
      if (w.sample_rate <= 0) throw FormatError("malformed fmt chunk: zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk");
      if (size % 2) throw FormatError("malformed data chunk: odd byte count");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(u16(bytes, body + 2 * i)) / 32768.0;
      if (w.samples.empty()) throw FormatError("empty data chunk");
      return w;
    }
    at = body + size + (size & 1);
  }
  throw FormatError(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline Waveform read_wav(const std::filesystem::path &path) {
  try {
    return decode_wav(read_file(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// PCM16 mono; samples are clamped to [-1, 32767/32768].
inline std::string encode_wav(const Waveform &w, std::uint16_t channels = 1) {
  using namespace wav_detail;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(w.sample_rate);
  std::string out = "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * 2 * channels);
  put_u16(out, static_cast<std::uint16_t>(2 * channels));
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

}  // namespace peakscope
