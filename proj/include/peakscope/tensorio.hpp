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

// Strict NPY v1.0 reader/writer (little-endian f32/f64, C order, 1-3 axes)
// and the JSON corpus manifest.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "peakscope/core.hpp"
#include "peakscope/fileio.hpp"

namespace peakscope {

enum class DType { f32, f64 };

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

class Tensor {
 public:
  Tensor() = default;

  static Tensor f32(std::vector<std::size_t> shape, std::vector<float> values) {
    Tensor t(std::move(shape));
    t.check_count(values.size());
    t.data_ = std::move(values);
    return t;
  }
  static Tensor f64(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    t.check_count(values.size());
    t.data_ = std::move(values);
    return t;
  }
  static Tensor from_matrix(const Matrix &m, DType dtype = DType::f32) {
    std::vector<std::size_t> shape{m.rows(), m.cols()};
    if (dtype == DType::f64) return f64(shape, {m.data().begin(), m.data().end()});
    std::vector<float> v(m.data().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(m.data()[i]);
    return f32(shape, std::move(v));
  }

  const std::vector<std::size_t> &shape() const { return shape_; }
  DType dtype() const { return std::holds_alternative<std::vector<float>>(data_) ? DType::f32 : DType::f64; }
  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : shape_) n *= d;
    return n;
  }

  const std::vector<float> &as_f32() const { return std::get<std::vector<float>>(data_); }
  const std::vector<double> &as_f64() const { return std::get<std::vector<double>>(data_); }

  std::vector<double> to_doubles() const {
    if (dtype() == DType::f64) return as_f64();
    const auto &f = as_f32();
    return {f.begin(), f.end()};
  }

  // 2-axis tensors map directly; 1-axis tensors become a single column.
  Matrix to_matrix() const {
    if (shape_.size() == 1) return Matrix(shape_[0], 1, to_doubles());
    if (shape_.size() != 2)
      throw ValidationError("expected a 2-axis tensor, got " + std::to_string(shape_.size()) + " axes");
    return Matrix(shape_[0], shape_[1], to_doubles());
  }

  // Compares shape, dtype and payload bits.
  bool bit_identical(const Tensor &other) const {
    if (shape_ != other.shape_ || dtype() != other.dtype()) return false;
    if (dtype() == DType::f32)
      return std::memcmp(as_f32().data(), other.as_f32().data(), size() * 4) == 0;
    return std::memcmp(as_f64().data(), other.as_f64().data(), size() * 8) == 0;
  }

 private:
  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 3)
      throw ValidationError("tensor must have 1-3 axes");
    for (auto d : shape_)
      if (d < 1) throw ValidationError("tensor axes must be >= 1");
  }
  void check_count(std::size_t n) const {
    if (n != size()) throw ValidationError("tensor data length does not match shape");
  }

  std::vector<std::size_t> shape_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

namespace npy_detail {

inline constexpr char kMagic[] = "\x93NUMPY";

template <typename T>
void load_le(const char *src, T *dst, std::size_t n) {
  std::memcpy(dst, src, n * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) {
      auto *b = reinterpret_cast<unsigned char *>(dst + i);
      std::reverse(b, b + sizeof(T));
    }
  }
}

template <typename T>
void store_le(const T *src, std::size_t n, std::string &out) {
  const std::size_t at = out.size();
  out.resize(at + n * sizeof(T));
  std::memcpy(out.data() + at, src, n * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) {
      auto *b = reinterpret_cast<unsigned char *>(out.data() + at + i * sizeof(T));
      std::reverse(b, b + sizeof(T));
    }
  }
}

// Parser for the Python-literal dict in an NPY header. Accepts exactly the
// keys descr / fortran_order / shape, each once.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : s_(text) {}

  struct Header {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
  };

  Header parse() {
    Header h;
    std::set<std::string> seen;
    skip_ws();
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = parse_string();
      skip_ws();
      expect(':');
      skip_ws();
      if (!seen.insert(key).second) fail("duplicate key '" + key + "'");
      if (key == "descr") {
        h.descr = parse_string();
      } else if (key == "fortran_order") {
        h.fortran_order = parse_bool();
      } else if (key == "shape") {
        h.shape = parse_shape();
      } else {
        fail("unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      expect('}');
      break;
    }
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after header dict");
    if (seen.size() != 3) fail("header must define descr, fortran_order and shape");
    return h;
  }

 private:
  [[noreturn]] void fail(const std::string &what) const {
    throw FormatError("malformed NPY header: " + what);
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\n' || s_[pos_] == '\t')) ++pos_;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string parse_string() {
    const char q = peek();
    if (q != '\'' && q != '"') fail("expected string literal");
    ++pos_;
    const auto end = s_.find(q, pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }
  bool parse_bool() {
    if (s_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }
  std::vector<std::size_t> parse_shape() {
    expect('(');
    std::vector<std::size_t> dims;
    bool trailing_comma = false;
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        break;
      }
      trailing_comma = false;
      if (peek() < '0' || peek() > '9') fail("expected integer in shape");
      std::size_t v = 0;
      while (peek() >= '0' && peek() <= '9') {
        if (v > (SIZE_MAX - 9) / 10) fail("shape dimension overflow");
        v = v * 10 + static_cast<std::size_t>(peek() - '0');
        ++pos_;
      }
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        trailing_comma = true;
        continue;
      }
      expect(')');
      break;
    }
    // "(3)" is a parenthesized int in Python, not a 1-tuple.
    if (dims.size() == 1 && !trailing_comma) fail("1-axis shape needs a trailing comma");
    return dims;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::string shape_literal(const std::vector<std::size_t> &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

}  // namespace npy_detail

inline Tensor decode_npy(std::string_view bytes) {
  using namespace npy_detail;
  if (bytes.size() < 10 || bytes.substr(0, 6) != std::string_view(kMagic, 6))
    throw FormatError("not an NPY file (bad magic)");
  if (bytes[6] != '\x01' || bytes[7] != '\x00')
    throw FormatError("unsupported NPY version (only 1.0)");
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < 10 + header_len) throw FormatError("truncated NPY header");
  std::string_view header = bytes.substr(10, header_len);
  if (header.empty() || header.back() != '\n') throw FormatError("malformed NPY header: missing newline");
  const auto h = HeaderParser(header.substr(0, header.size() - 1)).parse();
  if (h.fortran_order) throw FormatError("unsupported layout: fortran_order=True");
  DType dtype;
  if (h.descr == "<f4") {
    dtype = DType::f32;
  } else if (h.descr == "<f8") {
    dtype = DType::f64;
  } else {
    throw FormatError("unsupported dtype '" + h.descr + "' (only <f4 and <f8)");
  }
  if (h.shape.empty() || h.shape.size() > 3)
    throw FormatError("unsupported rank " + std::to_string(h.shape.size()) + " (1-3 axes)");
  std::size_t count = 1;
  for (auto d : h.shape) {
    if (d == 0) throw FormatError("zero-length axis in shape");
    if (count > SIZE_MAX / d) throw FormatError("shape overflow");
    count *= d;
  }
  const std::size_t payload = bytes.size() - 10 - header_len;
  const std::size_t want = count * dtype_size(dtype);
  if (count > SIZE_MAX / dtype_size(dtype) || payload < want) throw FormatError("truncated payload");
  if (payload > want) throw FormatError("trailing bytes after payload");
  const char *src = bytes.data() + 10 + header_len;
  if (dtype == DType::f32) {
    std::vector<float> v(count);
    load_le(src, v.data(), count);
    return Tensor::f32(h.shape, std::move(v));
  }
  std::vector<double> v(count);
  load_le(src, v.data(), count);
  return Tensor::f64(h.shape, std::move(v));
}

inline std::string encode_npy(const Tensor &t) {
  using namespace npy_detail;
  std::string dict = std::string("{'descr': '") + (t.dtype() == DType::f32 ? "<f4" : "<f8") +
                     "', 'fortran_order': False, 'shape': " + shape_literal(t.shape()) + ", }";
  // magic(6) + version(2) + length(2) + dict + padding + '\n' == 0 mod 64
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::string out(kMagic, 6);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xff));
  out.push_back(static_cast<char>((dict.size() >> 8) & 0xff));
  out += dict;
  if (t.dtype() == DType::f32)
    store_le(t.as_f32().data(), t.size(), out);
  else
    store_le(t.as_f64().data(), t.size(), out);
  return out;
}

inline Tensor read_tensor(const std::filesystem::path &path) {
  try {
    return decode_npy(read_file(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_tensor(const std::filesystem::path &path, const Tensor &t) {
  write_file_atomic(path, encode_npy(t));
}

// ---------------------------------------------------------------------------
// Corpus manifest

struct ManifestEntry {
  std::string id;
  std::filesystem::path activations;
  std::optional<std::filesystem::path> phn;
  std::optional<std::filesystem::path> wav;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  double frame_shift_ms = 10.0;
  double frame_offset_ms = 12.5;
  // Sample rate of the .phn sample indices.
  double sample_rate_hz = 16000.0;
};

inline CorpusManifest parse_manifest(std::string_view text, const std::filesystem::path &base_dir = {}) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("manifest must be a JSON object");
  CorpusManifest m;
  auto number = [&](const char *key, double fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number()) throw FormatError(std::string("manifest field '") + key + "' must be a number");
    return doc[key].get<double>();
  };
  m.frame_shift_ms = number("frame_shift_ms", 10.0);
  m.frame_offset_ms = number("frame_offset_ms", 12.5);
  m.sample_rate_hz = number("sample_rate_hz", 16000.0);
  if (!(m.frame_shift_ms > 0)) throw FormatError("manifest frame_shift_ms must be > 0");
  if (!(m.sample_rate_hz > 0)) throw FormatError("manifest sample_rate_hz must be > 0");
  if (!doc.contains("utterances") || !doc["utterances"].is_array())
    throw FormatError("manifest is missing the 'utterances' array");

  auto resolve = [&](const std::string &p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  std::set<std::string> ids;
  std::size_t index = 0;
  for (const auto &u : doc["utterances"]) {
    const std::string where = "manifest utterance #" + std::to_string(index++);
    if (!u.is_object()) throw FormatError(where + " is not an object");
    if (!u.contains("id") || !u["id"].is_string()) throw FormatError(where + " is missing string field 'id'");
    if (!u.contains("activations") || !u["activations"].is_string())
      throw FormatError(where + " is missing string field 'activations'");
    ManifestEntry e;
    e.id = u["id"].get<std::string>();
    if (!ids.insert(e.id).second) throw FormatError("duplicate utterance id '" + e.id + "' in manifest");
    e.activations = resolve(u["activations"].get<std::string>());
    for (const char *key : {"phn", "wav"}) {
      if (!u.contains(key) || u[key].is_null()) continue;
      if (!u[key].is_string()) throw FormatError(where + " field '" + key + "' must be a string");
      (std::string_view(key) == "phn" ? e.phn : e.wav) = resolve(u[key].get<std::string>());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline CorpusManifest read_manifest(const std::filesystem::path &path) {
  return parse_manifest(read_file(path), path.parent_path());
}

// Paths are written relative to the manifest's directory when they live below it.
inline std::string format_manifest(const CorpusManifest &m, const std::filesystem::path &base_dir = {}) {
  using nlohmann::ordered_json;
  auto rel = [&](const std::filesystem::path &p) {
    if (base_dir.empty()) return p.generic_string();
    auto r = p.lexically_relative(base_dir);
    if (r.empty() || *r.begin() == "..") return p.generic_string();
    return r.generic_string();
  };
  ordered_json doc;
  doc["frame_shift_ms"] = m.frame_shift_ms;
  doc["frame_offset_ms"] = m.frame_offset_ms;
  doc["sample_rate_hz"] = m.sample_rate_hz;
  doc["utterances"] = ordered_json::array();
  for (const auto &e : m.entries) {
    ordered_json u;
    u["id"] = e.id;
    u["activations"] = rel(e.activations);
    if (e.phn) u["phn"] = rel(*e.phn);
    if (e.wav) u["wav"] = rel(*e.wav);
    doc["utterances"].push_back(std::move(u));
  }
  return doc.dump(2) + "\n";
}

inline void write_manifest(const std::filesystem::path &path, const CorpusManifest &m) {
  write_file_atomic(path, format_manifest(m, path.parent_path()));
}

}  // namespace peakscope
