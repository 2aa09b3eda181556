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

// Forward-only evaluation of a convolutional stack over spectrograms.
//
// Feature maps are (channels, time, freq). A spectrogram enters as one
// channel. The layer list is data: kinds, geometry and weights come from a
// JSON config plus one NPY file per learned tensor:
//
//   conv2d     <name>.weight  (out, in, k_t * k_f)   <name>.bias (out)
//   conv1d     <name>.weight  (out, in, k_t)         <name>.bias (out)
//   batchnorm  <name>.scale   (C)                    <name>.shift (C)
//
// conv2d weights are stored with the two kernel axes merged so every file
// stays within three axes; the bytes are identical to a C-order
// (out, in, k_t, k_f) array. conv1d treats (channel, freq) as its input
// channels, flattened channel-major.

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"
#include "peakscope/frontend.hpp"
#include "peakscope/tensorio.hpp"

namespace peakscope {

enum class LayerKind { conv2d, conv1d, relu, maxpool_time, batchnorm };

inline const char *to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool_time: return "maxpool_time";
    case LayerKind::batchnorm: return "batchnorm";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string &s) {
  for (auto k : {LayerKind::conv2d, LayerKind::conv1d, LayerKind::relu, LayerKind::maxpool_time,
                 LayerKind::batchnorm})
    if (s == to_string(k)) return k;
  throw FormatError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  // (time, freq). maxpool_time and conv1d use only the time entries.
  int kernel[2] = {1, 1};
  int stride[2] = {1, 1};
  int padding[2] = {0, 0};
  int in_channels = 0;   // conv kinds; batchnorm channel count
  int out_channels = 0;  // conv kinds
  bool bias = true;

  bool is_conv() const { return kind == LayerKind::conv2d || kind == LayerKind::conv1d; }
  bool moves_time() const { return is_conv() || kind == LayerKind::maxpool_time; }
};

/// (channels, time, freq) feature map.
struct FeatureMap {
  std::size_t channels = 0, time = 0, freq = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t t, std::size_t f, double fill = 0.0)
      : channels(c), time(t), freq(f), data(c * t * f, fill) {}

  double &at(std::size_t c, std::size_t t, std::size_t f) { return data[(c * time + t) * freq + f]; }
  double at(std::size_t c, std::size_t t, std::size_t f) const { return data[(c * time + t) * freq + f]; }

  static FeatureMap from_spectrogram(const Matrix &frames) {
    FeatureMap m(1, frames.rows(), frames.cols());
    std::copy(frames.data().begin(), frames.data().end(), m.data.begin());
    return m;
  }

  // time x (channel * freq), channel-major within a row.
  Matrix flatten() const {
    Matrix out(time, channels * freq);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < time; ++t)
        for (std::size_t f = 0; f < freq; ++f) out(t, c * freq + f) = at(c, t, f);
    return out;
  }
};

inline std::size_t conv_output_length(std::size_t n_in, int kernel, int stride, int pad) {
  const long long span = static_cast<long long>(n_in) + 2LL * pad - kernel;
  if (span < 0) return 0;
  return static_cast<std::size_t>(span / stride + 1);
}

class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(std::vector<LayerSpec> layers, std::map<std::string, Tensor> weights, int input_channels = 1)
      : layers_(std::move(layers)), weights_(std::move(weights)), input_channels_(input_channels) {
    validate();
  }

  const std::vector<LayerSpec> &layers() const { return layers_; }
  int input_channels() const { return input_channels_; }

  std::size_t index_of(const std::string &name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].name == name) return i;
    throw ValidationError("unknown tap layer '" + name + "'");
  }

  const Tensor &weight(const std::string &key) const {
    auto it = weights_.find(key);
    if (it == weights_.end()) throw ValidationError("missing weight tensor '" + key + "'");
    return it->second;
  }

 private:
  void check_shape(const std::string &key, std::vector<std::size_t> expect) const {
    const auto &w = weight(key);
    if (w.shape() != expect) {
      std::string want, got;
      for (auto d : expect) want += (want.empty() ? "" : "x") + std::to_string(d);
      for (auto d : w.shape()) got += (got.empty() ? "" : "x") + std::to_string(d);
      throw ValidationError("weight '" + key + "' has shape " + got + ", expected " + want);
    }
  }

  void validate() const {
    std::map<std::string, int> names;
    // conv1d input channels depend on the input's freq extent and are checked in forward().
    int channels = input_channels_;
    for (const auto &l : layers_) {
      require(!l.name.empty(), "every layer needs a name");
      require(names.emplace(l.name, 0).second, "duplicate layer name '" + l.name + "'");
      const std::string where = "layer '" + l.name + "': ";
      for (int a = 0; a < 2; ++a) {
        require(l.kernel[a] >= 1, where + "kernel dims must be >= 1");
        require(l.stride[a] >= 1, where + "strides must be >= 1");
        require(l.padding[a] >= 0, where + "padding must be >= 0");
      }
      switch (l.kind) {
        case LayerKind::conv2d:
          require(l.in_channels >= 1 && l.out_channels >= 1, where + "channel counts must be >= 1");
          require(l.in_channels == channels,
                  where + "in_channels " + std::to_string(l.in_channels) + " does not match incoming " +
                      std::to_string(channels));
          check_shape(l.name + ".weight", {std::size_t(l.out_channels), std::size_t(l.in_channels),
                                           std::size_t(l.kernel[0]) * l.kernel[1]});
          if (l.bias) check_shape(l.name + ".bias", {std::size_t(l.out_channels)});
          channels = l.out_channels;
          break;
        case LayerKind::conv1d:
          require(l.in_channels >= 1 && l.out_channels >= 1, where + "channel counts must be >= 1");
          require(l.kernel[1] == 1 && l.stride[1] == 1 && l.padding[1] == 0,
                  where + "conv1d has no frequency geometry");
          check_shape(l.name + ".weight",
                      {std::size_t(l.out_channels), std::size_t(l.in_channels), std::size_t(l.kernel[0])});
          if (l.bias) check_shape(l.name + ".bias", {std::size_t(l.out_channels)});
          channels = l.out_channels;
          break;
        case LayerKind::batchnorm:
          require(l.in_channels >= 1, where + "batchnorm needs in_channels");
          require(l.in_channels == channels, where + "batchnorm channel mismatch");
          check_shape(l.name + ".scale", {std::size_t(l.in_channels)});
          check_shape(l.name + ".shift", {std::size_t(l.in_channels)});
          break;
        case LayerKind::relu:
        case LayerKind::maxpool_time:
          break;
      }
    }
  }

  std::vector<LayerSpec> layers_;
  std::map<std::string, Tensor> weights_;
  int input_channels_ = 1;
};

namespace convnet_detail {

inline FeatureMap conv2d(const FeatureMap &in, const LayerSpec &l, const std::vector<double> &w,
                         const std::vector<double> *bias) {
  if (in.channels != static_cast<std::size_t>(l.in_channels))
    throw ValidationError("layer '" + l.name + "': input has " + std::to_string(in.channels) +
                          " channels, expected " + std::to_string(l.in_channels));
  const int kt = l.kernel[0], kf = l.kernel[1];
  const int st = l.stride[0], sf = l.stride[1];
  const int pt = l.padding[0], pf = l.padding[1];
  const std::size_t t_out = conv_output_length(in.time, kt, st, pt);
  const std::size_t f_out = conv_output_length(in.freq, kf, sf, pf);
  if (t_out == 0 || f_out == 0)
    throw ValidationError("layer '" + l.name + "': input too small for kernel");

  // Zero-padded copy so the inner loops need no bounds checks.
  const std::size_t tp = in.time + 2 * pt, fp = in.freq + 2 * pf;
  FeatureMap padded(in.channels, tp, fp);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t t = 0; t < in.time; ++t)
      std::copy_n(&in.data[(c * in.time + t) * in.freq], in.freq, &padded.at(c, t + pt, pf));

  FeatureMap out(l.out_channels, t_out, f_out);
  for (int o = 0; o < l.out_channels; ++o) {
    double *dst = &out.at(o, 0, 0);
    if (bias) std::fill_n(dst, t_out * f_out, (*bias)[o]);
    for (int c = 0; c < l.in_channels; ++c) {
      const double *kern = &w[(static_cast<std::size_t>(o) * l.in_channels + c) * kt * kf];
      for (int i = 0; i < kt; ++i) {
        for (int j = 0; j < kf; ++j) {
          const double k = kern[i * kf + j];
          if (k == 0.0) continue;
          for (std::size_t t = 0; t < t_out; ++t) {
            const double *src = &padded.at(c, t * st + i, j);
            double *row = dst + t * f_out;
            for (std::size_t f = 0; f < f_out; ++f) row[f] += k * src[f * sf];
          }
        }
      }
    }
  }
  return out;
}

inline FeatureMap conv1d(const FeatureMap &in, const LayerSpec &l, const std::vector<double> &w,
                         const std::vector<double> *bias) {
  // Reinterpret (C, T, Fq) as (C * Fq, T, 1) channel-major.
  FeatureMap flat(in.channels * in.freq, in.time, 1);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t t = 0; t < in.time; ++t)
      for (std::size_t f = 0; f < in.freq; ++f) flat.at(c * in.freq + f, t, 0) = in.at(c, t, f);
  return conv2d(flat, l, w, bias);
}

inline void relu(FeatureMap &m) {
  for (auto &v : m.data) v = v > 0.0 ? v : 0.0;
}

inline void batchnorm(FeatureMap &m, const LayerSpec &l, const std::vector<double> &scale,
                      const std::vector<double> &shift) {
  if (m.channels != scale.size())
    throw ValidationError("layer '" + l.name + "': batchnorm expects " + std::to_string(scale.size()) +
                          " channels, input has " + std::to_string(m.channels));
  for (std::size_t c = 0; c < m.channels; ++c)
    for (std::size_t i = 0; i < m.time * m.freq; ++i) {
      double &v = m.data[c * m.time * m.freq + i];
      v = v * scale[c] + shift[c];
    }
}

inline FeatureMap maxpool_time(const FeatureMap &in, const LayerSpec &l) {
  const int k = l.kernel[0], s = l.stride[0], p = l.padding[0];
  const std::size_t t_out = conv_output_length(in.time, k, s, p);
  if (t_out == 0) throw ValidationError("layer '" + l.name + "': input too short for pooling window");
  FeatureMap out(in.channels, t_out, in.freq, -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t t = 0; t < t_out; ++t)
      for (int i = 0; i < k; ++i) {
        const long long src = static_cast<long long>(t) * s + i - p;
        if (src < 0 || src >= static_cast<long long>(in.time)) continue;
        for (std::size_t f = 0; f < in.freq; ++f)
          out.at(c, t, f) = std::max(out.at(c, t, f), in.at(c, static_cast<std::size_t>(src), f));
      }
  return out;
}

}  // namespace convnet_detail

/// Runs layers up to and including `tap_layer` and returns that layer's
/// output as a time x (channel * freq) map. The frame grid of the input is
/// carried through every strided or padded layer.
inline ActivationMap forward(const ConvStack &stack, const Matrix &frames, const std::string &tap_layer,
                             double frame_shift_ms, double frame_offset_ms) {
  using namespace convnet_detail;
  const std::size_t tap = stack.index_of(tap_layer);
  FeatureMap x = FeatureMap::from_spectrogram(frames);
  if (static_cast<int>(x.channels) != stack.input_channels())
    throw ValidationError("stack expects " + std::to_string(stack.input_channels()) + " input channels");
  double shift = frame_shift_ms, offset = frame_offset_ms;
  for (std::size_t i = 0; i <= tap; ++i) {
    const auto &l = stack.layers()[i];
    switch (l.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv1d: {
        const auto w = stack.weight(l.name + ".weight").to_doubles();
        std::vector<double> b;
        if (l.bias) b = stack.weight(l.name + ".bias").to_doubles();
        x = l.kind == LayerKind::conv2d ? conv2d(x, l, w, l.bias ? &b : nullptr)
                                        : conv1d(x, l, w, l.bias ? &b : nullptr);
        break;
      }
      case LayerKind::relu:
        relu(x);
        break;
      case LayerKind::batchnorm:
        batchnorm(x, l, stack.weight(l.name + ".scale").to_doubles(), stack.weight(l.name + ".shift").to_doubles());
        break;
      case LayerKind::maxpool_time:
        x = maxpool_time(x, l);
        break;
    }
    if (l.moves_time()) {
      // Output frame n is centered on input frame n*stride - pad + (k-1)/2.
      offset += shift * ((l.kernel[0] - 1) / 2.0 - l.padding[0]);
      shift *= l.stride[0];
    }
  }
  ActivationMap out{x.flatten(), shift, offset, tap_layer};
  if (stack.layers()[tap].kind == LayerKind::relu) {
    for (double v : out.values.data())
      if (!(v >= 0.0)) throw std::logic_error("negative activation after relu tap");
  }
  return out;
}

inline ActivationMap forward(const ConvStack &stack, const Spectrogram &spec, const std::string &tap_layer) {
  return forward(stack, spec.frames, tap_layer, spec.config.shift_ms, spec.config.window_ms / 2.0);
}

struct ReceptiveField {
  long long span_frames = 1;
  long long stride_frames = 1;
};

inline ReceptiveField receptive_field(const ConvStack &stack, const std::string &tap_layer) {
  const std::size_t tap = stack.index_of(tap_layer);
  ReceptiveField rf;
  for (std::size_t i = 0; i <= tap; ++i) {
    const auto &l = stack.layers()[i];
    if (!l.moves_time()) continue;
    rf.span_frames += (l.kernel[0] - 1) * rf.stride_frames;
    rf.stride_frames *= l.stride[0];
  }
  return rf;
}

/// Duration of input signal seen by one tapped frame, counting the analysis
/// window of the first and last input frames.
inline double receptive_field_ms(const ReceptiveField &rf, double frame_shift_ms, double window_ms) {
  return static_cast<double>(rf.span_frames - 1) * frame_shift_ms + window_ms;
}

// ---------------------------------------------------------------------------
// Config loading

inline std::vector<LayerSpec> parse_layer_specs(const nlohmann::json &doc, int *input_channels = nullptr) {
  const nlohmann::json *list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("layers")) throw FormatError("stack config object needs a 'layers' array");
    list = &doc["layers"];
    if (input_channels && doc.contains("input_channels")) *input_channels = doc["input_channels"].get<int>();
  }
  if (!list->is_array()) throw FormatError("stack config must be a JSON list of layers");
  std::vector<LayerSpec> out;
  try {
    for (const auto &j : *list) {
      LayerSpec l;
      l.name = j.at("name").get<std::string>();
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      auto pair = [&](const char *key, int (&dst)[2]) {
        if (!j.contains(key)) return;
        const auto &v = j[key];
        if (v.is_number_integer()) {
          dst[0] = v.get<int>();
        } else {
          if (!v.is_array() || v.size() < 1 || v.size() > 2)
            throw FormatError("layer '" + l.name + "': '" + key + "' must be an int or [time, freq]");
          dst[0] = v[0].get<int>();
          if (v.size() == 2) dst[1] = v[1].get<int>();
        }
      };
      pair("kernel", l.kernel);
      pair("stride", l.stride);
      pair("padding", l.padding);
      if (l.kind == LayerKind::maxpool_time) {
        if (j.contains("width")) l.kernel[0] = j["width"].get<int>();
        l.kernel[1] = l.stride[1] = 1;
        l.padding[1] = 0;
      }
      l.in_channels = j.value("in_channels", l.kind == LayerKind::batchnorm ? j.value("channels", 0) : 0);
      l.out_channels = j.value("out_channels", 0);
      l.bias = j.value("bias", true);
      out.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("stack config: ") + e.what());
  }
  return out;
}

inline ConvStack load_stack(const std::filesystem::path &config_path, const std::filesystem::path &weights_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(config_path));
  } catch (const nlohmann::json::parse_error &e) {
    throw FormatError(config_path.string() + ": " + e.what());
  }
  int input_channels = 1;
  auto layers = parse_layer_specs(doc, &input_channels);
  std::map<std::string, Tensor> weights;
  for (const auto &l : layers) {
    std::vector<std::string> keys;
    if (l.is_conv()) {
      keys.push_back(l.name + ".weight");
      if (l.bias) keys.push_back(l.name + ".bias");
    } else if (l.kind == LayerKind::batchnorm) {
      keys = {l.name + ".scale", l.name + ".shift"};
    }
    for (const auto &k : keys) weights.emplace(k, read_tensor(weights_dir / (k + ".npy")));
  }
  return ConvStack(std::move(layers), std::move(weights), input_channels);
}

}  // namespace peakscope
