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

// Self-contained SVG figures: envelope with peaks and reference boundaries,
// categorical 2-D scatter, and AMI-vs-K lines. Output depends only on the
// input data (fixed-precision coordinates, no timestamps or ids).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "peakscope/core.hpp"
#include "peakscope/fileio.hpp"

namespace peakscope::cli {

struct EnvelopePlot {
  std::string title;
  std::vector<double> envelope;               // e[n]
  std::vector<std::size_t> peak_frames;
  std::vector<double> boundary_frames;        // reference boundaries in (fractional) frames
};

struct ScatterPlot {
  std::string title;
  std::vector<double> x, y;
  std::vector<std::string> category;          // one per point
  std::string x_label = "PC1", y_label = "PC2";
};

struct LinePlot {
  std::string title;
  std::vector<double> x;                                  // e.g. K values
  std::vector<std::pair<std::string, std::vector<double>>> series;
  std::string x_label = "K", y_label = "AMI";
};

namespace plot_detail {

inline constexpr double kWidth = 720, kHeight = 360, kMargin = 48;

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char *palette(std::size_t i) {
  static const char *colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

struct Axis {
  double lo, hi;
  double map(double v, double out_lo, double out_hi) const {
    const double span = hi > lo ? hi - lo : 1.0;
    return out_lo + (v - lo) / span * (out_hi - out_lo);
  }
};

inline Axis axis_of(const std::vector<double> &v) {
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  double lo = *mn, hi = *mx;
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

inline std::string header(const std::string &title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + num(kWidth / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n" + "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
         num(kWidth - 2 * kMargin) + "\" height=\"" + num(kHeight - 2 * kMargin) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
}

inline std::string axis_labels(const std::string &x, const std::string &y) {
  return "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(x) + "</text>\n" +
         "<text x=\"14\" y=\"" + num(kHeight / 2) + "\" transform=\"rotate(-90 14 " + num(kHeight / 2) +
         ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(y) + "</text>\n";
}

}  // namespace plot_detail

inline std::string render_svg(const EnvelopePlot &p) {
  using namespace plot_detail;
  require(!p.envelope.empty(), "envelope plot needs a non-empty envelope");
  std::vector<double> frames(p.envelope.size());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<double>(i);
  const Axis ax = axis_of(frames);
  Axis ay = axis_of(p.envelope);
  ay.lo = std::min(ay.lo, 0.0);
  auto X = [&](double f) { return ax.map(f, kMargin, kWidth - kMargin); };
  auto Y = [&](double v) { return ay.map(v, kHeight - kMargin, kMargin); };

  std::string svg = header(p.title);
  for (double b : p.boundary_frames)
    svg += "<line class=\"boundary\" x1=\"" + num(X(b)) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(X(b)) +
           "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"red\" stroke-dasharray=\"4,3\"/>\n";
  svg += "<polyline class=\"envelope\" fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < p.envelope.size(); ++i)
    svg += (i ? " " : "") + num(X(static_cast<double>(i))) + "," + num(Y(p.envelope[i]));
  svg += "\"/>\n";
  for (auto f : p.peak_frames) {
    require(f < p.envelope.size(), "peak frame outside envelope");
    const double cx = X(static_cast<double>(f)), cy = Y(p.envelope[f]);
    svg += "<path class=\"peak\" d=\"M" + num(cx) + "," + num(cy - 5) + " L" + num(cx + 5) + "," + num(cy) + " L" +
           num(cx) + "," + num(cy + 5) + " L" + num(cx - 5) + "," + num(cy) + " Z\" fill=\"#1f77b4\"/>\n";
  }
  svg += axis_labels("frame", "e[n]");
  return svg + "</svg>\n";
}

inline std::string render_svg(const ScatterPlot &p) {
  using namespace plot_detail;
  require(!p.x.empty() && p.x.size() == p.y.size() && p.x.size() == p.category.size(),
          "scatter plot needs equal-length, non-empty x/y/category");
  // Legend order: first appearance.
  std::vector<std::string> cats;
  std::map<std::string, std::size_t> index;
  for (const auto &c : p.category)
    if (index.emplace(c, cats.size()).second) cats.push_back(c);
  const Axis ax = axis_of(p.x), ay = axis_of(p.y);
  auto X = [&](double v) { return ax.map(v, kMargin, kWidth - kMargin - 140); };
  auto Y = [&](double v) { return ay.map(v, kHeight - kMargin, kMargin); };
  std::string svg = header(p.title);
  for (std::size_t i = 0; i < p.x.size(); ++i)
    svg += "<circle class=\"point\" cx=\"" + num(X(p.x[i])) + "\" cy=\"" + num(Y(p.y[i])) + "\" r=\"2.5\" fill=\"" +
           palette(index[p.category[i]]) + "\" fill-opacity=\"0.6\"/>\n";
  for (std::size_t c = 0; c < cats.size(); ++c) {
    const double y = kMargin + 14 + 16.0 * c;
    svg += "<g class=\"legend-entry\"><rect x=\"" + num(kWidth - kMargin - 130) + "\" y=\"" + num(y - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + palette(c) + "\"/><text x=\"" + num(kWidth - kMargin - 115) +
           "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(cats[c]) +
           "</text></g>\n";
  }
  svg += axis_labels(p.x_label, p.y_label);
  return svg + "</svg>\n";
}

inline std::string render_svg(const LinePlot &p) {
  using namespace plot_detail;
  require(!p.x.empty() && !p.series.empty(), "line plot needs x values and at least one series");
  std::vector<double> all_y;
  for (const auto &[name, ys] : p.series) {
    require(ys.size() == p.x.size(), "series '" + name + "' length does not match x");
    all_y.insert(all_y.end(), ys.begin(), ys.end());
  }
  const Axis ax = axis_of(p.x);
  Axis ay = axis_of(all_y);
  ay.lo = std::min(ay.lo, 0.0);
  auto X = [&](double v) { return ax.map(v, kMargin, kWidth - kMargin - 140); };
  auto Y = [&](double v) { return ay.map(v, kHeight - kMargin, kMargin); };
  std::string svg = header(p.title);
  for (std::size_t s = 0; s < p.series.size(); ++s) {
    const auto &[name, ys] = p.series[s];
    svg += "<polyline class=\"series\" data-name=\"" + escape(name) + "\" fill=\"none\" stroke=\"" + palette(s) +
           "\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) svg += (i ? " " : "") + num(X(p.x[i])) + "," + num(Y(ys[i]));
    svg += "\"/>\n";
    const double y = kMargin + 14 + 16.0 * s;
    svg += "<g class=\"legend-entry\"><rect x=\"" + num(kWidth - kMargin - 130) + "\" y=\"" + num(y - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + palette(s) + "\"/><text x=\"" + num(kWidth - kMargin - 115) +
           "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(name) + "</text></g>\n";
  }
  svg += axis_labels(p.x_label, p.y_label);
  return svg + "</svg>\n";
}

template <typename Plot>
void emit_plot(const Plot &plot, const std::filesystem::path &path) {
  write_file_atomic(path, render_svg(plot));
}

}  // namespace peakscope::cli
