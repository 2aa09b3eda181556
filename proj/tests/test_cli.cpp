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

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "peakscope/cli/app.hpp"
#include "support/tmpdir.hpp"

using namespace peakscope;
using testing_support::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "peakscope");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string golden(const std::string &name) { return read_file(std::filesystem::path(PEAKSCOPE_GOLDEN_DIR) / name); }

std::string s(const std::filesystem::path &p) { return p.string(); }

}  // namespace

TEST(CliHelp, TopLevelMatchesGolden) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, golden("help.txt"));
}

TEST(CliHelp, PeaksMatchesGolden) {
  const auto r = run({"peaks", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, golden("help_peaks.txt"));
}

TEST(CliHelp, EverySubcommandHasHelp) {
  for (const char *sub : {"synth", "melspec", "forward", "envelope", "peaks", "eval", "grid", "ablate", "labels",
                          "pca", "cluster", "ami", "plot"}) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--out"), std::string::npos) << sub;
  }
}

TEST(CliErrors, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"nosuch"}).code, 1);
  EXPECT_EQ(run({"peaks", "--manifest", "m.json"}).code, 1);  // --out missing
  EXPECT_EQ(run({"peaks", "--manifest", "m", "--out", "o", "--sigma", "abc"}).code, 1);
}

TEST(CliErrors, ValidationBeforeIo) {
  TempDir dir;
  const auto r = run({"peaks", "--manifest", s(dir / "missing.json"), "--sigma", "0", "--out", s(dir / "p")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("sigma must be > 0"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "p"));
  EXPECT_EQ(run({"ablate", "--manifest", s(dir / "missing.json"), "--strategy", "bogus", "--out", s(dir / "a")}).code,
            1);
}

TEST(CliErrors, MissingAndMalformedFilesExitTwo) {
  TempDir dir;
  auto r = run({"peaks", "--manifest", s(dir / "missing.json"), "--out", s(dir / "p")});
  EXPECT_EQ(r.code, 2);
  write_file_atomic(dir / "bad.json", "{not json");
  r = run({"peaks", "--manifest", s(dir / "bad.json"), "--out", s(dir / "p")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not valid JSON"), std::string::npos);
  write_file_atomic(dir / "m.json", R"({"utterances": [{"id": "a", "activations": "a.npy"}]})");
  write_file_atomic(dir / "a.npy", "garbage");
  r = run({"peaks", "--manifest", s(dir / "m.json"), "--out", s(dir / "p")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("a.npy"), std::string::npos);
}

TEST(CliPipeline, SynthPeaksEvalIsPerfect) {
  TempDir dir;
  ASSERT_EQ(run({"synth", "--out", s(dir / "c"), "--utterances", "5"}).code, 0);
  const auto m = s(dir / "c" / "manifest.json");
  ASSERT_EQ(run({"peaks", "--manifest", m, "--sigma", "0.5", "--tau", "0.05", "--out", s(dir / "p")}).code, 0);
  ASSERT_EQ(run({"eval", "--manifest", m, "--peaks", s(dir / "p"), "--out", s(dir / "e")}).code, 0);
  const auto eval = nlohmann::json::parse(read_file(dir / "e" / "eval.json"));
  EXPECT_EQ(eval["f1"].get<double>(), 1.0);
  EXPECT_EQ(eval["sigma"].get<double>(), 0.5);
  const auto csv = cli::parse_csv(read_file(dir / "e" / "eval.csv"));
  EXPECT_EQ(csv.header, (std::vector<std::string>{"sigma", "tau", "tp", "n_det", "n_ref", "precision", "recall", "f1"}));
  // evaluating directly from sigma/tau gives the same counts
  ASSERT_EQ(run({"eval", "--manifest", m, "--sigma", "0.5", "--tau", "0.05", "--out", s(dir / "e2")}).code, 0);
  EXPECT_EQ(read_file(dir / "e" / "eval.csv"), read_file(dir / "e2" / "eval.csv"));
}

TEST(CliPipeline, OutputsIndependentOfThreadCount) {
  TempDir dir;
  ASSERT_EQ(run({"synth", "--out", s(dir / "c"), "--utterances", "6", "--noise", "0.1"}).code, 0);
  const auto m = s(dir / "c" / "manifest.json");
  ASSERT_EQ(run({"--threads", "1", "grid", "--manifest", m, "--out", s(dir / "g1")}).code, 0);
  ASSERT_EQ(run({"--threads", "4", "grid", "--manifest", m, "--out", s(dir / "g4")}).code, 0);
  EXPECT_EQ(read_file(dir / "g1" / "grid.csv"), read_file(dir / "g4" / "grid.csv"));
  EXPECT_EQ(read_file(dir / "g1" / "best.json"), read_file(dir / "g4" / "best.json"));
  const auto rows = cli::parse_csv(read_file(dir / "g1" / "grid.csv")).rows;
  EXPECT_EQ(rows.size(), 6u * 14u);
}

TEST(CliPipeline, ThreadsFromEnvironment) {
  TempDir dir;
  ASSERT_EQ(run({"synth", "--out", s(dir / "c"), "--utterances", "2"}).code, 0);
  ::setenv("PEAKSCOPE_THREADS", "zero", 1);
  EXPECT_EQ(run({"peaks", "--manifest", s(dir / "c" / "manifest.json"), "--out", s(dir / "p")}).code, 1);
  // an explicit flag wins over the environment
  EXPECT_EQ(run({"--threads", "2", "peaks", "--manifest", s(dir / "c" / "manifest.json"), "--out", s(dir / "p")}).code,
            0);
  ::setenv("PEAKSCOPE_THREADS", "3", 1);
  EXPECT_EQ(run({"peaks", "--manifest", s(dir / "c" / "manifest.json"), "--out", s(dir / "p")}).code, 0);
  ::unsetenv("PEAKSCOPE_THREADS");
}

TEST(CliPipeline, AblationAndEnvelopeOutputs) {
  TempDir dir;
  ASSERT_EQ(run({"synth", "--out", s(dir / "c"), "--utterances", "3"}).code, 0);
  const auto m = s(dir / "c" / "manifest.json");
  ASSERT_EQ(run({"envelope", "--manifest", m, "--out", s(dir / "env")}).code, 0);
  const auto e = read_tensor(dir / "env" / "synth0000.envelope.npy");
  const auto d = read_tensor(dir / "env" / "synth0000.dog.npy");
  EXPECT_EQ(e.shape().size(), 1u);
  EXPECT_EQ(e.shape(), d.shape());
  for (const char *strategy : {"peaks", "uniform", "random", "midpoint"}) {
    const auto out = dir / (std::string("abl_") + strategy);
    ASSERT_EQ(run({"ablate", "--manifest", m, "--strategy", strategy, "--seed", "4", "--out", s(out)}).code, 0);
    const auto stats = nlohmann::json::parse(read_file(out / "ablation.json"));
    const auto kept = stats["kept_frames"].get<std::size_t>(), peaks = stats["n_peaks"].get<std::size_t>();
    if (std::string(strategy) == "midpoint")
      EXPECT_EQ(kept, peaks - 3);
    else
      EXPECT_EQ(kept, peaks);
    const auto ablated = read_manifest(out / "manifest.json");
    const auto a = read_tensor(ablated.entries[0].activations).to_matrix();
    std::size_t nonzero_rows = 0;
    for (std::size_t t = 0; t < a.rows(); ++t) {
      bool any = false;
      for (double v : a.row(t)) any = any || v != 0.0;
      nonzero_rows += any;
    }
    EXPECT_GT(nonzero_rows, 0u);
    EXPECT_LT(nonzero_rows, a.rows());
  }
}

TEST(CliPipeline, LabelsPcaClusterAmiPlot) {
  TempDir dir;
  ASSERT_EQ(run({"synth", "--out", s(dir / "c"), "--utterances", "8", "--classes", "2"}).code, 0);
  const auto m = s(dir / "c" / "manifest.json");
  ASSERT_EQ(run({"labels", "--manifest", m, "--sigma", "0.5", "--tau", "0.05", "--out", s(dir / "l")}).code, 0);
  const auto labels = cli::parse_csv(read_file(dir / "l" / "labels.csv"));
  const auto emb = read_tensor(dir / "l" / "embeddings.npy");
  EXPECT_EQ(emb.shape()[0], labels.rows.size());
  EXPECT_EQ(emb.shape()[1], 64u);
  // all transitions are diphone peaks between different phones
  for (const auto &row : labels.rows) EXPECT_EQ(row[labels.column("arity")], "di");

  ASSERT_EQ(run({"pca", "--labels", s(dir / "l"), "--out", s(dir / "pca")}).code, 0);
  ASSERT_EQ(run({"cluster", "--labels", s(dir / "l"), "--k", "4", "--seed", "1", "--out", s(dir / "k")}).code, 0);
  ASSERT_EQ(run({"ami", "--labels", s(dir / "l"), "--k-grid", "2,4,8", "--out", s(dir / "ami")}).code, 0);
  ASSERT_EQ(run({"ami", "--labels", s(dir / "l"), "--clusters", s(dir / "k" / "clusters.csv"), "--out",
                 s(dir / "ami1")}).code,
            0);
  const auto ami = nlohmann::json::parse(read_file(dir / "ami" / "ami.json"));
  EXPECT_EQ(ami["best_k_manner"].get<std::size_t>(), 4u);

  ASSERT_EQ(run({"plot", "--kind", "envelope", "--manifest", m, "--id", "synth0001", "--out", s(dir / "env.svg")}).code,
            0);
  const auto svg = read_file(dir / "env.svg");
  std::size_t peaks = 0, lines = 0;
  for (auto at = svg.find("class=\"peak\""); at != std::string::npos; at = svg.find("class=\"peak\"", at + 1)) ++peaks;
  for (auto at = svg.find("class=\"boundary\""); at != std::string::npos; at = svg.find("class=\"boundary\"", at + 1))
    ++lines;
  const auto tier = read_phn(dir / "c" / "synth0001.phn", 16000);
  EXPECT_EQ(lines, tier.segments.size() - 1);
  EXPECT_EQ(peaks, tier.segments.size() - 1);

  ASSERT_EQ(run({"plot", "--kind", "scatter", "--pca", s(dir / "pca"), "--out", s(dir / "pca.svg")}).code, 0);
  ASSERT_EQ(run({"plot", "--kind", "ami", "--ami", s(dir / "ami"), "--out", s(dir / "ami.svg")}).code, 0);
  EXPECT_NE(read_file(dir / "ami.svg").find("data-name=\"manner\""), std::string::npos);
  EXPECT_EQ(run({"plot", "--kind", "pie", "--out", s(dir / "x.svg")}).code, 1);
}

TEST(CliPipeline, MelspecFromWav) {
  TempDir dir;
  Waveform w;
  w.samples.resize(16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 0.3 * std::sin(2 * M_PI * 1000 * i / 16000.0);
  write_file_atomic(dir / "a.wav", encode_wav(w));
  ASSERT_EQ(run({"melspec", "--wav", s(dir / "a.wav"), "--out", s(dir / "a.npy")}).code, 0);
  EXPECT_EQ(read_tensor(dir / "a.npy").shape(), (std::vector<std::size_t>{98, 40}));
  write_file_atomic(dir / "m.json", R"({"utterances": [{"id": "a", "activations": "unused.npy", "wav": "a.wav"}]})");
  ASSERT_EQ(run({"melspec", "--manifest", s(dir / "m.json"), "--out", s(dir / "mel")}).code, 0);
  const auto m = read_manifest(dir / "mel" / "manifest.json");
  EXPECT_DOUBLE_EQ(m.frame_offset_ms, 12.5);
  EXPECT_EQ(read_tensor(m.entries[0].activations).shape(), (std::vector<std::size_t>{98, 40}));
  EXPECT_EQ(run({"melspec", "--out", s(dir / "x")}).code, 1);
}

TEST(CliPipeline, ForwardWritesTappedActivations) {
  TempDir dir;
  write_file_atomic(dir / "stack.json", R"({"layers": [
    {"name": "c1", "kind": "conv2d", "kernel": [3, 4], "padding": [1, 0], "in_channels": 1, "out_channels": 2},
    {"name": "r1", "kind": "relu"}]})");
  Rng rng(1);
  std::vector<double> w(24), b(2);
  for (auto &v : w) v = rng.uniform(-1, 1);
  write_tensor(dir / "w" / "c1.weight.npy", Tensor::f64({2, 1, 12}, w));
  write_tensor(dir / "w" / "c1.bias.npy", Tensor::f64({2}, b));
  Matrix spec(20, 4);
  for (auto &v : spec.data()) v = rng.uniform();
  write_tensor(dir / "s.npy", Tensor::from_matrix(spec));
  write_file_atomic(dir / "m.json", R"({"utterances": [{"id": "u", "activations": "s.npy"}]})");
  const auto r = run({"forward", "--manifest", s(dir / "m.json"), "--config", s(dir / "stack.json"), "--weights",
                      s(dir / "w"), "--tap", "r1", "--out", s(dir / "f")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto info = nlohmann::json::parse(read_file(dir / "f" / "forward.json"));
  EXPECT_EQ(info["receptive_field_frames"].get<int>(), 3);
  const auto a = read_tensor(dir / "f" / "u.npy");
  EXPECT_EQ(a.shape(), (std::vector<std::size_t>{20, 2}));
  EXPECT_EQ(run({"forward", "--manifest", s(dir / "m.json"), "--config", s(dir / "stack.json"), "--weights",
                 s(dir / "w"), "--tap", "zz", "--out", s(dir / "f")}).code,
            1);
}

namespace {

std::size_t count_of(const std::string &text, const std::string &needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST(Plot, EnvelopeWithOnePeakHasOneMarker) {
  const cli::EnvelopePlot p{"u", {0, 1, 2, 3, 2, 1, 0}, {3}, {2.5}};
  const auto svg = cli::render_svg(p);
  EXPECT_EQ(count_of(svg, "class=\"peak\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"boundary\""), 1u);
  EXPECT_EQ(svg, cli::render_svg(p));
  EXPECT_THROW(cli::render_svg(cli::EnvelopePlot{"u", {}, {}, {}}), ValidationError);
}

TEST(Plot, ScatterLegendHasOneEntryPerClass) {
  cli::ScatterPlot p;
  p.x = {0, 1, 2, 3, 4};
  p.y = {1, 0, 1, 0, 1};
  p.category = {"vowel", "stop", "vowel", "nasal", "stop"};
  const auto svg = cli::render_svg(p);
  EXPECT_EQ(count_of(svg, "class=\"legend-entry\""), 3u);
  EXPECT_EQ(count_of(svg, "class=\"point\""), 5u);
}

TEST(Plot, AmiLinesHaveOneVertexPerK) {
  cli::LinePlot p;
  p.x = {10, 20, 40, 80, 150};
  p.series = {{"phone", {0.1, 0.2, 0.3, 0.35, 0.4}}, {"manner", {0.2, 0.3, 0.32, 0.3, 0.28}}};
  const auto svg = cli::render_svg(p);
  ASSERT_EQ(count_of(svg, "<polyline"), 2u);
  for (auto at = svg.find("points=\""); at != std::string::npos; at = svg.find("points=\"", at + 1)) {
    const auto start = at + 8, end = svg.find('"', start);
    EXPECT_EQ(count_of(svg.substr(start, end - start), ","), 5u);
  }
}
