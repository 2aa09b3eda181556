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

// `peakscope <subcommand> [flags]`: one subcommand per pipeline stage,
// composed through corpus manifests and per-stage output directories.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "peakscope/ablation.hpp"
#include "peakscope/boundary_eval.hpp"
#include "peakscope/cli/csv.hpp"
#include "peakscope/cli/plot.hpp"
#include "peakscope/convnet.hpp"
#include "peakscope/corpus.hpp"
#include "peakscope/frontend.hpp"
#include "peakscope/peaks.hpp"
#include "peakscope/synth.hpp"
#include "peakscope/tensorio.hpp"
#include "peakscope/unit_analysis.hpp"

namespace peakscope::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

inline std::shared_ptr<spdlog::logger> logger() {
  if (auto l = spdlog::get("peakscope")) return l;
  auto l = spdlog::stderr_color_mt("peakscope");
  l->set_pattern("[%l] %v");
  l->set_level(spdlog::level::warn);
  return l;
}

inline void write_json(const fs::path &path, const ordered_json &doc) { write_file_atomic(path, doc.dump(2) + "\n"); }

inline ordered_json result_json(const EvalResult &r) {
  return {{"true_positives", r.true_positives}, {"n_detected", r.n_detected}, {"n_reference", r.n_reference},
          {"precision", r.precision},         {"recall", r.recall},         {"f1", r.f1}};
}

inline std::vector<std::string> grid_row_cells(double sigma, double tau, const EvalResult &r) {
  return {fmt_num(sigma), fmt_num(tau), std::to_string(r.true_positives), std::to_string(r.n_detected),
          std::to_string(r.n_reference), fmt_num(r.precision), fmt_num(r.recall), fmt_num(r.f1)};
}

inline const std::vector<std::string> kGridHeader = {"sigma", "tau", "tp", "n_det", "n_ref", "precision", "recall", "f1"};

// ---------------------------------------------------------------------------
// Peak directories: <dir>/<id>.peaks.csv (frame,time_s,sharpness) + peaks.json

inline void write_peak_dir(const fs::path &dir, const std::vector<PeakSet> &sets, double sigma, double tau,
                           std::size_t total_frames) {
  std::size_t total = 0;
  for (const auto &ps : sets) {
    CsvWriter csv({"frame", "time_s", "sharpness"});
    for (const auto &p : ps.peaks) csv.row({std::to_string(p.frame), fmt_num(p.time_s, "%.6f"), fmt_num(p.sharpness)});
    write_file_atomic(dir / (ps.utterance_id + ".peaks.csv"), csv.str());
    total += ps.peaks.size();
  }
  ordered_json doc{{"sigma", sigma},
                   {"tau", tau},
                   {"n_utterances", sets.size()},
                   {"n_peaks", total},
                   {"n_frames", total_frames},
                   {"frames_per_peak", total ? static_cast<double>(total_frames) / total : 0.0}};
  write_json(dir / "peaks.json", doc);
}

/// Frame indices are authoritative; times are recomputed on the manifest grid.
inline std::vector<PeakSet> read_peak_dir(const fs::path &dir, const CorpusManifest &m) {
  double sigma = 0, tau = 0;
  if (fs::exists(dir / "peaks.json")) {
    const auto doc = nlohmann::json::parse(read_file(dir / "peaks.json"));
    sigma = doc.value("sigma", 0.0);
    tau = doc.value("tau", 0.0);
  }
  std::vector<PeakSet> out;
  for (const auto &e : m.entries) {
    const auto path = dir / (e.id + ".peaks.csv");
    const auto table = parse_csv(read_file(path));
    const auto fc = table.column("frame"), sc = table.column("sharpness");
    PeakSet ps{e.id, {}, sigma, tau};
    for (const auto &row : table.rows) {
      Peak p;
      try {
        p.frame = std::stoul(row[fc]);
        p.sharpness = std::stod(row[sc]);
      } catch (const std::exception &) {
        throw FormatError(path.string() + ": malformed peak row");
      }
      p.time_s = (p.frame * m.frame_shift_ms + m.frame_offset_ms) / 1000.0;
      if (!ps.peaks.empty() && p.frame <= ps.peaks.back().frame)
        throw FormatError(path.string() + ": peak frames must be strictly increasing");
      ps.peaks.push_back(p);
    }
    out.push_back(std::move(ps));
  }
  return out;
}

inline std::vector<PeakSet> detect_corpus(const std::vector<CorpusUtterance> &corpus, double sigma, double tau,
                                          std::size_t threads) {
  std::vector<PeakSet> sets(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    sets[i] = detect(corpus[i].map, sigma, tau);
    sets[i].utterance_id = corpus[i].id;
  });
  return sets;
}

// ---------------------------------------------------------------------------
// Label directories: labels.csv + embeddings.npy (rows aligned)

struct LabelDir {
  std::vector<std::string> ids;
  std::vector<std::size_t> frames;
  std::vector<std::string> phone_seq, manner_seq;
  Matrix vectors;
};

inline LabelDir read_label_dir(const fs::path &dir) {
  const auto table = parse_csv(read_file(dir / "labels.csv"));
  LabelDir d;
  const auto ic = table.column("id"), fc = table.column("frame"), pc = table.column("phone_seq"),
             mc = table.column("manner_seq");
  for (const auto &row : table.rows) {
    d.ids.push_back(row[ic]);
    d.frames.push_back(std::stoul(row[fc]));
    d.phone_seq.push_back(row[pc]);
    d.manner_seq.push_back(row[mc]);
  }
  d.vectors = read_tensor(dir / "embeddings.npy").to_matrix();
  if (d.vectors.rows() != d.ids.size())
    throw FormatError((dir / "embeddings.npy").string() + ": row count does not match labels.csv");
  return d;
}

inline std::vector<double> parse_list(const std::string &text, const std::string &flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = std::string(trim(item));
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception &) {
      throw ValidationError(flag + ": '" + t + "' is not a number");
    }
  }
  require(!out.empty(), flag + " must list at least one value");
  return out;
}

inline std::string format_list(const std::vector<double> &v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt_num(x, "%.6g");
  return s;
}

// ---------------------------------------------------------------------------

struct Options {
  std::size_t threads = 1;
  bool verbose = false;

  // shared
  std::string manifest, out, peaks_dir, labels_dir;
  double sigma = 0.5, tau = 0.15, tolerance_ms = 20.0;
  std::uint64_t seed = 0;

  // synth
  SynthConfig synth;
  // melspec
  MelConfig mel;
  std::string wav;
  // forward
  std::string config, weights, tap = "relu2";
  // envelope
  // grid
  std::string sigma_grid = format_list(default_sigma_grid());
  std::string tau_grid = format_list(default_tau_grid());
  // ablate
  std::string strategy = "peaks";
  // labels
  double window_ms = 40.0;
  std::string phone_map;
  // pca
  std::size_t pca_k = 2;
  std::string manner_filter;
  // cluster
  std::size_t k = 40;
  std::size_t max_iter = 300;
  double kmeans_tol = 1e-6;
  // ami
  std::string k_grid = "10,20,40,80,150,200,300,500,700,1000";
  std::string clusters_file;
  std::string normalizer = "arithmetic";
  // plot
  std::string kind = "envelope", utterance, pca_dir, ami_dir;
  std::size_t top = 10;
};

inline void require_sigma_tau(const Options &o) {
  require(o.sigma > 0, "sigma must be > 0");
  require(o.tau >= 0, "tau must be >= 0");
}

inline std::size_t threads_from_env(std::size_t fallback) {
  if (const char *env = std::getenv("PEAKSCOPE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception &) {
    }
    throw ValidationError("PEAKSCOPE_THREADS must be a positive integer");
  }
  return fallback;
}

inline std::vector<PeakSet> peaks_for(const Options &o, const CorpusManifest &m,
                                      const std::vector<CorpusUtterance> &corpus) {
  if (!o.peaks_dir.empty()) return read_peak_dir(o.peaks_dir, m);
  return detect_corpus(corpus, o.sigma, o.tau, o.threads);
}

// --- subcommands ------------------------------------------------------------

inline int cmd_synth(const Options &o, std::ostream &out) {
  o.synth.validate();
  const auto corpus = generate(o.synth);
  const auto manifest = write_synth_corpus(corpus, o.out);
  out << "wrote " << manifest.entries.size() << " utterances to " << o.out << "\n";
  return 0;
}

inline int cmd_melspec(const Options &o, std::ostream &out) {
  o.mel.validate();
  require(o.wav.empty() != o.manifest.empty(), "give exactly one of --wav or --manifest");
  if (!o.wav.empty()) {
    const auto spec = melspec(read_wav(o.wav), o.mel);
    write_tensor(o.out, Tensor::from_matrix(spec.frames));
    out << "wrote " << spec.frames.rows() << " frames to " << o.out << "\n";
    return 0;
  }
  const auto m = read_manifest(o.manifest);
  CorpusManifest result;
  result.frame_shift_ms = o.mel.shift_ms;
  result.frame_offset_ms = o.mel.window_ms / 2.0;
  result.sample_rate_hz = m.sample_rate_hz;
  std::vector<ManifestEntry> entries(m.entries.size());
  parallel_for(m.entries.size(), o.threads, [&](std::size_t i) {
    const auto &e = m.entries[i];
    if (!e.wav) throw ValidationError("utterance '" + e.id + "' has no wav path");
    const auto spec = melspec(read_wav(*e.wav), o.mel);
    entries[i] = {e.id, fs::path(o.out) / (e.id + ".npy"), e.phn, e.wav};
    write_tensor(entries[i].activations, Tensor::from_matrix(spec.frames));
  });
  result.entries = std::move(entries);
  write_manifest(fs::path(o.out) / "manifest.json", result);
  out << "wrote " << result.entries.size() << " spectrograms to " << o.out << "\n";
  return 0;
}

inline int cmd_forward(const Options &o, std::ostream &out) {
  const auto stack = load_stack(o.config, o.weights);
  const auto rf = receptive_field(stack, o.tap);
  const auto m = read_manifest(o.manifest);
  CorpusManifest result = m;
  std::vector<ActivationMap> maps(m.entries.size());
  parallel_for(m.entries.size(), o.threads, [&](std::size_t i) {
    const auto &e = m.entries[i];
    maps[i] = forward(stack, read_tensor(e.activations).to_matrix(), o.tap, m.frame_shift_ms, m.frame_offset_ms);
    result.entries[i].activations = fs::path(o.out) / (e.id + ".npy");
    write_tensor(result.entries[i].activations, Tensor::from_matrix(maps[i].values));
  });
  if (!maps.empty()) {
    result.frame_shift_ms = maps.front().frame_shift_ms;
    result.frame_offset_ms = maps.front().frame_offset_ms;
  }
  write_manifest(fs::path(o.out) / "manifest.json", result);
  write_json(fs::path(o.out) / "forward.json",
             {{"tap", o.tap},
              {"receptive_field_frames", rf.span_frames},
              {"cumulative_stride_frames", rf.stride_frames},
              {"frame_shift_ms", result.frame_shift_ms},
              {"frame_offset_ms", result.frame_offset_ms}});
  out << "receptive field at " << o.tap << ": " << rf.span_frames << " input frames, stride " << rf.stride_frames
      << "\n";
  return 0;
}

inline int cmd_envelope(const Options &o, std::ostream &out) {
  require(o.sigma > 0, "sigma must be > 0");
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, false, o.threads);
  const auto kern = make_dog_kernel(o.sigma);
  parallel_for(corpus.size(), o.threads, [&](std::size_t i) {
    const auto env = compute_envelope(corpus[i].map);
    const auto d = dog_filter(env, kern);
    write_tensor(fs::path(o.out) / (corpus[i].id + ".envelope.npy"), Tensor::f64({env.values.size()}, env.values));
    write_tensor(fs::path(o.out) / (corpus[i].id + ".dog.npy"), Tensor::f64({d.size()}, d));
  });
  out << "wrote envelopes for " << corpus.size() << " utterances to " << o.out << "\n";
  return 0;
}

inline int cmd_peaks(const Options &o, std::ostream &out) {
  require_sigma_tau(o);
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, false, o.threads);
  const auto sets = detect_corpus(corpus, o.sigma, o.tau, o.threads);
  std::size_t frames = 0, total = 0;
  for (const auto &u : corpus) frames += u.map.frames();
  for (const auto &s : sets) total += s.peaks.size();
  write_peak_dir(o.out, sets, o.sigma, o.tau, frames);
  out << "detected " << total << " peaks in " << sets.size() << " utterances\n";
  return 0;
}

inline int cmd_eval(const Options &o, std::ostream &out) {
  require(o.tolerance_ms >= 0, "tolerance-ms must be >= 0");
  if (o.peaks_dir.empty()) require_sigma_tau(o);
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, true, o.threads);
  const auto sets = peaks_for(o, m, corpus);
  const EvalConfig cfg{o.tolerance_ms / 1000.0};
  const auto r = evaluate_corpus(sets, tiers_by_id(corpus), cfg);
  const double sigma = o.peaks_dir.empty() ? o.sigma : sets.empty() ? 0.0 : sets.front().sigma;
  const double tau = o.peaks_dir.empty() ? o.tau : sets.empty() ? 0.0 : sets.front().tau;
  CsvWriter csv(kGridHeader);
  csv.row(grid_row_cells(sigma, tau, r));
  write_file_atomic(fs::path(o.out) / "eval.csv", csv.str());
  auto doc = result_json(r);
  doc["sigma"] = sigma;
  doc["tau"] = tau;
  doc["tolerance_ms"] = o.tolerance_ms;
  write_json(fs::path(o.out) / "eval.json", doc);
  out << "precision " << fmt_num(r.precision, "%.4f") << " recall " << fmt_num(r.recall, "%.4f") << " f1 "
      << fmt_num(r.f1, "%.4f") << "\n";
  return 0;
}

inline int cmd_grid(const Options &o, std::ostream &out) {
  require(o.tolerance_ms >= 0, "tolerance-ms must be >= 0");
  const auto sigmas = parse_list(o.sigma_grid, "--sigma-grid");
  const auto taus = parse_list(o.tau_grid, "--tau-grid");
  for (double s : sigmas) require(s > 0, "sigma must be > 0");
  for (double t : taus) require(t >= 0, "tau must be >= 0");
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, true, o.threads);
  const auto g = grid_search(corpus, sigmas, taus, {o.tolerance_ms / 1000.0}, o.threads);
  CsvWriter csv(kGridHeader);
  for (const auto &row : g.rows) csv.row(grid_row_cells(row.sigma, row.tau, row.result));
  write_file_atomic(fs::path(o.out) / "grid.csv", csv.str());
  auto best = result_json(g.best.result);
  best["sigma"] = g.best.sigma;
  best["tau"] = g.best.tau;
  best["tolerance_ms"] = o.tolerance_ms;
  write_json(fs::path(o.out) / "best.json", best);
  out << "best f1 " << fmt_num(g.best.result.f1, "%.4f") << " at sigma " << g.best.sigma << " tau " << g.best.tau
      << "\n";
  return 0;
}

inline int cmd_ablate(const Options &o, std::ostream &out) {
  const auto strategy = parse_mask_strategy(o.strategy);
  if (o.peaks_dir.empty()) require_sigma_tau(o);
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, false, o.threads);
  const auto sets = peaks_for(o, m, corpus);
  std::vector<AblationMask> masks(corpus.size());
  CorpusManifest result = m;
  const Rng seeds(o.seed);
  parallel_for(corpus.size(), o.threads, [&](std::size_t i) {
    const auto &u = corpus[i];
    masks[i] = build_mask(sets[i], u.map.frames(), u.map.channels(), strategy, seeds.fork(i).next());
    result.entries[i].activations = fs::path(o.out) / (u.id + ".npy");
    write_tensor(result.entries[i].activations, Tensor::from_matrix(apply_mask(u.map, masks[i]).values));
  });
  write_manifest(fs::path(o.out) / "manifest.json", result);
  const auto stats = ablation_stats(masks);
  write_json(fs::path(o.out) / "ablation.json", {{"strategy", o.strategy},
                                                 {"seed", o.seed},
                                                 {"total_frames", stats.total_frames},
                                                 {"kept_frames", stats.total_kept},
                                                 {"n_peaks", stats.total_peaks},
                                                 {"kept_fraction", stats.kept_fraction},
                                                 {"zeroed_fraction", 1.0 - stats.kept_fraction},
                                                 {"frames_per_peak", stats.mean_frames_per_peak}});
  out << "kept " << stats.total_kept << " of " << stats.total_frames << " frames (" << o.strategy << ")\n";
  return 0;
}

inline int cmd_labels(const Options &o, std::ostream &out) {
  require(o.window_ms > 0, "window-ms must be > 0");
  if (o.peaks_dir.empty()) require_sigma_tau(o);
  const auto mapping = o.phone_map.empty() ? PhoneMapping::timit() : PhoneMapping::read(o.phone_map);
  const auto m = read_manifest(o.manifest);
  const auto corpus = load_corpus(m, true, o.threads);
  const auto sets = peaks_for(o, m, corpus);
  std::vector<std::vector<LabeledPeakEmbedding>> per(corpus.size());
  parallel_for(corpus.size(), o.threads, [&](std::size_t i) {
    per[i] = label_peaks(corpus[i].id, corpus[i].map, sets[i], corpus[i].tier, mapping, o.window_ms / 1000.0);
  });
  std::vector<LabeledPeakEmbedding> all;
  for (auto &v : per) all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  require(!all.empty(), "no peaks to label");
  CsvWriter csv({"id", "frame", "time_s", "phone_seq", "manner_seq", "arity"});
  std::map<std::string, std::size_t> arity;
  for (const auto &p : all) {
    csv.row({p.utterance_id, std::to_string(p.frame), fmt_num(p.time_s, "%.6f"), p.label.phone_string(),
             p.label.manner_string(), to_string(p.label.arity)});
    ++arity[to_string(p.label.arity)];
  }
  write_file_atomic(fs::path(o.out) / "labels.csv", csv.str());
  write_tensor(fs::path(o.out) / "embeddings.npy", Tensor::from_matrix(stack_vectors(all)));
  ordered_json fractions;
  for (const char *a : {"mono", "di", "tri+"})
    fractions[a] = static_cast<double>(arity.count(a) ? arity[a] : 0) / all.size();
  write_json(fs::path(o.out) / "labels.json",
             {{"n_peaks", all.size()}, {"window_ms", o.window_ms}, {"arity_fraction", fractions}});
  out << "labeled " << all.size() << " peaks\n";
  return 0;
}

inline int cmd_pca(const Options &o, std::ostream &out) {
  require(o.pca_k >= 1, "k must be >= 1");
  const auto d = read_label_dir(o.labels_dir);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.ids.size(); ++i)
    if (o.manner_filter.empty() || d.manner_seq[i] == o.manner_filter) keep.push_back(i);
  require(keep.size() >= 2, "fewer than 2 peaks match the selection");
  require(o.pca_k <= d.vectors.cols(), "k exceeds the embedding dimension");
  Matrix x(keep.size(), d.vectors.cols());
  for (std::size_t r = 0; r < keep.size(); ++r)
    std::copy(d.vectors.row(keep[r]).begin(), d.vectors.row(keep[r]).end(), x.row(r).begin());
  const auto model = pca_fit(x, o.pca_k);
  const auto coords = pca_project(model, x);
  std::vector<std::string> header{"id", "frame", "phone_seq", "manner_seq"};
  for (std::size_t c = 0; c < o.pca_k; ++c) header.push_back("pc" + std::to_string(c + 1));
  CsvWriter csv(header);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto i = keep[r];
    std::vector<std::string> row{d.ids[i], std::to_string(d.frames[i]), d.phone_seq[i], d.manner_seq[i]};
    for (std::size_t c = 0; c < o.pca_k; ++c) row.push_back(fmt_num(coords(r, c), "%.8g"));
    csv.row(row);
  }
  write_file_atomic(fs::path(o.out) / "pca.csv", csv.str());
  write_tensor(fs::path(o.out) / "components.npy", Tensor::from_matrix(model.components, DType::f64));
  write_json(fs::path(o.out) / "pca.json", {{"n_points", keep.size()},
                                            {"filter", o.manner_filter},
                                            {"explained_variance", model.explained_variance},
                                            {"explained_variance_ratio", model.explained_variance_ratio()},
                                            {"total_variance", model.total_variance}});
  out << "projected " << keep.size() << " peaks onto " << o.pca_k << " components\n";
  return 0;
}

inline int cmd_cluster(const Options &o, std::ostream &out) {
  require(o.k >= 1, "k must be >= 1");
  require(o.max_iter >= 1, "max-iter must be >= 1");
  require(o.kmeans_tol >= 0, "tol must be >= 0");
  const auto d = read_label_dir(o.labels_dir);
  require(o.k <= d.vectors.rows(), "k exceeds the number of peaks");
  const auto cl = kmeans(d.vectors, o.k, o.seed, o.max_iter, o.kmeans_tol);
  CsvWriter csv({"id", "frame", "cluster"});
  for (std::size_t i = 0; i < d.ids.size(); ++i)
    csv.row({d.ids[i], std::to_string(d.frames[i]), std::to_string(cl.assignments[i])});
  write_file_atomic(fs::path(o.out) / "clusters.csv", csv.str());
  write_json(fs::path(o.out) / "cluster.json",
             {{"k", o.k}, {"seed", o.seed}, {"inertia", cl.inertia}, {"iterations", cl.iterations}});
  out << "k-means K=" << o.k << " inertia " << fmt_num(cl.inertia, "%.6g") << "\n";
  return 0;
}

inline int cmd_ami(const Options &o, std::ostream &out) {
  require(o.normalizer == "arithmetic" || o.normalizer == "max", "normalizer must be arithmetic or max");
  const auto norm = o.normalizer == "max" ? AmiNormalizer::max : AmiNormalizer::arithmetic;
  std::vector<std::size_t> ks;
  if (o.clusters_file.empty())
    for (double k : parse_list(o.k_grid, "--k-grid")) {
      require(k >= 1 && k == std::floor(k), "--k-grid values must be positive integers");
      ks.push_back(static_cast<std::size_t>(k));
    }
  const auto d = read_label_dir(o.labels_dir);
  std::vector<AmiSweepRow> rows;
  if (!o.clusters_file.empty()) {
    const auto table = parse_csv(read_file(o.clusters_file));
    const auto cc = table.column("cluster");
    if (table.rows.size() != d.ids.size()) throw FormatError(o.clusters_file + ": row count does not match labels");
    std::vector<std::string> assignment;
    std::set<std::string> distinct;
    for (const auto &r : table.rows) {
      assignment.push_back(r[cc]);
      distinct.insert(r[cc]);
    }
    rows.push_back({distinct.size(), adjusted_mutual_information(assignment, d.phone_seq, norm),
                    adjusted_mutual_information(assignment, d.manner_seq, norm), 0.0});
  } else {
    for (auto k : ks) require(k <= d.vectors.rows(), "K = " + std::to_string(k) + " exceeds the number of peaks");
    rows = ami_sweep(d.vectors, d.phone_seq, d.manner_seq, ks, o.seed, o.threads, norm);
  }
  CsvWriter csv({"k", "ami_phone", "ami_manner"});
  std::size_t best_phone = 0, best_manner = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv.row({std::to_string(rows[i].k), fmt_num(rows[i].ami_phone), fmt_num(rows[i].ami_manner)});
    if (rows[i].ami_phone > rows[best_phone].ami_phone) best_phone = i;
    if (rows[i].ami_manner > rows[best_manner].ami_manner) best_manner = i;
  }
  write_file_atomic(fs::path(o.out) / "ami.csv", csv.str());
  write_json(fs::path(o.out) / "ami.json", {{"normalizer", o.normalizer},
                                            {"seed", o.seed},
                                            {"best_k_phone", rows[best_phone].k},
                                            {"best_k_manner", rows[best_manner].k},
                                            {"best_ami_phone", rows[best_phone].ami_phone},
                                            {"best_ami_manner", rows[best_manner].ami_manner}});
  out << "manner AMI peaks at K=" << rows[best_manner].k << " (" << fmt_num(rows[best_manner].ami_manner, "%.4f")
      << ")\n";
  return 0;
}

inline int cmd_plot(const Options &o, std::ostream &out) {
  if (o.kind == "envelope") {
    require_sigma_tau(o);
    require(!o.utterance.empty(), "--id is required for envelope plots");
    const auto m = read_manifest(o.manifest);
    const ManifestEntry *entry = nullptr;
    for (const auto &e : m.entries)
      if (e.id == o.utterance) entry = &e;
    require(entry != nullptr, "utterance '" + o.utterance + "' is not in the manifest");
    const auto map = load_activation_map(*entry, m);
    const auto env = compute_envelope(map);
    EnvelopePlot p{o.utterance, env.values, detect(env, o.sigma, o.tau).frames(), {}};
    if (entry->phn) {
      for (double b : tier_boundaries(read_phn(*entry->phn, m.sample_rate_hz)))
        p.boundary_frames.push_back((b * 1000.0 - m.frame_offset_ms) / m.frame_shift_ms);
    }
    emit_plot(p, o.out);
  } else if (o.kind == "scatter") {
    const auto table = parse_csv(read_file(fs::path(o.pca_dir) / "pca.csv"));
    const auto xc = table.column("pc1"), yc = table.column("pc2"), mc = table.column("manner_seq");
    std::map<std::string, std::size_t> freq;
    for (const auto &r : table.rows) ++freq[r[mc]];
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto &[label, n] : freq) ranked.emplace_back(n, label);
    std::sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::set<std::string> top;
    for (std::size_t i = 0; i < std::min(o.top, ranked.size()); ++i) top.insert(ranked[i].second);
    ScatterPlot p{"peak embeddings (top " + std::to_string(top.size()) + " manner labels)", {}, {}, {}};
    for (const auto &r : table.rows) {
      if (!top.count(r[mc])) continue;
      p.x.push_back(std::stod(r[xc]));
      p.y.push_back(std::stod(r[yc]));
      p.category.push_back(r[mc]);
    }
    emit_plot(p, o.out);
  } else if (o.kind == "ami") {
    const auto table = parse_csv(read_file(fs::path(o.ami_dir) / "ami.csv"));
    const auto kc = table.column("k"), pc = table.column("ami_phone"), mc = table.column("ami_manner");
    LinePlot p{"AMI vs K", {}, {{"phone", {}}, {"manner", {}}}};
    for (const auto &r : table.rows) {
      p.x.push_back(std::stod(r[kc]));
      p.series[0].second.push_back(std::stod(r[pc]));
      p.series[1].second.push_back(std::stod(r[mc]));
    }
    emit_plot(p, o.out);
  } else {
    throw ValidationError("unknown plot kind '" + o.kind + "' (envelope, scatter, ami)");
  }
  out << "wrote " << o.out << "\n";
  return 0;
}

// --- entry point ------------------------------------------------------------

inline int run(const std::vector<std::string> &args, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  Options o;
  CLI::App app{"Activation-envelope peak detection and peak embedding analysis", "peakscope"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");
  auto *threads_opt = app.add_option("--threads", o.threads, "Worker threads (PEAKSCOPE_THREADS overrides the default)")
                          ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

  auto add_manifest = [&](CLI::App *s, bool required = true) {
    auto *opt = s->add_option("--manifest", o.manifest, "Corpus manifest (JSON)");
    if (required) opt->required();
  };
  auto add_out = [&](CLI::App *s, const char *what) { s->add_option("--out", o.out, what)->required(); };
  auto add_detect = [&](CLI::App *s) {
    s->add_option("--sigma", o.sigma, "DoG width in frames");
    s->add_option("--tau", o.tau, "Sharpness threshold");
  };
  auto add_peaks_dir = [&](CLI::App *s) {
    s->add_option("--peaks", o.peaks_dir, "Peak directory from `peaks` (otherwise detect with --sigma/--tau)");
  };

  auto *synth = app.add_subcommand("synth", "Generate a synthetic activation corpus");
  add_out(synth, "Output corpus directory");
  synth->add_option("--seed", o.synth.seed, "Generator seed");
  synth->add_option("--utterances", o.synth.n_utterances, "Number of utterances");
  synth->add_option("--frames-min", o.synth.frames_min, "Minimum frames per utterance");
  synth->add_option("--frames-max", o.synth.frames_max, "Maximum frames per utterance");
  synth->add_option("--channels", o.synth.channels, "Channels F");
  synth->add_option("--segments-min", o.synth.segments_min, "Minimum segments per utterance");
  synth->add_option("--segments-max", o.synth.segments_max, "Maximum segments per utterance");
  synth->add_option("--min-segment-frames", o.synth.min_segment_frames, "Minimum segment length in frames");
  synth->add_option("--active-channels", o.synth.active_channels, "Non-zero channels per class pattern");
  synth->add_option("--bump", o.synth.transition_bump, "Extra magnitude at transition frames");
  synth->add_option("--noise", o.synth.noise_sigma, "Folded Gaussian noise sigma");
  synth->add_option("--classes", o.synth.n_planted_classes, "Planted segment classes");

  auto *mel = app.add_subcommand("melspec", "Log mel-filterbank spectrograms from PCM16 WAV");
  add_manifest(mel, false);
  mel->add_option("--wav", o.wav, "Single input WAV (writes one NPY to --out)");
  add_out(mel, "Output directory (manifest mode) or NPY path (--wav)");
  mel->add_option("--sample-rate", o.mel.sample_rate, "Expected sample rate in Hz");
  mel->add_option("--window-ms", o.mel.window_ms, "Analysis window in ms");
  mel->add_option("--shift-ms", o.mel.shift_ms, "Frame shift in ms");
  mel->add_option("--n-fft", o.mel.n_fft, "FFT size");
  mel->add_option("--n-mels", o.mel.n_mels, "Mel filters");
  mel->add_option("--fmin", o.mel.fmin, "Lowest filter edge in Hz");
  mel->add_option("--fmax", o.mel.fmax, "Highest filter edge in Hz");
  mel->add_option("--preemphasis", o.mel.preemphasis, "Preemphasis coefficient");
  mel->add_option("--log-floor", o.mel.log_floor, "Energy floor before the log");

  auto *fwd = app.add_subcommand("forward", "Run a conv stack over spectrograms and tap one layer");
  add_manifest(fwd);
  fwd->add_option("--config", o.config, "Stack config (JSON)")->required();
  fwd->add_option("--weights", o.weights, "Directory of <layer>.<param>.npy tensors")->required();
  fwd->add_option("--tap", o.tap, "Layer whose output is written");
  add_out(fwd, "Output directory");

  auto *envc = app.add_subcommand("envelope", "Write e[n] and its DoG response per utterance");
  add_manifest(envc);
  envc->add_option("--sigma", o.sigma, "DoG width in frames");
  add_out(envc, "Output directory");

  auto *peaks = app.add_subcommand("peaks", "Detect envelope peaks");
  add_manifest(peaks);
  add_detect(peaks);
  add_out(peaks, "Output peak directory");

  auto *eval = app.add_subcommand("eval", "Score peaks against reference phone boundaries");
  add_manifest(eval);
  add_peaks_dir(eval);
  add_detect(eval);
  eval->add_option("--tolerance-ms", o.tolerance_ms, "Match tolerance (+/- ms)");
  add_out(eval, "Output directory");

  auto *grid = app.add_subcommand("grid", "Sweep sigma x tau and report the best F1");
  add_manifest(grid);
  grid->add_option("--sigma-grid", o.sigma_grid, "Comma-separated sigma values");
  grid->add_option("--tau-grid", o.tau_grid, "Comma-separated tau values");
  grid->add_option("--tolerance-ms", o.tolerance_ms, "Match tolerance (+/- ms)");
  add_out(grid, "Output directory");

  auto *ablate = app.add_subcommand("ablate", "Zero all but the selected frames of each activation map");
  add_manifest(ablate);
  add_peaks_dir(ablate);
  add_detect(ablate);
  ablate->add_option("--strategy", o.strategy, "peaks, uniform, random or midpoint");
  ablate->add_option("--seed", o.seed, "Seed for the random strategy");
  add_out(ablate, "Output directory");

  auto *labels = app.add_subcommand("labels", "Label peaks with phone and manner sequences");
  add_manifest(labels);
  add_peaks_dir(labels);
  add_detect(labels);
  labels->add_option("--window-ms", o.window_ms, "Label window width in ms");
  labels->add_option("--phone-map", o.phone_map, "Phone map file (surface reduced manner); built-in TIMIT map if empty");
  add_out(labels, "Output label directory");

  auto *pca = app.add_subcommand("pca", "Project labeled peak embeddings with PCA");
  pca->add_option("--labels", o.labels_dir, "Label directory from `labels`")->required();
  pca->add_option("--k", o.pca_k, "Number of components");
  pca->add_option("--manner", o.manner_filter, "Only peaks with this manner sequence (e.g. vowel_stop)");
  add_out(pca, "Output directory");

  auto *cluster = app.add_subcommand("cluster", "k-means over labeled peak embeddings");
  cluster->add_option("--labels", o.labels_dir, "Label directory from `labels`")->required();
  cluster->add_option("--k", o.k, "Number of clusters");
  cluster->add_option("--seed", o.seed, "k-means++ seed");
  cluster->add_option("--max-iter", o.max_iter, "Maximum Lloyd iterations");
  cluster->add_option("--tol", o.kmeans_tol, "Centroid shift tolerance");
  add_out(cluster, "Output directory");

  auto *ami = app.add_subcommand("ami", "Adjusted mutual information between clusters and labels");
  ami->add_option("--labels", o.labels_dir, "Label directory from `labels`")->required();
  ami->add_option("--k-grid", o.k_grid, "Comma-separated K values to sweep");
  ami->add_option("--clusters", o.clusters_file, "Score an existing clusters.csv instead of sweeping");
  ami->add_option("--seed", o.seed, "k-means++ seed");
  ami->add_option("--normalizer", o.normalizer, "arithmetic or max");
  add_out(ami, "Output directory");

  auto *plot = app.add_subcommand("plot", "Render an SVG figure");
  plot->add_option("--kind", o.kind, "envelope, scatter or ami");
  add_manifest(plot, false);
  plot->add_option("--id", o.utterance, "Utterance id (envelope)");
  add_detect(plot);
  plot->add_option("--pca", o.pca_dir, "PCA directory (scatter)");
  plot->add_option("--top", o.top, "Most frequent manner labels to draw (scatter)");
  plot->add_option("--ami", o.ami_dir, "AMI directory (ami)");
  add_out(plot, "Output SVG path");

  std::vector<std::string> argv_store = args;
  if (argv_store.empty()) argv_store.push_back("peakscope");
  std::vector<char *> argv;
  for (auto &a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  auto log = logger();
  log->set_level(o.verbose ? spdlog::level::info : spdlog::level::warn);
  try {
    if (threads_opt->count() == 0) o.threads = threads_from_env(o.threads);
    CLI::App *sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    log->info("running {} with {} thread(s)", name, o.threads);
    if (name == "synth") return cmd_synth(o, out);
    if (name == "melspec") return cmd_melspec(o, out);
    if (name == "forward") return cmd_forward(o, out);
    if (name == "envelope") return cmd_envelope(o, out);
    if (name == "peaks") return cmd_peaks(o, out);
    if (name == "eval") return cmd_eval(o, out);
    if (name == "grid") return cmd_grid(o, out);
    if (name == "ablate") return cmd_ablate(o, out);
    if (name == "labels") return cmd_labels(o, out);
    if (name == "pca") return cmd_pca(o, out);
    if (name == "cluster") return cmd_cluster(o, out);
    if (name == "ami") return cmd_ami(o, out);
    if (name == "plot") return cmd_plot(o, out);
    err << "error: unknown subcommand '" << name << "'\n";
    return 1;
  } catch (const ValidationError &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception &e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace peakscope::cli
