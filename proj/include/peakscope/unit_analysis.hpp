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

// Peak labeling and the geometry of the peak embedding space: PCA, k-means
// and adjusted mutual information against phone / manner label sequences.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peakscope/activation.hpp"
#include "peakscope/core.hpp"
#include "peakscope/ingest.hpp"
#include "peakscope/peaks.hpp"
#include "peakscope/phone_map.hpp"

namespace peakscope {

// ---------------------------------------------------------------------------
// Labeling

enum class Arity { mono, di, tri_plus };

inline const char *to_string(Arity a) {
  switch (a) {
    case Arity::mono: return "mono";
    case Arity::di: return "di";
    case Arity::tri_plus: return "tri+";
  }
  return "?";
}

struct PeakLabel {
  std::vector<std::string> phone_seq;
  std::vector<Manner> manner_seq;
  Arity arity = Arity::mono;

  std::string phone_string() const {
    std::string s;
    for (const auto &p : phone_seq) s += (s.empty() ? "" : "_") + p;
    return s;
  }
  std::string manner_string() const {
    std::string s;
    for (auto m : manner_seq) s += (s.empty() ? "" : "_") + std::string(to_string(m));
    return s;
  }
};

/// Labels a peak at `time_s` with the reduced phones whose segments meet the
/// half-open window [t - w/2, t + w/2). Adjacent identical reduced phones
/// (e.g. a closure followed by its release) merge into one entry.
inline PeakLabel label_peak(double time_s, const PhoneTier &tier, const PhoneMapping &mapping,
                            double window_s = 0.040) {
  require(window_s > 0, "label window must be > 0");
  require(!tier.segments.empty() && time_s >= tier.start_time() && time_s < tier.end_time(),
          "peak at " + std::to_string(time_s) + " s lies outside the tier span");
  const double lo = time_s - window_s / 2, hi = time_s + window_s / 2;
  PeakLabel label;
  for (const auto &seg : tier.segments) {
    const double s = seg.start_sample / tier.sample_rate, e = seg.end_sample / tier.sample_rate;
    if (!(s < hi && e > lo)) continue;
    const auto &entry = mapping.lookup(seg.label);
    if (!label.phone_seq.empty() && label.phone_seq.back() == entry.reduced) continue;
    label.phone_seq.push_back(entry.reduced);
    label.manner_seq.push_back(entry.manner);
  }
  if (label.phone_seq.empty()) throw std::logic_error("peak window met no segment");
  label.arity = label.phone_seq.size() == 1 ? Arity::mono : label.phone_seq.size() == 2 ? Arity::di : Arity::tri_plus;
  return label;
}

struct LabeledPeakEmbedding {
  std::string utterance_id;
  std::size_t frame = 0;
  double time_s = 0.0;
  std::vector<double> vector;
  PeakLabel label;
};

inline std::vector<LabeledPeakEmbedding> label_peaks(const std::string &id, const ActivationMap &map,
                                                     const PeakSet &peaks, const PhoneTier &tier,
                                                     const PhoneMapping &mapping, double window_s = 0.040) {
  std::vector<LabeledPeakEmbedding> out;
  out.reserve(peaks.peaks.size());
  for (const auto &p : peaks.peaks) {
    require(p.frame < map.frames(), "peak frame outside activation map");
    const auto row = map.values.row(p.frame);
    out.push_back({id, p.frame, p.time_s, {row.begin(), row.end()}, label_peak(p.time_s, tier, mapping, window_s)});
  }
  return out;
}

inline Matrix stack_vectors(const std::vector<LabeledPeakEmbedding> &peaks) {
  require(!peaks.empty(), "no labeled peaks");
  Matrix m(peaks.size(), peaks.front().vector.size());
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    require(peaks[i].vector.size() == m.cols(), "embedding dimensions differ");
    std::copy(peaks[i].vector.begin(), peaks[i].vector.end(), m.row(i).begin());
  }
  return m;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  std::vector<double> mean;
  Matrix components;                     // k x F, orthonormal rows
  std::vector<double> explained_variance;  // non-increasing
  double total_variance = 0.0;           // trace of the sample covariance

  std::vector<double> explained_variance_ratio() const {
    std::vector<double> r;
    for (double v : explained_variance) r.push_back(total_variance > 0 ? v / total_variance : 0.0);
    return r;
  }
};

/// Eigen-decomposition of the sample covariance (n - 1 denominator). Each
/// component is signed so its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Matrix &x, std::size_t k) {
  require(x.rows() >= 2, "PCA needs at least 2 vectors");
  require(k >= 1 && k <= x.cols(), "PCA k must be in [1, F]");
  const auto n = static_cast<Eigen::Index>(x.rows()), f = static_cast<Eigen::Index>(x.cols());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> data(x.data().data(), n, f);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("PCA eigen-decomposition failed");

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + f);
  model.total_variance = cov.trace();
  model.components = Matrix(k, x.cols());
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index idx = f - 1 - static_cast<Eigen::Index>(c);  // eigenvalues ascend
    Eigen::VectorXd v = solver.eigenvectors().col(idx);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < f; ++i)
      if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0) v = -v;
    for (Eigen::Index i = 0; i < f; ++i) model.components(c, static_cast<std::size_t>(i)) = v[i];
    model.explained_variance.push_back(std::max(0.0, solver.eigenvalues()[idx]));
  }
  return model;
}

inline Matrix pca_project(const PcaModel &model, const Matrix &x) {
  require(x.cols() == model.mean.size(), "vector dimension " + std::to_string(x.cols()) + " does not match PCA dimension " +
                                             std::to_string(model.mean.size()));
  const std::size_t k = model.components.rows();
  Matrix out(x.rows(), k);
  std::vector<double> centered(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) centered[j] = x(i, j) - model.mean[j];
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      const auto comp = model.components.row(c);
      for (std::size_t j = 0; j < x.cols(); ++j) s += centered[j] * comp[j];
      out(i, c) = s;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-means

struct Clustering {
  std::size_t k = 0;
  Matrix centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
};

namespace kmeans_detail {

// Nearest centroid (lowest index on ties) and its squared distance.
inline std::pair<std::size_t, double> nearest(std::span<const double> p, const Matrix &centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

inline double assign(const Matrix &x, const Matrix &centroids, std::vector<std::size_t> &assignments,
                     std::vector<double> &dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto [c, d] = nearest(x.row(i), centroids);
    assignments[i] = c;
    dist[i] = d;
    inertia += d;
  }
  return inertia;
}

inline Matrix kmeanspp_init(const Matrix &x, std::size_t k, Rng &rng) {
  const std::size_t n = x.rows();
  Matrix centroids(k, x.cols());
  std::size_t first = rng.below(n);
  std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n - 1;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0 && pick > 0) --pick;
    } else {
      pick = rng.below(n);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c)));
  }
  return centroids;
}

}  // namespace kmeans_detail

/// k-means++ seeding followed by Lloyd iterations until no centroid moves by
/// `tol` or more (Euclidean). An empty cluster is reseeded at the point
/// farthest from its centroid. Returned assignments are the argmin over the
/// returned centroids.
inline Clustering kmeans(const Matrix &x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                         double tol = 1e-6) {
  using namespace kmeans_detail;
  require(k >= 1, "K must be >= 1");
  require(k <= x.rows(), "K = " + std::to_string(k) + " exceeds the number of points " + std::to_string(x.rows()));
  Rng rng(seed);
  Clustering out;
  out.k = k;
  out.seed = seed;
  out.centroids = kmeanspp_init(x, k, rng);
  out.assignments.assign(x.rows(), 0);
  std::vector<double> dist(x.rows());
  double prev_inertia = std::numeric_limits<double>::infinity();
  const std::size_t dims = x.cols();
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const double inertia = assign(x, out.centroids, out.assignments, dist);
    if (inertia > prev_inertia * (1 + 1e-12) + 1e-12) throw std::logic_error("k-means inertia increased");
    prev_inertia = inertia;
    ++out.iterations;

    Matrix sums(k, dims);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto c = out.assignments[i];
      ++counts[c];
      auto row = sums.row(c);
      const auto p = x.row(i);
      for (std::size_t j = 0; j < dims; ++j) row[j] += p[j];
    }
    Matrix next(k, dims);
    std::vector<bool> taken(x.rows(), false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dims; ++j) next(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < x.rows(); ++i)
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      taken[far] = true;
      std::copy(x.row(far).begin(), x.row(far).end(), next.row(c).begin());
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, squared_distance(next.row(c), out.centroids.row(c)));
    out.centroids = std::move(next);
    if (std::sqrt(shift) < tol) break;
  }
  out.inertia = assign(x, out.centroids, out.assignments, dist);
  return out;
}

// ---------------------------------------------------------------------------
// Adjusted mutual information

enum class AmiNormalizer { arithmetic, max };

/// Dense contingency table of two labelings over the same points.
struct Contingency {
  std::size_t n = 0;
  std::vector<std::size_t> row_sums, col_sums;
  std::vector<std::vector<std::size_t>> cells;

  template <typename A, typename B>
  static Contingency build(std::span<const A> u, std::span<const B> v) {
    require(u.size() == v.size(), "label sequences differ in length");
    require(!u.empty(), "label sequences are empty");
    std::map<A, std::size_t> ui;
    std::map<B, std::size_t> vi;
    for (const auto &a : u) ui.emplace(a, ui.size());
    for (const auto &b : v) vi.emplace(b, vi.size());
    Contingency t;
    t.n = u.size();
    t.row_sums.assign(ui.size(), 0);
    t.col_sums.assign(vi.size(), 0);
    t.cells.assign(ui.size(), std::vector<std::size_t>(vi.size(), 0));
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto r = ui[u[i]], c = vi[v[i]];
      ++t.cells[r][c];
      ++t.row_sums[r];
      ++t.col_sums[c];
    }
    return t;
  }
};

inline double entropy(const std::vector<std::size_t> &counts, std::size_t n) {
  double h = 0.0;
  for (auto c : counts)
    if (c) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}

inline double mutual_information(const Contingency &t) {
  const double n = static_cast<double>(t.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.row_sums.size(); ++i)
    for (std::size_t j = 0; j < t.col_sums.size(); ++j) {
      const auto c = t.cells[i][j];
      if (!c) continue;
      mi += c / n * std::log(n * c / (static_cast<double>(t.row_sums[i]) * t.col_sums[j]));
    }
  return std::max(0.0, mi);
}

/// Expected mutual information under the permutation (hypergeometric) model,
/// with log-factorials from lgamma.
inline double expected_mutual_information(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b,
                                          std::size_t n) {
  std::vector<double> lfact(n + 1);
  for (std::size_t i = 0; i <= n; ++i) lfact[i] = std::lgamma(static_cast<double>(i) + 1.0);
  const double nd = static_cast<double>(n);
  double emi = 0.0;
  for (auto ai : a)
    for (auto bj : b) {
      const std::size_t lo = std::max<std::size_t>(1, ai + bj > n ? ai + bj - n : 0);
      const std::size_t hi = std::min(ai, bj);
      const double fixed = lfact[ai] + lfact[bj] + lfact[n - ai] + lfact[n - bj] - lfact[n];
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        const double log_p = fixed - lfact[nij] - lfact[ai - nij] - lfact[bj - nij] - lfact[n - ai - bj + nij];
        emi += nij / nd * std::log(nd * nij / (static_cast<double>(ai) * bj)) * std::exp(log_p);
      }
    }
  return emi;
}

template <typename A, typename B>
double adjusted_mutual_information(std::span<const A> u, std::span<const B> v,
                                   AmiNormalizer norm = AmiNormalizer::arithmetic) {
  const auto t = Contingency::build(u, v);
  const double hu = entropy(t.row_sums, t.n), hv = entropy(t.col_sums, t.n);
  const double mi = mutual_information(t);
  const double emi = expected_mutual_information(t.row_sums, t.col_sums, t.n);
  const double scale = norm == AmiNormalizer::arithmetic ? 0.5 * (hu + hv) : std::max(hu, hv);
  const double denominator = scale - emi;
  if (std::fabs(denominator) <= 1e-15 * std::max(1.0, scale)) {
    // 0/0: identical non-trivial partitions (e.g. all singletons) still agree perfectly.
    const bool same_partition = t.row_sums.size() == t.col_sums.size() && t.row_sums.size() > 1 && [&] {
      for (const auto &row : t.cells)
        if (std::count_if(row.begin(), row.end(), [](std::size_t c) { return c > 0; }) != 1) return false;
      return true;
    }();
    return same_partition ? 1.0 : 0.0;
  }
  return (mi - emi) / denominator;
}

template <typename A, typename B>
double adjusted_mutual_information(const std::vector<A> &u, const std::vector<B> &v,
                                   AmiNormalizer norm = AmiNormalizer::arithmetic) {
  return adjusted_mutual_information(std::span<const A>(u), std::span<const B>(v), norm);
}

struct AmiSweepRow {
  std::size_t k = 0;
  double ami_phone = 0.0;
  double ami_manner = 0.0;
  double inertia = 0.0;
};

/// One k-means run per K (same seed for every K). Labels are compared as
/// whole sequences ("ae_t", "vowel_stop").
inline std::vector<AmiSweepRow> ami_sweep(const Matrix &vectors, const std::vector<std::string> &phone_labels,
                                          const std::vector<std::string> &manner_labels,
                                          const std::vector<std::size_t> &k_grid, std::uint64_t seed,
                                          std::size_t threads = 1,
                                          AmiNormalizer norm = AmiNormalizer::arithmetic) {
  require(!k_grid.empty(), "K grid must be non-empty");
  require(phone_labels.size() == vectors.rows() && manner_labels.size() == vectors.rows(),
          "label count does not match vector count");
  for (auto k : k_grid) require(k >= 1 && k <= vectors.rows(), "K = " + std::to_string(k) + " out of range");
  std::vector<AmiSweepRow> rows(k_grid.size());
  parallel_for(k_grid.size(), threads, [&](std::size_t i) {
    const auto cl = kmeans(vectors, k_grid[i], seed);
    rows[i] = {k_grid[i], adjusted_mutual_information(cl.assignments, phone_labels, norm),
               adjusted_mutual_information(cl.assignments, manner_labels, norm), cl.inertia};
  });
  return rows;
}

}  // namespace peakscope
