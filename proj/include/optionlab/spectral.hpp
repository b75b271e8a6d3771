#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "optionlab/linalg.hpp"

namespace optionlab {

/// Undirected weighted graph built incrementally from observed transitions.
/// State keys are interned into dense indices in first-seen order; the edge
/// map is kept canonical (i <= j) so iteration order is deterministic.
/// Degrees are maintained alongside the edge map at all times.
class GraphAccumulator {
 public:
  int intern(std::uint64_t key) {
    const auto it = index_of_.find(key);
    if (it != index_of_.end()) return it->second;
    const int idx = static_cast<int>(keys_.size());
    index_of_.emplace(key, idx);
    keys_.push_back(key);
    degree_.push_back(0.0);
    return idx;
  }

  bool contains(std::uint64_t key) const { return index_of_.count(key) != 0; }
  int index_of(std::uint64_t key) const { return index_of_.at(key); }
  int size() const { return static_cast<int>(keys_.size()); }
  const std::vector<std::uint64_t>& keys() const { return keys_; }
  double degree(int i) const { return degree_[i]; }

  /// Unit-weight edge from an observed transition; idempotent on repeats.
  void add_transition(std::uint64_t from, std::uint64_t to) {
    const int i = intern(from);
    const int j = intern(to);
    set_edge(i, j, 1.0);
  }

  /// Generic weighted edge (w >= 0); overwrites any existing weight.
  void set_edge(int i, int j, double w) {
    if (i < 0 || j < 0 || i >= size() || j >= size())
      throw std::invalid_argument("set_edge: vertex out of range");
    if (w < 0.0) throw std::invalid_argument("set_edge: negative weight");
    auto key = std::minmax(i, j);
    auto [it, inserted] = edges_.try_emplace({key.first, key.second}, w);
    const double old = inserted ? 0.0 : it->second;
    it->second = w;
    const double delta = w - old;
    degree_[i] += delta;
    if (j != i) degree_[j] += delta;
  }

  double edge_weight(int i, int j) const {
    auto key = std::minmax(i, j);
    const auto it = edges_.find({key.first, key.second});
    return it == edges_.end() ? 0.0 : it->second;
  }

  const std::map<std::pair<int, int>, double>& edges() const { return edges_; }

  /// Dense symmetric adjacency.
  Mat adjacency() const {
    Mat w = Mat::Zero(size(), size());
    for (const auto& [ij, weight] : edges_) {
      w(ij.first, ij.second) = weight;
      w(ij.second, ij.first) = weight;
    }
    return w;
  }

  std::string edge_list_csv() const {
    std::ostringstream out;
    out << "i,j,w\n";
    for (const auto& [ij, weight] : edges_)
      out << ij.first << ',' << ij.second << ',' << format_double_local(weight) << '\n';
    return out.str();
  }

 private:
  static std::string format_double_local(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }

  std::unordered_map<std::uint64_t, int> index_of_;
  std::vector<std::uint64_t> keys_;
  std::map<std::pair<int, int>, double> edges_;
  std::vector<double> degree_;
};

enum class LaplacianKind { combinatorial, random_walk, symmetric };

inline std::string to_string(LaplacianKind kind) {
  switch (kind) {
    case LaplacianKind::combinatorial: return "combinatorial";
    case LaplacianKind::random_walk: return "random_walk";
    case LaplacianKind::symmetric: return "symmetric";
  }
  throw std::logic_error("bad kind");
}

inline LaplacianKind laplacian_kind_from_string(const std::string& s) {
  if (s == "combinatorial") return LaplacianKind::combinatorial;
  if (s == "random_walk") return LaplacianKind::random_walk;
  if (s == "symmetric") return LaplacianKind::symmetric;
  throw std::invalid_argument("unknown laplacian kind: " + s);
}

/// L = D - W, L_rw = I - D^-1 W, or L_sym = I - D^-1/2 W D^-1/2.
/// Normalized kinds require every degree to be positive.
inline Mat laplacian(const GraphAccumulator& acc, LaplacianKind kind) {
  const int n = acc.size();
  if (n == 0) throw std::invalid_argument("laplacian: empty graph");
  const Mat w = acc.adjacency();
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = acc.degree(i);
  if (kind == LaplacianKind::combinatorial) {
    Mat l = -w;
    for (int i = 0; i < n; ++i) l(i, i) += d[i];
    return l;
  }
  for (int i = 0; i < n; ++i)
    if (d[i] <= 0.0)
      throw std::invalid_argument("laplacian: zero-degree vertex " + std::to_string(i) +
                                  " under a normalized kind");
  if (kind == LaplacianKind::random_walk) {
    Mat l = Mat::Identity(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) l(i, j) -= w(i, j) / d[i];
    return l;
  }
  Mat l = Mat::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) l(i, j) -= w(i, j) / std::sqrt(d[i] * d[j]);
  return l;
}

/// Ascending eigenvalues with orthonormal eigenvectors of a Laplacian (or
/// any symmetric matrix). Column signs are normalized for golden-file
/// stability: the first component above 1e-12 is positive.
struct SpectrumBundle {
  Vec eigenvalues;
  Mat eigenvectors;
  LaplacianKind kind = LaplacianKind::combinatorial;
  double off_diag_sq = 0.0;
};

inline SpectrumBundle eigendecompose(const Mat& matrix, std::optional<int> k = std::nullopt,
                                     LaplacianKind kind = LaplacianKind::combinatorial) {
  if (!is_symmetric(matrix, 1e-10))
    throw std::invalid_argument("eigendecompose: input not symmetric within 1e-10");
  EigenDecomposition eig = jacobi_eigen(matrix);
  SpectrumBundle out;
  out.kind = kind;
  out.off_diag_sq = eig.off_diag_sq;
  const int n = static_cast<int>(matrix.rows());
  const int keep = k ? std::min(*k, n) : n;
  if (k && *k <= 0) throw std::invalid_argument("eigendecompose: k must be positive");
  out.eigenvalues = eig.values.head(keep);
  out.eigenvectors = eig.vectors.leftCols(keep);
  normalize_column_signs(out.eigenvectors);
  return out;
}

/// Spectrum of the chosen Laplacian. The random-walk kind is computed
/// through the symmetric similarity: u is an eigenvector of L_rw iff
/// D^(1/2) u is an eigenvector of L_sym for the same eigenvalue, so the
/// bundle carries the L_sym (orthonormal) vectors with shared eigenvalues.
inline SpectrumBundle laplacian_spectrum(const GraphAccumulator& acc, LaplacianKind kind,
                                         std::optional<int> k = std::nullopt) {
  if (kind == LaplacianKind::random_walk)
    return eigendecompose(laplacian(acc, LaplacianKind::symmetric), k, kind);
  return eigendecompose(laplacian(acc, kind), k, kind);
}

/// Maps an L_sym eigenvector to the matching L_rw eigenvector (not unit
/// norm in general): u = D^(-1/2) v.
inline Vec to_random_walk_eigenvector(const GraphAccumulator& acc, const Vec& sym_vector) {
  Vec u(sym_vector.size());
  for (int i = 0; i < u.size(); ++i) u[i] = sym_vector[i] / std::sqrt(acc.degree(i));
  return u;
}

struct CutMeasures {
  double ratiocut;        // W(A, ~A) / |A|
  double ncut;            // W(A, ~A) / vol_d(A)
  double rayleigh_check_1;  // 1_A^T L 1_A / 1_A^T 1_A
  double rayleigh_check_2;  // 1_A^T L 1_A / 1_A^T D 1_A
};

/// Cut scores of a nonempty proper subset together with their
/// Rayleigh-quotient forms; the pairs are verified to agree to 1e-10.
inline CutMeasures cut_measures(const GraphAccumulator& acc, const std::vector<int>& subset) {
  const int n = acc.size();
  if (subset.empty()) throw std::invalid_argument("cut_measures: empty subset");
  std::vector<char> in_a(n, 0);
  for (int v : subset) {
    if (v < 0 || v >= n) throw std::invalid_argument("cut_measures: vertex out of range");
    in_a[v] = 1;
  }
  int size_a = 0;
  for (char f : in_a) size_a += f;
  if (size_a == n) throw std::invalid_argument("cut_measures: subset must be proper");

  double crossing = 0.0;
  for (const auto& [ij, w] : acc.edges())
    if (in_a[ij.first] != in_a[ij.second]) crossing += w;
  double vol_d = 0.0;
  for (int i = 0; i < n; ++i)
    if (in_a[i]) vol_d += acc.degree(i);

  CutMeasures out;
  out.ratiocut = crossing / static_cast<double>(size_a);
  out.ncut = vol_d > 0.0 ? crossing / vol_d : 0.0;

  const Mat l = laplacian(acc, LaplacianKind::combinatorial);
  Vec indicator = Vec::Zero(n);
  for (int i = 0; i < n; ++i) indicator[i] = in_a[i] ? 1.0 : 0.0;
  const double quad = indicator.dot(l * indicator);
  out.rayleigh_check_1 = quad / static_cast<double>(size_a);
  out.rayleigh_check_2 = vol_d > 0.0 ? quad / vol_d : 0.0;

  const double scale = std::max(1.0, std::abs(quad));
  if (std::abs(out.rayleigh_check_1 - out.ratiocut) > 1e-10 * scale ||
      std::abs(out.rayleigh_check_2 - out.ncut) > 1e-10 * scale)
    throw std::runtime_error("cut_measures: Rayleigh identity violated (internal fault)");
  return out;
}

/// CSV with one row per eigenpair: index, eigenvalue, then components.
inline std::string spectrum_csv(const SpectrumBundle& bundle) {
  std::ostringstream out;
  out << "index,eigenvalue,components...\n";
  char buf[64];
  for (int j = 0; j < bundle.eigenvalues.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", bundle.eigenvalues[j]);
    out << j << ',' << buf;
    for (int i = 0; i < bundle.eigenvectors.rows(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", bundle.eigenvectors(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace optionlab
