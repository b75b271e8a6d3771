#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "optionlab/linalg.hpp"
#include "optionlab/rng.hpp"
#include "optionlab/spectral.hpp"

namespace optionlab {

/// Synthetic blobs: k isotropic Gaussians on a circle of the given radius.
/// Points are emitted cluster-major so labels are reproducible.
inline Mat gaussian_blobs(int n_points, int k_centers, double radius, double stddev, Rng& rng,
                          std::vector<int>* labels_out = nullptr) {
  if (n_points < k_centers || k_centers < 1)
    throw std::invalid_argument("gaussian_blobs: bad sizes");
  Mat points(n_points, 2);
  if (labels_out) labels_out->assign(n_points, 0);
  int row = 0;
  for (int c = 0; c < k_centers; ++c) {
    const double angle = 2.0 * 3.14159265358979323846 * c / k_centers;
    const double cx = radius * std::cos(angle);
    const double cy = radius * std::sin(angle);
    const int count = n_points / k_centers + (c < n_points % k_centers ? 1 : 0);
    for (int i = 0; i < count; ++i, ++row) {
      points(row, 0) = cx + stddev * rng.normal();
      points(row, 1) = cy + stddev * rng.normal();
      if (labels_out) (*labels_out)[row] = c;
    }
  }
  return points;
}

/// Symmetric k-nearest-neighbor graph with unit weights; ties broken by
/// index so the graph is deterministic.
inline GraphAccumulator knn_graph(const Mat& points, int k_neighbors) {
  const int n = static_cast<int>(points.rows());
  if (k_neighbors < 1 || k_neighbors >= n)
    throw std::invalid_argument("knn_graph: bad neighbor count");
  GraphAccumulator acc;
  for (int i = 0; i < n; ++i) acc.intern(static_cast<std::uint64_t>(i));
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      dist[j] = {(points.row(i) - points.row(j)).squaredNorm(), j};
    dist[i].first = std::numeric_limits<double>::infinity();  // no self edge
    std::sort(dist.begin(), dist.end());
    for (int m = 0; m < k_neighbors; ++m) acc.set_edge(i, dist[m].second, 1.0);
  }
  return acc;
}

struct KmeansResult {
  std::vector<int> assignment;
  Mat centers;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; the best of n_init seeded
/// restarts by inertia.
inline KmeansResult kmeans(const Mat& x, int k, Rng& rng, int n_init = 5,
                           int max_iters = 200) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: bad k");
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int init = 0; init < n_init; ++init) {
    // k-means++ seeding
    Mat centers(k, d);
    centers.row(0) = x.row(rng.uniform_int(n));
    Vec d2 = Vec::Constant(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      for (int i = 0; i < n; ++i)
        d2[i] = std::min(d2[i], (x.row(i) - centers.row(c - 1)).squaredNorm());
      const double total = d2.sum();
      int pick = 0;
      if (total > 0.0) {
        const double u = rng.uniform() * total;
        double cum = 0.0;
        for (int i = 0; i < n; ++i) {
          cum += d2[i];
          if (u < cum) {
            pick = i;
            break;
          }
          pick = i;
        }
      } else {
        pick = rng.uniform_int(n);
      }
      centers.row(c) = x.row(pick);
    }

    std::vector<int> assignment(n, 0);
    for (int iter = 0; iter < max_iters; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = (x.row(i) - centers.row(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
          const double dist = (x.row(i) - centers.row(c)).squaredNorm();
          if (dist < bestd) {
            bestd = dist;
            arg = c;
          }
        }
        if (assignment[i] != arg) {
          assignment[i] = arg;
          changed = true;
        }
      }
      Mat sums = Mat::Zero(k, d);
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(assignment[i]) += x.row(i);
        ++counts[assignment[i]];
      }
      for (int c = 0; c < k; ++c)
        if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
      if (!changed && iter > 0) break;
    }
    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += (x.row(i) - centers.row(assignment[i])).squaredNorm();
    if (inertia < best.inertia) best = {assignment, centers, inertia};
  }
  return best;
}

/// Accuracy of a clustering against ground truth under the best label
/// permutation (brute force; k <= 8).
inline double permutation_accuracy(const std::vector<int>& predicted,
                                   const std::vector<int>& truth, int k) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("permutation_accuracy: size mismatch");
  if (k > 8) throw std::invalid_argument("permutation_accuracy: k too large for brute force");
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (perm[predicted[i]] == truth[i]) ++hits;
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

struct SpectralClusteringResult {
  std::vector<int> assignment;
  Mat embedding;
};

/// Spectral embedding (bottom-k eigenvectors of the chosen Laplacian of a
/// kNN graph) followed by k-means on the embedded rows.
inline SpectralClusteringResult spectral_cluster(const Mat& points, int k_clusters,
                                                 int k_neighbors, LaplacianKind kind, Rng& rng) {
  const GraphAccumulator graph = knn_graph(points, k_neighbors);
  const SpectrumBundle spectrum = laplacian_spectrum(graph, kind, k_clusters);
  SpectralClusteringResult out;
  out.embedding = spectrum.eigenvectors;
  out.assignment = kmeans(out.embedding, k_clusters, rng).assignment;
  return out;
}

}  // namespace optionlab
