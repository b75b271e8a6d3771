#include <catch2/catch_amalgamated.hpp>

#include "optionlab/gridworld.hpp"
#include "optionlab/pvf.hpp"
#include "optionlab/spectral.hpp"

using namespace optionlab;

namespace {

GraphAccumulator path_graph(int n) {
  GraphAccumulator acc;
  for (int i = 0; i < n; ++i) acc.intern(i);
  for (int i = 0; i + 1 < n; ++i) acc.set_edge(i, i + 1, 1.0);
  return acc;
}

GraphAccumulator random_graph(std::uint64_t seed, int n, double edge_prob) {
  Rng rng(seed);
  GraphAccumulator acc;
  for (int i = 0; i < n; ++i) acc.intern(i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < edge_prob) acc.set_edge(i, j, 0.25 + rng.uniform());
  // keep it connected for the normalized kinds
  for (int i = 0; i + 1 < n; ++i)
    if (acc.edge_weight(i, i + 1) == 0.0) acc.set_edge(i, i + 1, 1.0);
  return acc;
}

}  // namespace

TEST_CASE("transition accumulation is idempotent and symmetric") {
  GraphAccumulator acc;
  acc.add_transition(100, 200);
  acc.add_transition(100, 200);
  REQUIRE(acc.size() == 2);
  REQUIRE(acc.edges().size() == 1);
  REQUIRE(acc.edge_weight(0, 1) == 1.0);
  acc.add_transition(200, 100);  // reverse direction, same edge
  REQUIRE(acc.edges().size() == 1);
  REQUIRE(acc.degree(0) == 1.0);
  REQUIRE(acc.degree(1) == 1.0);
}

TEST_CASE("full exploration of the 4-room matches enumerated adjacency") {
  const RoomLayout layout = four_rooms_layout(8);
  // walk-style accumulation: feed every (cell, move) transition
  GraphAccumulator acc;
  for (const Cell& c : layout.free_cells())
    for (int a = 0; a < kGridActions; ++a) {
      const Cell to = move_cell(layout, c, a);
      if (!(to == c))
        acc.add_transition(layout.cell_index(c), layout.cell_index(to));
    }
  // oracle: count directed adjacencies by enumeration, halve
  int directed = 0;
  for (const Cell& c : layout.free_cells())
    for (int a = 0; a < kGridActions; ++a)
      if (!(move_cell(layout, c, a) == c)) ++directed;
  REQUIRE(static_cast<int>(acc.edges().size()) == directed / 2);
}

TEST_CASE("laplacian of the two-vertex path") {
  const GraphAccumulator acc = path_graph(2);
  const Mat l = laplacian(acc, LaplacianKind::combinatorial);
  REQUIRE(l(0, 0) == 1.0);
  REQUIRE(l(0, 1) == -1.0);
  REQUIRE(l(1, 0) == -1.0);
  REQUIRE(l(1, 1) == 1.0);
}

TEST_CASE("self edges leave the combinatorial laplacian unchanged") {
  GraphAccumulator acc = path_graph(3);
  const Mat before = laplacian(acc, LaplacianKind::combinatorial);
  acc.set_edge(1, 1, 5.0);
  const Mat after = laplacian(acc, LaplacianKind::combinatorial);
  REQUIRE((before - after).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quadratic form equals the weighted edge sum") {
  const GraphAccumulator acc = random_graph(3, 20, 0.3);
  const Mat l = laplacian(acc, LaplacianKind::combinatorial);
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    Vec f(20);
    for (int i = 0; i < 20; ++i) f[i] = rng.normal();
    double edge_sum = 0.0;
    for (const auto& [ij, w] : acc.edges()) {
      const double gap = f[ij.first] - f[ij.second];
      edge_sum += w * gap * gap;
    }
    REQUIRE(f.dot(l * f) == Catch::Approx(edge_sum).margin(1e-10));
  }
}

TEST_CASE("normalized laplacians require positive degrees") {
  GraphAccumulator acc;
  acc.intern(0);
  acc.intern(1);
  acc.set_edge(0, 1, 1.0);
  acc.intern(2);  // isolated
  REQUIRE_THROWS(laplacian(acc, LaplacianKind::random_walk));
  REQUIRE_NOTHROW(laplacian(acc, LaplacianKind::combinatorial));
}

TEST_CASE("eigendecompose on the path and a diagonal matrix") {
  const SpectrumBundle p2 = eigendecompose(laplacian(path_graph(2), LaplacianKind::combinatorial));
  REQUIRE(p2.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(p2.eigenvalues[1] == Catch::Approx(2.0).margin(1e-12));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  REQUIRE(p2.eigenvectors(0, 0) == Catch::Approx(inv_sqrt2).margin(1e-12));
  REQUIRE(p2.eigenvectors(1, 0) == Catch::Approx(inv_sqrt2).margin(1e-12));
  // sign convention: first nonzero component positive
  REQUIRE(p2.eigenvectors(0, 1) > 0.0);

  Mat d = Mat::Zero(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  d(2, 2) = 2.0;
  const SpectrumBundle diag = eigendecompose(d);
  REQUIRE(diag.eigenvalues[0] == Catch::Approx(1.0));
  REQUIRE(diag.eigenvalues[1] == Catch::Approx(2.0));
  REQUIRE(diag.eigenvalues[2] == Catch::Approx(3.0));

  REQUIRE_THROWS(eigendecompose(Mat::Random(4, 4)));
}

TEST_CASE("four-room spectrum satisfies residual and secondary oracle") {
  const GraphAccumulator acc = cell_graph(four_rooms_layout(8));
  const Mat l = laplacian(acc, LaplacianKind::combinatorial);
  const SpectrumBundle spectrum = eigendecompose(l);
  // residual and orthonormality
  const Mat& q = spectrum.eigenvectors;
  REQUIRE((l * q - q * spectrum.eigenvalues.asDiagonal()).cwiseAbs().maxCoeff() <
          1e-8 * std::max(1.0, l.cwiseAbs().maxCoeff()));
  REQUIRE((q.transpose() * q - Mat::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff() < 1e-8);
  // smallest eigenvalue 0 with constant eigenvector (connected graph)
  REQUIRE(std::abs(spectrum.eigenvalues[0]) < 1e-10);
  const Vec first = q.col(0);
  REQUIRE((first.array() - first[0]).abs().maxCoeff() < 1e-8);
  // combinatorial eigenvalues are nonnegative
  REQUIRE(spectrum.eigenvalues.minCoeff() > -1e-10);

  // secondary oracle on the 4x4 leading principal block: bisection on the
  // characteristic polynomial's root counter (negative pivots of the
  // shifted matrix, by Sylvester's law of inertia)
  const Mat block = l.topLeftCorner(4, 4);
  const SpectrumBundle block_spectrum = eigendecompose(block);
  auto count_below = [&](double x) {
    Mat shifted = block;
    shifted.diagonal().array() -= x;
    Eigen::LDLT<Mat> ldlt(shifted);
    int negatives = 0;
    const Vec d = ldlt.vectorD();
    for (int i = 0; i < d.size(); ++i)
      if (d[i] < 0.0) ++negatives;
    return negatives;
  };
  double radius = 1.0;
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) row += std::abs(block(i, j));
    radius = std::max(radius, row + 1.0);
  }
  for (int i = 0; i < 4; ++i) {
    double lo = -radius, hi = radius;
    for (int it = 0; it < 200; ++it) {
      const double mid = (lo + hi) / 2.0;
      if (count_below(mid) <= i)
        lo = mid;
      else
        hi = mid;
    }
    REQUIRE(block_spectrum.eigenvalues[i] == Catch::Approx((lo + hi) / 2.0).margin(1e-7));
  }
}

TEST_CASE("zero eigenvalue multiplicity counts connected components") {
  GraphAccumulator acc;
  for (int i = 0; i < 6; ++i) acc.intern(i);
  acc.set_edge(0, 1, 1.0);
  acc.set_edge(1, 2, 1.0);
  acc.set_edge(3, 4, 1.0);
  acc.set_edge(4, 5, 1.0);  // two components
  const SpectrumBundle spectrum = eigendecompose(laplacian(acc, LaplacianKind::combinatorial));
  int zero_count = 0;
  for (int i = 0; i < spectrum.eigenvalues.size(); ++i)
    if (std::abs(spectrum.eigenvalues[i]) < 1e-10) ++zero_count;
  REQUIRE(zero_count == 2);
}

TEST_CASE("sym and random-walk laplacians share the spectrum") {
  const GraphAccumulator acc = random_graph(5, 15, 0.4);
  const SpectrumBundle sym = laplacian_spectrum(acc, LaplacianKind::symmetric);
  const Mat l_rw = laplacian(acc, LaplacianKind::random_walk);
  // direct residual evidence on the random-walk matrix itself
  for (int j = 0; j < sym.eigenvalues.size(); ++j) {
    Vec u = to_random_walk_eigenvector(acc, sym.eigenvectors.col(j));
    u /= u.norm();
    REQUIRE((l_rw * u - sym.eigenvalues[j] * u).cwiseAbs().maxCoeff() < 1e-8);
  }
  // all normalized eigenvalues live in [0, 2]
  REQUIRE(sym.eigenvalues.minCoeff() > -1e-10);
  REQUIRE(sym.eigenvalues.maxCoeff() < 2.0 + 1e-10);
  // L_rw annihilates the constant vector
  REQUIRE((l_rw * Vec::Ones(15)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cut measures on the four-vertex path") {
  const GraphAccumulator acc = path_graph(4);
  const CutMeasures cuts = cut_measures(acc, {0, 1});
  REQUIRE(cuts.ratiocut == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(cuts.ncut == Catch::Approx(1.0 / 3.0).margin(1e-12));
  REQUIRE(cuts.rayleigh_check_1 == Catch::Approx(cuts.ratiocut).margin(1e-10));
  REQUIRE(cuts.rayleigh_check_2 == Catch::Approx(cuts.ncut).margin(1e-10));
  REQUIRE_THROWS(cut_measures(acc, {}));
  REQUIRE_THROWS(cut_measures(acc, {0, 1, 2, 3}));
}

TEST_CASE("cut identities hold on random subsets") {
  const GraphAccumulator acc = random_graph(9, 30, 0.25);
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> subset;
    for (int v = 0; v < 30; ++v)
      if (rng.uniform() < 0.5) subset.push_back(v);
    if (subset.empty() || subset.size() == 30) continue;
    const CutMeasures cuts = cut_measures(acc, subset);
    REQUIRE(std::abs(cuts.rayleigh_check_1 - cuts.ratiocut) < 1e-10);
    REQUIRE(std::abs(cuts.rayleigh_check_2 - cuts.ncut) < 1e-10);
  }
}

TEST_CASE("spectrum csv and edge list are deterministic") {
  const GraphAccumulator acc = path_graph(3);
  REQUIRE(acc.edge_list_csv() == acc.edge_list_csv());
  const SpectrumBundle s = eigendecompose(laplacian(acc, LaplacianKind::combinatorial), 2);
  REQUIRE(spectrum_csv(s) == spectrum_csv(s));
  REQUIRE(s.eigenvalues.size() == 2);
}
