#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace optionlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool is_symmetric(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Numerically safe softmax of a logit row.
inline Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec p = (logits.array() - m).exp();
  return p / p.sum();
}

/// KL(p || q) for discrete distributions. Terms with p_i = 0 contribute 0;
/// q_i = 0 with p_i > 0 is a support violation.
inline double kl_divergence(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: size mismatch");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw std::domain_error("kl: support violation");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

struct EigenDecomposition {
  Vec values;        // ascending
  Mat vectors;       // columns, orthonormal
  double off_diag_sq = 0.0;  // residual off-diagonal mass at convergence
};

/// Cyclic Jacobi eigensolver for dense symmetric matrices. Every rotation
/// is applied explicitly so results are reproducible bit-for-bit from this
/// code alone. Intended for n <= 2000.
inline EigenDecomposition jacobi_eigen(Mat a, int max_sweeps = 100) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw std::invalid_argument("jacobi: matrix not square");
  if (!is_symmetric(a, 1e-10))
    throw std::invalid_argument("jacobi: matrix not symmetric");
  if (n > 2000) throw std::invalid_argument("jacobi: n exceeds dense cap 2000");
  a = ((a + a.transpose()) / 2.0).eval();

  Mat v = Mat::Identity(n, n);
  const double frob2 = std::max(a.squaredNorm(), 1e-300);

  auto off_sq = [&]() {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return s;
  };

  double off = off_sq();
  for (int sweep = 0; sweep < max_sweeps && off > 1e-20 * frob2; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
    off = off_sq();
  }

  EigenDecomposition out;
  out.off_diag_sq = off;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i) < a(j, j); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    out.vectors.col(j) = v.col(order[j]);
  }
  return out;
}

/// Flips each column so its first component above threshold is positive.
/// Keeps golden files stable when eigenvectors are sign-ambiguous.
inline void normalize_column_signs(Mat& m, double threshold = 1e-12) {
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) > threshold) {
        if (m(i, j) < 0.0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

struct ThinSvd {
  Mat u;       // n x k, columns for positive singular values only
  Vec sigma;   // descending, length k
  Mat v;       // k x k
};

/// Thin SVD of a tall matrix via the eigendecomposition of A^T A
/// (k is small everywhere this is used).
inline ThinSvd thin_svd(const Mat& a) {
  const int k = static_cast<int>(a.cols());
  if (a.rows() < a.cols()) throw std::invalid_argument("thin_svd: need n >= k");
  EigenDecomposition eig = jacobi_eigen(a.transpose() * a);
  ThinSvd out;
  out.sigma.resize(k);
  out.v.resize(k, k);
  for (int j = 0; j < k; ++j) {  // reverse: descending singular values
    const int src = k - 1 - j;
    out.sigma[j] = std::sqrt(std::max(0.0, eig.values[src]));
    out.v.col(j) = eig.vectors.col(src);
  }
  out.u.resize(a.rows(), k);
  const double tol = 1e-12 * std::max(1.0, out.sigma.size() ? out.sigma[0] : 0.0);
  for (int j = 0; j < k; ++j) {
    if (out.sigma[j] > tol)
      out.u.col(j) = a * out.v.col(j) / out.sigma[j];
    else
      out.u.col(j).setZero();
  }
  return out;
}

/// Lower Cholesky factor of an SPD matrix; reports which pivot collapsed.
inline Mat cholesky_lower(const Mat& s) {
  const int k = static_cast<int>(s.rows());
  if (s.cols() != k) throw std::invalid_argument("cholesky: not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  Mat l = Mat::Zero(k, k);
  for (int j = 0; j < k; ++j) {
    double d = s(j, j);
    for (int m = 0; m < j; ++m) d -= l(j, m) * l(j, m);
    if (d <= 1e-12 * scale)
      throw std::runtime_error("cholesky: matrix singular, direction " +
                               std::to_string(j) + " collapsed");
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < k; ++i) {
      double x = s(i, j);
      for (int m = 0; m < j; ++m) x -= l(i, m) * l(j, m);
      l(i, j) = x / l(j, j);
    }
  }
  return l;
}

/// Conjugate gradient for A x = b with a matrix-free symmetric PSD operator.
/// Stops when ||Ax - b|| <= tol * ||b|| or after max_iters.
inline Vec conjugate_gradient(const std::function<Vec(const Vec&)>& apply_a,
                              const Vec& b, int max_iters, double tol) {
  Vec x = Vec::Zero(b.size());
  Vec r = b;
  Vec p = r;
  double rs = r.squaredNorm();
  const double stop = tol * tol * std::max(b.squaredNorm(), 1e-300);
  for (int it = 0; it < max_iters && rs > stop; ++it) {
    const Vec ap = apply_a(p);
    if (!ap.allFinite())
      throw std::runtime_error("conjugate_gradient: operator returned NaN/Inf");
    const double p_ap = p.dot(ap);
    if (p_ap <= 0.0) break;  // numerical loss of positive-definiteness
    const double alpha = rs / p_ap;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

/// Principal angles (radians, ascending) between the column spans of A and B.
inline Vec principal_angles(const Mat& a, const Mat& b) {
  auto orth = [](const Mat& m) {
    Eigen::HouseholderQR<Mat> qr(m);
    Mat q = qr.householderQ() * Mat::Identity(m.rows(), m.cols());
    return q;
  };
  const Mat qa = orth(a);
  const Mat qb = orth(b);
  ThinSvd svd = thin_svd(qa.transpose() * qb);
  const int k = static_cast<int>(std::min(a.cols(), b.cols()));
  Vec angles(k);
  for (int i = 0; i < k; ++i) {
    const double c = std::clamp(svd.sigma[i], 0.0, 1.0);
    angles[i] = std::acos(c);
  }
  std::sort(angles.data(), angles.data() + k);
  return angles;
}

}  // namespace optionlab
