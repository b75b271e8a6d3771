#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "optionlab/linalg.hpp"
#include "optionlab/rng.hpp"

namespace optionlab {

struct GrassmannProjection {
  double distance = 0.0;  // sum_i (sigma_i - 1)^2
  Mat projection;         // U V^T, orthonormal columns
  Vec singular_values;    // descending
  bool full_rank = true;
};

/// Distance of an n x k matrix to the set of orthonormal-column matrices,
/// d = sum (sigma_i - 1)^2 from the thin SVD A = U S V^T, together with the
/// nearest point B = U V^T (valid when A has full column rank). The
/// distance always satisfies d = ||A - B||_F^2.
inline GrassmannProjection grassmann_distance_and_project(const Mat& a) {
  GrassmannProjection out;
  const ThinSvd svd = thin_svd(a);
  out.singular_values = svd.sigma;
  double d = 0.0;
  for (int i = 0; i < svd.sigma.size(); ++i) {
    const double gap = svd.sigma[i] - 1.0;
    d += gap * gap;
  }
  out.distance = d;
  const double tol = 1e-12 * std::max(1.0, svd.sigma.size() ? svd.sigma[0] : 0.0);
  out.full_rank = svd.sigma.minCoeff() > tol;
  out.projection = svd.u * svd.v.transpose();
  return out;
}

/// Whitening layer state: lower-triangular k x k weight with positive
/// diagonal, moved toward the batch covariance factor at rate alpha.
struct CholeskyLayer {
  Mat lw;
  double alpha = 0.2;

  void validate() const {
    if (lw.rows() != lw.cols()) throw std::invalid_argument("CholeskyLayer: not square");
    for (int i = 0; i < lw.rows(); ++i) {
      if (lw(i, i) <= 0.0)
        throw std::invalid_argument("CholeskyLayer: diagonal must be positive");
      for (int j = i + 1; j < lw.cols(); ++j)
        if (lw(i, j) != 0.0)
          throw std::invalid_argument("CholeskyLayer: weight must be lower-triangular");
    }
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("CholeskyLayer: alpha must lie in (0,1]");
  }
};

struct WhitenResult {
  Mat y_star;   // Y L^-T with (1/m) Y*^T Y* = I_k
  Mat factor;   // L with (1/m) Y^T Y = L L^T
};

/// Whitens Y so the sample covariance of the output is the identity:
/// S = (1/m) Y^T Y = L L^T, Y* = Y L^-T.
inline WhitenResult cholesky_whiten(const Mat& y) {
  const int m = static_cast<int>(y.rows());
  if (m == 0) throw std::invalid_argument("cholesky_whiten: empty batch");
  const Mat s = (y.transpose() * y) / static_cast<double>(m);
  WhitenResult out;
  out.factor = cholesky_lower(s);  // throws naming the collapsed direction
  // Solve Y* L^T = Y by forward substitution on the rows.
  out.y_star = out.factor.transpose()
                   .triangularView<Eigen::Upper>()
                   .solve<Eigen::OnTheRight>(y);
  return out;
}

struct SequentialRayleigh {
  double total = 0.0;
  std::vector<double> per_prefix;  // R_j for j = 1..k
};

/// Sum over column prefixes Y_j of trace((Y_j^T Y_j)^-1 Y_j^T A Y_j).
/// Each term depends only on the span of the prefix, so the value is
/// invariant under right-multiplication by invertible upper-triangular
/// blocks.
inline SequentialRayleigh sequential_rayleigh(const Mat& a_sym, const Mat& y) {
  const int k = static_cast<int>(y.cols());
  if (a_sym.rows() != y.rows() || a_sym.rows() != a_sym.cols())
    throw std::invalid_argument("sequential_rayleigh: shape mismatch");
  SequentialRayleigh out;
  const Mat ay = a_sym * y;
  for (int j = 1; j <= k; ++j) {
    const Mat yj = y.leftCols(j);
    const Mat gram = yj.transpose() * yj;
    Eigen::FullPivLU<Mat> lu(gram);
    if (lu.rank() < j)
      throw std::runtime_error("sequential_rayleigh: rank-deficient prefix " + std::to_string(j));
    const Mat quad = yj.transpose() * ay.leftCols(j);
    out.per_prefix.push_back(lu.solve(quad).trace());
    out.total += out.per_prefix.back();
  }
  return out;
}

/// Gradient of the sequential Rayleigh total with respect to Y.
inline Mat sequential_rayleigh_gradient(const Mat& a_sym, const Mat& y) {
  const int k = static_cast<int>(y.cols());
  Mat grad = Mat::Zero(y.rows(), k);
  for (int j = 1; j <= k; ++j) {
    const Mat yj = y.leftCols(j);
    const Mat gram = yj.transpose() * yj;
    Eigen::PartialPivLU<Mat> lu(gram);
    const Mat m_inv_yt_a_yj = lu.solve(yj.transpose() * (a_sym * yj));
    // d/dY tr(M^-1 Y^T A Y) = 2 A Y M^-1 - 2 Y M^-1 (Y^T A Y) M^-1
    const Mat term = 2.0 * (a_sym * yj) * lu.inverse() - 2.0 * yj * lu.solve(m_inv_yt_a_yj.transpose()).transpose();
    grad.leftCols(j) += term;
  }
  return grad;
}

struct ArmijoConfig {
  double c1 = 1e-4;
  double shrink = 0.5;
  int max_shrinks = 20;
};

struct SpectralNetConfig {
  double delta = 1e-3;          // constraint radius for the quadratic model
  double beta = 0.9;            // base step scale, < 1
  double alpha = 0.2;           // Cholesky layer update rate
  ArmijoConfig armijo;
  int stagnation_window = 10;
  int batch_size = 0;           // 0 = full batch
  int max_iters = 2000;
  double tol = 1e-12;           // objective-improvement tolerance

  void validate() const {
    if (delta <= 0.0 || beta <= 0.0 || alpha <= 0.0 || armijo.c1 <= 0.0 ||
        armijo.shrink <= 0.0 || stagnation_window <= 0 || max_iters <= 0 || tol <= 0.0)
      throw std::invalid_argument("SpectralNetConfig: all fields must be positive");
    if (beta >= 1.0) throw std::invalid_argument("SpectralNetConfig: beta must be < 1");
    if (!(alpha <= 1.0)) throw std::invalid_argument("SpectralNetConfig: alpha must be <= 1");
  }
};

struct SpectralNetTraceRow {
  int iter = 0;
  double objective = 0.0;
  double constraint = 0.0;       // ||Y^T Y - Y_t^T Y_t||_F^2 of the applied step
  double grassmann_distance = 0.0;
  double objective_step = 0.0;   // accepted Armijo step size
  double grassmann_step = 0.0;   // accepted secondary step size
};

struct SpectralNetResult {
  Mat y;                // raw embedding parameters
  CholeskyLayer layer;  // learned whitening weight
  std::vector<SpectralNetTraceRow> trace;
  int iterations = 0;
  bool converged = false;
};

inline Mat whitened_embedding(const SpectralNetResult& result) {
  return result.layer.lw.transpose()
      .triangularView<Eigen::Upper>()
      .solve<Eigen::OnTheRight>(result.y);
}

namespace detail {

/// Gauss-Newton Hessian action of c(Y) = ||Y^T Y - S_t||_F^2 at Y:
/// H[D] = 4 Y (Y^T D + D^T Y).
inline Mat constraint_gauss_newton(const Mat& y, const Mat& d) {
  return 4.0 * (y * (y.transpose() * d + d.transpose() * y));
}

}  // namespace detail

/// Learns the bottom-k eigen-subspace of a symmetric matrix by minimizing
/// the sequential Rayleigh quotient with the explicit matrix Y as the
/// parameterization. Per iteration: (1) ease the Cholesky layer toward the
/// batch covariance factor, (2) take the objective gradient, (3) build the
/// search direction by conjugate gradient in the Gauss-Newton metric of
/// the covariance-drift constraint, (4) Armijo line search on the
/// objective, (5) a secondary line search along the Grassmann-distance
/// gradient projected orthogonal to the search direction, keeping at least
/// 90% of step (4)'s gain, (6) halve the rates after a stagnant window.
inline SpectralNetResult spectral_network_train(const Mat& a_sym, int k,
                                                const SpectralNetConfig& config, Rng& rng) {
  config.validate();
  const int n = static_cast<int>(a_sym.rows());
  if (a_sym.cols() != n) throw std::invalid_argument("spectral_network_train: not square");
  if (!is_symmetric(a_sym, 1e-10))
    throw std::invalid_argument("spectral_network_train: input not symmetric");
  if (k < 1 || k > n) throw std::invalid_argument("spectral_network_train: bad k");

  const bool minibatch = config.batch_size > 0 && config.batch_size < n;
  SpectralNetResult result;
  result.y.resize(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) result.y(i, j) = rng.normal();
  result.y = cholesky_whiten(result.y).y_star;  // start whitened
  result.layer.lw = Mat::Identity(k, k);
  result.layer.alpha = config.alpha;

  double beta = config.beta;
  double alpha = config.alpha;
  double best_objective = std::numeric_limits<double>::infinity();
  int stagnant = 0;

  auto batch_rows = [&]() {
    std::vector<int> rows;
    if (!minibatch) {
      rows.resize(n);
      for (int i = 0; i < n; ++i) rows[i] = i;
      return rows;
    }
    // sample without replacement, ascending for determinism
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < config.batch_size; ++i) {
      const int j = i + rng.uniform_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    rows.assign(pool.begin(), pool.begin() + config.batch_size);
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  for (int iter = 0; iter < config.max_iters; ++iter) {
    const std::vector<int> rows = batch_rows();
    const int m = static_cast<int>(rows.size());
    Mat yb(m, k);
    Mat ab(m, m);
    for (int i = 0; i < m; ++i) {
      yb.row(i) = result.y.row(rows[i]);
      for (int j = 0; j < m; ++j) ab(i, j) = a_sym(rows[i], rows[j]);
    }

    // (1) covariance and Cholesky layer
    const Mat cov = (yb.transpose() * yb) / static_cast<double>(m);
    Mat factor;
    try {
      factor = cholesky_lower(cov);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string("spectral_network_train: covariance collapse: ") +
                               e.what());
    }
    result.layer.lw += alpha * (factor - result.layer.lw);

    // (2) objective and gradient; the sequential quotient is invariant
    // under the triangular whitening, so it is evaluated on Y directly.
    const double objective_0 = sequential_rayleigh(ab, yb).total;
    const Mat grad = sequential_rayleigh_gradient(ab, yb);

    // (3) search direction in the constraint's Gauss-Newton metric
    const double metric_scale = 4.0 * cov.trace() * m;
    const double damping = std::max(1e-8, 1e-6 * metric_scale);
    auto apply_metric = [&](const Vec& v) {
      const Mat d = Eigen::Map<const Mat>(v.data(), m, k);
      Mat hd = detail::constraint_gauss_newton(yb, d) + damping * d;
      return Vec(Eigen::Map<Vec>(hd.data(), hd.size()));
    };
    const Vec neg_grad = -Vec(Eigen::Map<const Vec>(grad.data(), grad.size()));
    const Vec dir_flat = conjugate_gradient(apply_metric, neg_grad, 2 * k * k + 10, 1e-10);
    Mat direction = Eigen::Map<const Mat>(dir_flat.data(), m, k);
    const double d_h_d = dir_flat.dot(apply_metric(dir_flat));
    const double descent = dir_flat.dot(neg_grad);
    if (!(descent > 0.0) || !(d_h_d > 0.0)) {
      result.trace.push_back({iter, objective_0, 0.0,
                              grassmann_distance_and_project(yb / std::sqrt(double(m))).distance,
                              0.0, 0.0});
      ++stagnant;
      if (stagnant >= config.stagnation_window) {
        beta *= 0.5;
        alpha *= 0.5;
        stagnant = 0;
      }
      continue;
    }

    // (4) Armijo line search on the objective along the direction
    double step = beta * std::sqrt(2.0 * config.delta / d_h_d);
    const double y_scale = yb.norm() / std::max(direction.norm(), 1e-300);
    step = std::min(step, y_scale);  // never exceed the parameter scale
    double objective_4 = objective_0;
    Mat y4 = yb;
    bool armijo_ok = false;
    for (int shrink = 0; shrink <= config.armijo.max_shrinks; ++shrink) {
      const Mat candidate = yb + step * direction;
      double value = std::numeric_limits<double>::infinity();
      try {
        value = sequential_rayleigh(ab, candidate).total;
      } catch (const std::runtime_error&) {
        // rank-deficient trial point: shrink
      }
      if (value <= objective_0 - config.armijo.c1 * step * descent) {
        y4 = candidate;
        objective_4 = value;
        armijo_ok = true;
        break;
      }
      step *= config.armijo.shrink;
    }

    double grassmann_step = 0.0;
    double objective_5 = objective_4;
    Mat y5 = y4;
    if (armijo_ok) {
      // (5) Grassmann pull: gradient of d_g on the whitened, scale-
      // normalized output, chained back to Y, projected orthogonal to the
      // search direction; must keep >= 90% of the Armijo gain.
      const Mat lw_inv_t = result.layer.lw.transpose()
                               .triangularView<Eigen::Upper>()
                               .solve(Mat::Identity(k, k));
      const Mat z = (y4 * lw_inv_t) / std::sqrt(static_cast<double>(m));
      const GrassmannProjection gp = grassmann_distance_and_project(z);
      if (gp.full_rank && gp.distance > 0.0) {
        Mat pull = (2.0 * (z - gp.projection)) * lw_inv_t.transpose() /
                   std::sqrt(static_cast<double>(m));
        const double overlap = (pull.array() * direction.array()).sum();
        const double dir_sq = direction.squaredNorm();
        if (dir_sq > 0.0) pull -= (overlap / dir_sq) * direction;
        const double pull_sq = pull.squaredNorm();
        if (pull_sq > 1e-300) {
          const double gain = objective_0 - objective_4;
          double pstep = gp.distance / pull_sq;  // Cauchy-style first trial
          for (int shrink = 0; shrink <= config.armijo.max_shrinks; ++shrink) {
            const Mat candidate = y4 - pstep * pull;
            double value;
            double dist;
            try {
              value = sequential_rayleigh(ab, candidate).total;
              const Mat zc = (candidate * lw_inv_t) / std::sqrt(static_cast<double>(m));
              dist = grassmann_distance_and_project(zc).distance;
            } catch (const std::runtime_error&) {
              pstep *= config.armijo.shrink;
              continue;
            }
            if (dist < gp.distance && value <= objective_0 - 0.9 * gain) {
              y5 = candidate;
              objective_5 = value;
              grassmann_step = pstep;
              break;
            }
            pstep *= config.armijo.shrink;
          }
        }
      }
    }

    // write the batch rows back
    for (int i = 0; i < m; ++i) result.y.row(rows[i]) = y5.row(i);

    const double constraint_value = (y5.transpose() * y5 - yb.transpose() * yb).squaredNorm();
    const Mat z_final = (y5 * result.layer.lw.transpose()
                                  .triangularView<Eigen::Upper>()
                                  .solve(Mat::Identity(k, k))) /
                        std::sqrt(static_cast<double>(m));
    result.trace.push_back({iter, objective_5, constraint_value,
                            grassmann_distance_and_project(z_final).distance,
                            armijo_ok ? step : 0.0, grassmann_step});
    result.iterations = iter + 1;

    // (6) stagnation control on the full-batch objective
    if (objective_5 < best_objective - config.tol) {
      best_objective = objective_5;
      stagnant = 0;
    } else {
      ++stagnant;
      if (stagnant >= config.stagnation_window) {
        beta *= 0.5;
        alpha *= 0.5;
        stagnant = 0;
        if (beta < 1e-8) {
          result.converged = true;
          break;
        }
      }
    }
  }
  return result;
}

inline std::string spectral_net_trace_csv(const SpectralNetResult& result) {
  std::ostringstream out;
  out << "iter,objective,constraint,grassmann_distance,objective_step,grassmann_step\n";
  char buf[64];
  for (const auto& row : result.trace) {
    out << row.iter;
    for (double v : {row.objective, row.constraint, row.grassmann_distance,
                     row.objective_step, row.grassmann_step}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace optionlab
