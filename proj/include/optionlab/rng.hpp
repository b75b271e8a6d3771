#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace optionlab {

/// Seeded random stream. mt19937_64 supplies the bit stream; all
/// conversions (uniform doubles, normals, categorical draws) are done by
/// hand so that a seed pins the exact sample sequence independently of the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: empty range");
    const int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }

  /// Draws an index from an (unnormalized is rejected) probability vector
  /// by inverse CDF scan. Consumes exactly one uniform.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double cum = 0.0;
    int last_positive = -1;
    for (int i = 0; i < probs.size(); ++i) {
      const double p = probs[i];
      if (p > 0.0) last_positive = i;
      cum += p;
      if (u < cum) return i;
    }
    if (last_positive < 0)
      throw std::invalid_argument("categorical: no positive mass");
    return last_positive;  // u landed in the rounding gap at the top
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace optionlab
