#pragma once

// Independent reference computations used only by tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Number of eigenvalues of symmetric a strictly below x, from the signs of the
/// pivots of an unpivoted LDL^T of a - xI (Sylvester's law of inertia).
inline int count_below(const Mat& a, double x) {
  const auto n = a.rows();
  std::vector<long double> m(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m[static_cast<std::size_t>(i * n + j)] = a(i, j) - (i == j ? x : 0.0);
  int negatives = 0;
  const long double tiny = 1e-300L;
  for (Eigen::Index k = 0; k < n; ++k) {
    long double piv = m[static_cast<std::size_t>(k * n + k)];
    if (piv == 0.0L) piv = tiny;
    if (piv < 0.0L) ++negatives;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const long double f = m[static_cast<std::size_t>(i * n + k)] / piv;
      for (Eigen::Index j = k + 1; j < n; ++j)
        m[static_cast<std::size_t>(i * n + j)] -= f * m[static_cast<std::size_t>(k * n + j)];
    }
  }
  return negatives;
}

/// All eigenvalues of a small symmetric matrix by inertia bisection, descending.
inline Vec bisection_eigenvalues(const Mat& a, int iterations = 200) {
  const auto n = a.rows();
  const double bound = a.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  Vec out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    // k-th smallest eigenvalue: smallest x with count_below(x) > k.
    double lo = -bound, hi = bound;
    for (int it = 0; it < iterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (count_below(a, mid) > k) hi = mid;
      else lo = mid;
    }
    out[n - 1 - k] = 0.5 * (lo + hi);
  }
  return out;
}

/// Ridge normal-equation solution through an explicit dense inverse.
inline Vec dense_inverse_solve(const Mat& h, const Vec& y, double ridge) {
  Mat g = h.transpose() * h;
  g.diagonal().array() += ridge;
  const Mat inv = Eigen::FullPivLU<Mat>(g).inverse();
  return inv * (h.transpose() * y);
}

/// Random symmetric PSD matrix B B^T with rank r (r <= n).
inline Mat random_psd(Eigen::Index n, Eigen::Index r, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Mat b(n, r);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n01(rng);
  Mat g = b * b.transpose();
  return 0.5 * (g + g.transpose());
}

inline Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

}  // namespace oracle
