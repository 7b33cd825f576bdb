#pragma once

// Feature matrix, Gram operator and its eigenmodes.

#include "genie/geometry.hpp"
#include "genie/inr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace genie {

struct FeatureMatrix {
  Mat data;  // N x D, row i = h(points[i])
  Points points;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

inline FeatureMatrix build_feature_matrix(const Model& model, const Points& points) {
  if (points.cols() == 0) throw InputError("build_feature_matrix: no points");
  if (model.input_dim != 3) throw InputError("build_feature_matrix: model input_dim must be 3");
  return {features_batch(model, points).transpose(), points};
}

/// G = H^T H, exactly symmetric.
inline Mat gram_of(const Eigen::Ref<const Mat>& h) {
  const auto d = h.cols();
  Mat g = Mat::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

struct GramSpectrum {
  Mat gram;
  Vec eigenvalues;   // non-increasing
  Mat eigenvectors;  // orthonormal columns, matched to eigenvalues

  Eigen::Index dim() const { return eigenvalues.size(); }

  /// Number of eigenvalues above rel_threshold * lambda_1.
  Eigen::Index rank(double rel_threshold = 1e-12) const {
    if (dim() == 0 || eigenvalues[0] <= 0.0) return 0;
    const double cut = rel_threshold * eigenvalues[0];
    Eigen::Index r = 0;
    while (r < dim() && eigenvalues[r] > cut) ++r;
    return r;
  }
};

struct EigOptions {
  double rel_tolerance = 1e-12;  // stop when off(A)_F <= tol * ||G||_F
  int max_sweeps = 100;
  double symmetry_tolerance = 1e-10;  // relative to max |G_ij|
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Eigenvalues are returned non-increasing; each eigenvector is signed so its
/// largest-magnitude entry is positive.
inline std::pair<Vec, Mat> eig_sym(const Eigen::Ref<const Mat>& g, const EigOptions& opt = {}) {
  const Eigen::Index n = g.rows();
  if (g.cols() != n) throw InputError("eig_sym: matrix is not square");
  if (!g.allFinite()) throw NumericalError("eig_sym: matrix has non-finite entries");
  const double gmax = n ? g.cwiseAbs().maxCoeff() : 0.0;
  if (n && (g - g.transpose()).cwiseAbs().maxCoeff() > opt.symmetry_tolerance * gmax)
    throw InputError("eig_sym: matrix is not symmetric within tolerance");

  Mat a = 0.5 * (g + g.transpose());
  Mat v = Mat::Identity(n, n);
  const double target = opt.rel_tolerance * a.norm();
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    if (off_norm() <= target) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        // Skip rotations that cannot change the diagonal in floating point.
        if (sweep > 3 && std::abs(apq) < 1e-18 * (std::abs(app) + std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {  // columns p, q
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {  // rows p, q
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == opt.max_sweeps && off_norm() > target)
    throw NumericalError("eig_sym: Jacobi iteration did not converge in " +
                         std::to_string(opt.max_sweeps) + " sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  Vec vals(n);
  Mat vecs(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    vals[k] = a(src, src);
    Vec col = v.col(src);
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0.0) col = -col;
    vecs.col(k) = col;
  }
  return {vals, vecs};
}

inline GramSpectrum spectrum_of(const Mat& gram, const EigOptions& opt = {}) {
  auto [vals, vecs] = eig_sym(gram, opt);
  return {gram, std::move(vals), std::move(vecs)};
}

inline GramSpectrum spectrum_of(const FeatureMatrix& h, const EigOptions& opt = {}) {
  return spectrum_of(gram_of(h.data), opt);
}

/// Field change at the sample points induced by moving the head along v.
inline Vec deformation_mode(const Eigen::Ref<const Mat>& h, const Eigen::Ref<const Vec>& v) {
  if (v.size() != h.cols())
    throw InputError("deformation_mode: vector length " + std::to_string(v.size()) +
                     " != feature width " + std::to_string(h.cols()));
  return h * v;
}

/// Mean squared cosine of the principal angles between the spans of the first
/// k columns of a and b: ||A_k^T B_k||_F^2 / k.
inline double subspace_similarity(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b,
                                  Eigen::Index k) {
  if (k < 1) throw InputError("subspace_similarity: k must be >= 1");
  if (k > a.cols() || k > b.cols())
    throw InputError("subspace_similarity: k=" + std::to_string(k) + " exceeds the basis column count");
  if (a.rows() != b.rows()) throw InputError("subspace_similarity: bases live in different dimensions");
  const Mat c = a.leftCols(k).transpose() * b.leftCols(k);
  return std::clamp(c.squaredNorm() / static_cast<double>(k), 0.0, 1.0);
}

struct SweepPoint {
  std::string param;  // e.g. "0.05", "volume", "20000"
  SamplingSpec spec;
};

struct StabilityRow {
  std::string param;
  double similarity = 0.0;
  double top_eigenvalue_per_sample = 0.0;  // lambda_1 / N
};

/// Top-k eigenspace similarity of each sweep entry's Gram matrix to the
/// reference's. band_sdf defines the level set for band-mode entries.
inline std::vector<StabilityRow> stability_sweep(const Model& model, const std::vector<SweepPoint>& sweep,
                                                 const SamplingSpec& reference, Eigen::Index k,
                                                 const FieldFn& band_sdf) {
  for (const auto& s : sweep)
    if (s.spec.n_points > reference.n_points)
      throw InputError("stability_sweep: reference must have the largest sampling budget");
  const auto ref_h = build_feature_matrix(model, sample(reference, band_sdf));
  const auto ref = spectrum_of(ref_h);
  std::vector<StabilityRow> rows;
  for (const auto& s : sweep) {
    const auto h = build_feature_matrix(model, sample(s.spec, band_sdf));
    const auto sp = spectrum_of(h);
    rows.push_back({s.param, subspace_similarity(sp.eigenvectors, ref.eigenvectors, k),
                    sp.eigenvalues[0] / static_cast<double>(h.rows())});
  }
  return rows;
}

inline void write_spectrum_csv(std::ostream& os, const Vec& eigenvalues) {
  os << "k,lambda\n";
  os.precision(17);
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) os << k << ',' << eigenvalues[k] << '\n';
}

inline void write_stability_csv(std::ostream& os, const std::vector<StabilityRow>& rows) {
  os << "param,similarity\n";
  os.precision(17);
  for (const auto& r : rows) os << r.param << ',' << r.similarity << '\n';
}

}  // namespace genie
