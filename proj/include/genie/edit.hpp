#pragma once

// Closed-form last-layer edits.
//
// For a target change y at the sample points, the head update solves
// min ||H dtheta - y||^2 (optionally ridge-regularised). The realised change
// H dtheta is the projection of y onto Range(H); the editability ratio
// eta = ||H dtheta||^2 / ||y||^2 measures how much of y a last-layer update
// can express.

#include "genie/gram.hpp"
#include "genie/inr.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace genie {

class DegenerateModeError : public InputError {
 public:
  using InputError::InputError;
};

struct EditTarget {
  Points points;
  Vec y;  // desired field minus current field at points
  std::string description;
};

struct EditSolution {
  Vec delta_theta;
  Vec realized;
  Vec residual;
  double eta = 0.0;
  double ridge = 0.0;
  double solve_time = 0.0;  // seconds
  bool pseudoinverse = false;
};

inline constexpr double kRankThreshold = 1e-12;

/// 1e-8 * trace(G) / D.
inline double default_ridge(const Mat& gram) {
  return gram.rows() ? 1e-8 * gram.trace() / static_cast<double>(gram.rows()) : 0.0;
}

/// Solves (G + ridge I) dtheta = H^T y. With ridge == 0 and a rank-deficient
/// G the minimum-norm solution comes from the eigendecomposition.
inline EditSolution solve_edit(const Eigen::Ref<const Mat>& h, const Eigen::Ref<const Vec>& y,
                               double ridge) {
  if (y.size() != h.rows())
    throw InputError("solve_edit: target length " + std::to_string(y.size()) + " != sample count " +
                     std::to_string(h.rows()));
  if (!(ridge >= 0.0)) throw InputError("solve_edit: ridge must be >= 0");
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index d = h.cols();
  EditSolution sol;
  sol.ridge = ridge;
  const double y2 = y.squaredNorm();
  if (y2 == 0.0) {
    sol.delta_theta = Vec::Zero(d);
    sol.realized = Vec::Zero(h.rows());
    sol.residual = Vec::Zero(h.rows());
    sol.eta = 1.0;
  } else {
    const Mat g = gram_of(h);
    const Vec rhs = h.transpose() * y;
    bool use_cholesky = ridge > 0.0;
    std::optional<GramSpectrum> spec;
    if (!use_cholesky) {
      spec = spectrum_of(g);
      use_cholesky = spec->rank(kRankThreshold) == d;
    }
    if (use_cholesky) {
      Mat a = g;
      a.diagonal().array() += ridge;
      const Eigen::LLT<Mat> llt(a);
      if (llt.info() != Eigen::Success)
        throw NumericalError("solve_edit: Cholesky factorisation failed (non-finite features?)");
      sol.delta_theta = llt.solve(rhs);
    } else {
      const auto r = spec->rank(kRankThreshold);
      const Mat v = spec->eigenvectors.leftCols(r);
      sol.delta_theta = v * (v.transpose() * rhs).cwiseQuotient(spec->eigenvalues.head(r));
      sol.pseudoinverse = true;
    }
    if (!sol.delta_theta.allFinite()) throw NumericalError("solve_edit: non-finite solution");
    sol.realized = h * sol.delta_theta;
    sol.residual = y - sol.realized;
    sol.eta = std::clamp(sol.realized.squaredNorm() / y2, 0.0, 1.0);
  }
  sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

/// Fraction of ||y||^2 inside Range(H), via the unregularised solve.
inline double editability_ratio(const Eigen::Ref<const Mat>& h, const Eigen::Ref<const Vec>& y) {
  if (y.squaredNorm() == 0.0) throw InputError("editability_ratio: undefined for a zero target");
  return solve_edit(h, y, 0.0).eta;
}

/// Copy of model with head_index's weights moved by the solution.
inline Model apply_edit(const Model& model, std::size_t head_index, const EditSolution& sol) {
  Model out = model;
  Head& h = out.head(head_index);
  if (sol.delta_theta.size() != h.weights.size())
    throw InputError("apply_edit: solution length " + std::to_string(sol.delta_theta.size()) +
                     " != hidden_dim " + std::to_string(h.weights.size()));
  h.weights += sol.delta_theta;
  return out;
}

struct EditOutcome {
  EditTarget target;
  EditSolution solution;
  Model edited;
};

using ModeCoefficients = std::vector<std::pair<Eigen::Index, double>>;

/// sum_k alpha_k v_k; rejects modes at or below the rank threshold.
inline Vec mode_combination(const GramSpectrum& spectrum, const ModeCoefficients& coefficients) {
  Vec dir = Vec::Zero(spectrum.dim());
  const auto rank = spectrum.rank(kRankThreshold);
  for (const auto& [k, alpha] : coefficients) {
    if (k < 0 || k >= spectrum.dim())
      throw InputError("mode index " + std::to_string(k) + " out of range");
    if (k >= rank)
      throw DegenerateModeError("mode " + std::to_string(k) + " lies in the numerical null space");
    dir += alpha * spectrum.eigenvectors.col(k);
  }
  return dir;
}

/// Edit toward f + H (sum alpha_k v_k), a target inside the realizable span.
inline EditOutcome in_span_edit(const Model& model, std::size_t head_index, const GramSpectrum& spectrum,
                                const ModeCoefficients& coefficients, const Points& points) {
  model.head(head_index);
  if (spectrum.dim() != static_cast<Eigen::Index>(model.hidden_dim))
    throw InputError("in_span_edit: spectrum dimension does not match the model");
  const Vec dir = mode_combination(spectrum, coefficients);
  const auto h = build_feature_matrix(model, points);
  EditOutcome out;
  out.target = {points, deformation_mode(h.data, dir), "mode combination"};
  out.solution = solve_edit(h.data, out.target.y, 0.0);
  out.edited = apply_edit(model, head_index, out.solution);
  return out;
}

/// Edit toward an arbitrary target field. ridge = nullopt uses default_ridge.
inline EditOutcome external_edit(const Model& model, std::size_t head_index, const FieldFn& target_fn,
                                 const Points& points, std::optional<double> ridge = std::nullopt) {
  const auto h = build_feature_matrix(model, points);
  const Vec current = forward_batch(model, head_index, points);
  EditOutcome out;
  const Vec target = target_fn(points);
  if (target.size() != points.cols()) throw InputError("external_edit: target returned wrong length");
  out.target = {points, target - current, "external field"};
  const double r = ridge ? *ridge : default_ridge(gram_of(h.data));
  out.solution = solve_edit(h.data, out.target.y, r);
  out.edited = apply_edit(model, head_index, out.solution);
  return out;
}

/// Head with weights (1-t) w_a + t w_b and bias blended the same way.
inline Head blended_head(const Model& model, std::size_t a, std::size_t b, double t) {
  const Head& ha = model.head(a);
  const Head& hb = model.head(b);
  return {(1.0 - t) * ha.weights + t * hb.weights, (1.0 - t) * ha.bias + t * hb.bias,
          "blend(" + ha.label + "," + hb.label + "," + std::to_string(t) + ")"};
}

/// Copy of model with the blended head appended as the last head.
inline Model blend_heads(const Model& model, std::size_t a, std::size_t b, double t) {
  Model out = model;
  out.heads.push_back(blended_head(model, a, b, t));
  return out;
}

/// Solve-based counterpart of blend_heads: head a's bias is blended directly
/// and its weights are edited toward (1-t) f_a + t f_b at the points.
inline EditOutcome interpolate_by_solve(const Model& model, std::size_t a, std::size_t b, double t,
                                        const Points& points, double ridge = 0.0) {
  const Head& ha = model.head(a);
  const Head& hb = model.head(b);
  const double bias = (1.0 - t) * ha.bias + t * hb.bias;
  const auto h = build_feature_matrix(model, points);
  const Vec fa = forward_batch(model, a, points);
  const Vec fb = forward_batch(model, b, points);
  EditOutcome out;
  out.target = {points, ((1.0 - t) * fa + t * fb) - fa, "head interpolation"};
  out.target.y.array() -= bias - ha.bias;
  out.solution = solve_edit(h.data, out.target.y, ridge);
  out.edited = apply_edit(model, a, out.solution);
  out.edited.head(a).bias = bias;
  return out;
}

inline FieldFn model_field(std::shared_ptr<const Model> model, std::size_t head) {
  model->head(head);
  return [model = std::move(model), head](const Points& x) { return forward_batch(*model, head, x); };
}

inline FieldFn model_field(const Model& model, std::size_t head) {
  return model_field(std::make_shared<const Model>(model), head);
}

/// Base head field plus the mode-space perturbation (sum alpha_k v_k) . h(x).
inline FieldFn perturbed_field(std::shared_ptr<const Model> model, std::size_t head, Vec direction) {
  model->head(head);
  return [model = std::move(model), head, direction = std::move(direction)](const Points& x) {
    const Mat f = features_batch(*model, x);
    Vec out = f.transpose() * (model->heads[head].weights + direction);
    out.array() += model->heads[head].bias;
    return out;
  };
}

/// Solution coordinates in the eigenbasis as "k,coefficient" rows.
inline void write_solution_csv(std::ostream& os, const GramSpectrum& spectrum, const EditSolution& sol) {
  const Vec coeff = spectrum.eigenvectors.transpose() * sol.delta_theta;
  os << "k,coefficient\n";
  os.precision(17);
  for (Eigen::Index k = 0; k < coeff.size(); ++k) os << k << ',' << coeff[k] << '\n';
}

}  // namespace genie
