#pragma once

// Comparison methods for last-layer editing: iterative gradient descent on SDF
// residuals, linearised boundary-sensitivity targets solved in closed form or
// by gradient descent (head only or every parameter), and a timing harness.

#include "genie/edit.hpp"
#include "genie/mesher.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace genie {

enum class Method { Genie, BsLinearizedLast, GdSdfLast, GdBsLast, GdBsAll };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Genie: return "genie";
    case Method::BsLinearizedLast: return "bs-l-last";
    case Method::GdSdfLast: return "gd-sdf-last";
    case Method::GdBsLast: return "gd-bs-last";
    case Method::GdBsAll: return "gd-bs-all";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::Genie, Method::BsLinearizedLast, Method::GdSdfLast, Method::GdBsLast, Method::GdBsAll})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::Genie, Method::BsLinearizedLast, Method::GdSdfLast,
                                     Method::GdBsLast, Method::GdBsAll};
  return m;
}

struct BaselineReport {
  Method method = Method::Genie;
  std::string task;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  double cd = 0.0;
  double hd = 0.0;
  std::int64_t steps = 0;
  double final_loss = 0.0;
  bool diverged = false;
  std::size_t dropped_samples = 0;
};

struct BaselineRun {
  Model edited;
  BaselineReport report;
  std::vector<double> loss_history;  // objective before each step, then final
};

/// Displacement per point: returns a 3 x N matrix.
using VectorFieldFn = std::function<Points(const Points&)>;

// Learning rates from a coarse grid {1e-4 .. 1e1} x {1, 3} on the bump
// suite, picking for each method the rate with the lowest final value of its
// own objective after 400 steps. The head-only objectives are quadratic with
// curvature 2 lambda_max / N, so larger rates diverge.
inline constexpr double kGdSdfLastLr = 0.03;
inline constexpr double kGdBsLastLr = 0.03;
inline constexpr double kGdBsAllLr = 0.01;
inline constexpr std::int64_t kDefaultGdSteps = 400;
inline constexpr double kFdStep = 1e-3;

/// Central-difference spatial gradient of a head's field, one column per point.
inline Points spatial_gradient_fd(const Model& model, std::size_t head, const Points& x, double step = kFdStep) {
  Points g(3, x.cols());
  for (int a = 0; a < 3; ++a) {
    Points xp = x, xm = x;
    xp.row(a).array() += step;
    xm.row(a).array() -= step;
    g.row(a) = ((forward_batch(model, head, xp) - forward_batch(model, head, xm)) / (2.0 * step)).transpose();
  }
  return g;
}

namespace detail {

/// Linearised level-set target -grad f . V, dropping points with |grad f| < 1e-6.
struct LinearizedTargets {
  Points points;
  Vec y;
  std::size_t dropped = 0;
};

inline LinearizedTargets linearized_targets(const Model& model, std::size_t head, const VectorFieldFn& displacement,
                                            const Points& x) {
  const Points grad = spatial_gradient_fd(model, head, x);
  const Points v = displacement(x);
  if (v.cols() != x.cols()) throw InputError("displacement field returned the wrong number of vectors");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    if (grad.col(i).norm() >= 1e-6) keep.push_back(i);
  LinearizedTargets out;
  out.dropped = static_cast<std::size_t>(x.cols()) - keep.size();
  out.points.resize(3, static_cast<Eigen::Index>(keep.size()));
  out.y.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto i = keep[j];
    out.points.col(static_cast<Eigen::Index>(j)) = x.col(i);
    out.y[static_cast<Eigen::Index>(j)] = -grad.col(i).dot(v.col(i));
  }
  return out;
}

/// Plain gradient descent on mean (f_head(x) - target)^2 over head weights.
/// Features are recomputed by a forward pass every step, as an autodiff
/// framework would.
inline BaselineRun gd_head(const Model& model, std::size_t head, const Points& x, const Vec& target,
                           std::int64_t steps, double lr) {
  BaselineRun run;
  run.edited = model;
  Head& h = run.edited.head(head);
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  double loss = std::numeric_limits<double>::quiet_NaN();
  for (std::int64_t s = 0; s <= steps; ++s) {
    const Mat feat = features_batch(run.edited, x);  // D x N
    Vec r = feat.transpose() * h.weights;
    r.array() += h.bias;
    r -= target;
    loss = r.squaredNorm() * inv_n;
    run.loss_history.push_back(loss);
    if (!std::isfinite(loss)) {
      run.report.diverged = true;
      break;
    }
    if (s == steps) break;
    h.weights -= lr * (2.0 * inv_n) * (feat * r);
  }
  run.report.steps = steps;
  run.report.final_loss = loss;
  return run;
}

}  // namespace detail

/// Gradient descent on the SDF regression loss over the head weights.
inline BaselineRun gd_sdf_last(const Model& model, std::size_t head, const Vec& target_values, const Points& x,
                               std::int64_t steps = kDefaultGdSteps, double lr = kGdSdfLastLr) {
  if (steps < 0) throw InputError("gd_sdf_last: steps must be >= 0");
  if (target_values.size() != x.cols()) throw InputError("gd_sdf_last: one target per point required");
  const auto start = std::chrono::steady_clock::now();
  auto run = detail::gd_head(model, head, x, target_values, steps, lr);
  run.report.method = Method::GdSdfLast;
  run.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

inline BaselineRun gd_sdf_last(const Model& model, std::size_t head, const FieldFn& target_fn, const Points& x,
                               std::int64_t steps = kDefaultGdSteps, double lr = kGdSdfLastLr) {
  return gd_sdf_last(model, head, target_fn(x), x, steps, lr);
}

/// Closed-form ridge solve of the head against the linearised targets -grad f . V
/// at near-surface points.
inline BaselineRun bs_linearized_last(const Model& model, std::size_t head, const VectorFieldFn& displacement,
                                      const Points& band_points, std::optional<double> ridge = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  const auto lin = detail::linearized_targets(model, head, displacement, band_points);
  BaselineRun run;
  run.report.method = Method::BsLinearizedLast;
  run.report.steps = 1;
  run.report.dropped_samples = lin.dropped;
  if (lin.y.size() == 0) {
    run.edited = model;
  } else {
    const auto h = build_feature_matrix(model, lin.points);
    const double r = ridge ? *ridge : default_ridge(gram_of(h.data));
    const auto sol = solve_edit(h.data, lin.y, r);
    run.edited = apply_edit(model, head, sol);
    run.report.final_loss = sol.residual.squaredNorm() / static_cast<double>(lin.y.size());
  }
  run.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

/// Gradient descent on mean (f(x) - f0(x) - y_lin)^2 where y_lin = -grad f0 . V,
/// over the head weights (all_parameters = false) or every parameter.
inline BaselineRun gd_bs(const Model& model, std::size_t head, bool all_parameters,
                         const VectorFieldFn& displacement, const Points& band_points,
                         std::int64_t steps = kDefaultGdSteps, std::optional<double> lr = std::nullopt) {
  if (steps < 0) throw InputError("gd_bs: steps must be >= 0");
  const double rate = lr ? *lr : (all_parameters ? kGdBsAllLr : kGdBsLastLr);
  const auto start = std::chrono::steady_clock::now();
  const auto lin = detail::linearized_targets(model, head, displacement, band_points);
  const Vec target = forward_batch(model, head, lin.points) + lin.y;
  BaselineRun run;
  if (!all_parameters) {
    run = detail::gd_head(model, head, lin.points, target, steps, rate);
  } else {
    run.edited = model;
    const std::size_t ids[1] = {head};
    Gradient grad;
    double loss = 0.0;
    for (std::int64_t s = 0; s <= steps; ++s) {
      loss = loss_and_gradient(run.edited, lin.points, target, ids, s == steps ? nullptr : &grad);
      run.loss_history.push_back(loss);
      if (!std::isfinite(loss)) {
        run.report.diverged = true;
        break;
      }
      if (s == steps) break;
      for_each_param(run.edited, grad, [rate](std::span<double> p, std::span<double> g) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= rate * g[i];
      });
    }
    run.report.steps = steps;
    run.report.final_loss = loss;
  }
  run.report.method = all_parameters ? Method::GdBsAll : Method::GdBsLast;
  run.report.dropped_samples = lin.dropped;
  run.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

/// One editing task: a model head, a target shape and the matching normal
/// displacement, with shared sample sets.
struct EditTask {
  std::string name;
  std::uint64_t seed = 0;
  std::shared_ptr<const Model> model;
  std::size_t head = 0;
  FieldFn target_field;           // desired SDF
  VectorFieldFn displacement;     // surface motion realising the target
  Points volume_points;           // for SDF-residual methods
  Points band_points;             // near the current zero level set
  Mesh target_mesh;               // reference surface for CD/HD
};

struct ComparisonOptions {
  std::int64_t gd_steps = kDefaultGdSteps;
  int mesh_resolution = 64;
  std::size_t metric_samples = kDefaultMetricSamples;
  Box bounds{};
};

/// Runs one method on one task; the timed region covers only the edit.
inline BaselineReport run_method(Method method, const EditTask& task, const ComparisonOptions& opt) {
  BaselineRun run;
  const Model& model = *task.model;
  switch (method) {
    case Method::Genie: {
      const Vec target = task.target_field(task.volume_points);
      const auto start = std::chrono::steady_clock::now();
      const FieldFn fixed = [&](const Points&) { return target; };
      const auto out = external_edit(model, task.head, fixed, task.volume_points);
      run.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      run.edited = out.edited;
      run.report.steps = 1;
      run.report.final_loss = out.solution.residual.squaredNorm() / static_cast<double>(target.size());
      break;
    }
    case Method::GdSdfLast:
      run = gd_sdf_last(model, task.head, task.target_field(task.volume_points), task.volume_points, opt.gd_steps);
      break;
    case Method::BsLinearizedLast:
      run = bs_linearized_last(model, task.head, task.displacement, task.band_points);
      break;
    case Method::GdBsLast:
      run = gd_bs(model, task.head, false, task.displacement, task.band_points, opt.gd_steps);
      break;
    case Method::GdBsAll:
      run = gd_bs(model, task.head, true, task.displacement, task.band_points, opt.gd_steps);
      break;
  }
  run.report.method = method;
  run.report.task = task.name;
  run.report.seed = task.seed;
  if (run.report.diverged) {
    run.report.cd = run.report.hd = std::numeric_limits<double>::quiet_NaN();
    return run.report;
  }
  const Mesh mesh = marching_cubes(model_field(run.edited, task.head), opt.bounds, opt.mesh_resolution);
  const auto m = mesh_metrics(mesh, task.target_mesh, opt.metric_samples, task.seed);
  run.report.cd = m.cd;
  run.report.hd = m.hd;
  return run.report;
}

/// Every method on every task. A task/method that throws becomes a NaN row.
inline std::vector<BaselineReport> run_comparison(const std::vector<EditTask>& tasks, const std::vector<Method>& methods,
                                                  const ComparisonOptions& opt = {}) {
  std::vector<BaselineReport> rows;
  for (const auto& task : tasks)
    for (auto m : methods) {
      try {
        rows.push_back(run_method(m, task, opt));
      } catch (const std::exception&) {
        BaselineReport r;
        r.method = m;
        r.task = task.name;
        r.seed = task.seed;
        r.wall_time = r.cd = r.hd = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(r);
      }
    }
  return rows;
}

/// Mean of each method's rows (NaN if any row is NaN).
inline std::vector<BaselineReport> average_by_method(const std::vector<BaselineReport>& rows) {
  std::vector<BaselineReport> out;
  for (auto m : all_methods()) {
    BaselineReport avg;
    avg.method = m;
    avg.task = "mean";
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      avg.wall_time += r.wall_time;
      avg.cd += r.cd;
      avg.hd += r.hd;
      avg.steps = r.steps;
      avg.diverged = avg.diverged || r.diverged;
      ++n;
    }
    if (n == 0) continue;
    avg.wall_time /= static_cast<double>(n);
    avg.cd /= static_cast<double>(n);
    avg.hd /= static_cast<double>(n);
    out.push_back(avg);
  }
  return out;
}

inline void write_comparison_csv(std::ostream& os, const std::vector<BaselineReport>& rows) {
  os << "method,task,seed,time_s,cd,hd,steps\n";
  os.precision(9);
  for (const auto& r : rows)
    os << to_string(r.method) << ',' << r.task << ',' << r.seed << ',' << r.wall_time << ',' << r.cd << ','
       << r.hd << ',' << r.steps << '\n';
}

}  // namespace genie
