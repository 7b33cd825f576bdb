#pragma once

// Analytic external-edit suite: a sphere with an ear-like protrusion and two
// growth trajectories. A three-head model is trained on the base shape and on
// both trajectory endpoints; the edit tasks are the held-out intermediates.

#include "genie/baselines.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace genie {

struct BumpSuiteConfig {
  std::size_t hidden_dim = 64;
  std::size_t depth = 3;
  double omega0 = 10.0;
  std::size_t n_train = 4000;
  std::int64_t epochs = 1000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double radius = 0.5;
  double ear_eps = -0.08;     // static protrusion on the base shape
  double grow_eps = -0.1;     // trajectory A: the ear keeps growing
  double second_eps = -0.1;   // trajectory B: a second ear appears
  std::vector<double> fractions{0.25, 0.5, 0.75};
  std::size_t n_volume = 4000;
  std::size_t n_band = 3000;
  double band_width = 0.05;
  int mesh_resolution = 64;
  Box bounds{Vec3::Constant(-0.8), Vec3::Constant(0.8)};
};

struct BumpSuite {
  std::shared_ptr<const Model> model;
  std::vector<EditTask> tasks;
  double final_train_loss = 0.0;
};

namespace detail {

inline DeformationField ear(double eps) { return {Bump{0.0, 0.0, 0.35}, eps}; }
inline DeformationField second_ear(double eps) { return {Bump{1.1, 0.5 * std::numbers::pi, 0.3}, eps}; }

inline std::vector<DeformationField> base_fields(const BumpSuiteConfig& c) { return {ear(c.ear_eps)}; }

inline std::vector<DeformationField> trajectory(const BumpSuiteConfig& c, char which, double s) {
  auto f = base_fields(c);
  if (which == 'A') f.push_back(ear(s * c.grow_eps));
  else f.push_back(second_ear(s * c.second_eps));
  return f;
}

}  // namespace detail

/// Surface motion that turns field phi into phi + delta to first order:
/// V = -delta * grad phi / |grad phi|^2, gradient by central differences.
inline VectorFieldFn normal_displacement(FieldFn phi, FieldFn delta, double step = kFdStep) {
  return [phi = std::move(phi), delta = std::move(delta), step](const Points& x) {
    Points g(3, x.cols());
    for (int a = 0; a < 3; ++a) {
      Points xp = x, xm = x;
      xp.row(a).array() += step;
      xm.row(a).array() -= step;
      g.row(a) = ((phi(xp) - phi(xm)) / (2.0 * step)).transpose();
    }
    const Vec d = delta(x);
    Points v(3, x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const double n2 = g.col(i).squaredNorm();
      v.col(i) = n2 > 0.0 ? Vec3(-d[i] * g.col(i) / n2) : Vec3::Zero();
    }
    return v;
  };
}

inline Model train_bump_suite_model(const BumpSuiteConfig& c, double* final_loss = nullptr,
                                    const EpochCallback& on_epoch = {}) {
  const Sphere sphere{c.radius};
  const auto base = deformed_field(sphere, detail::base_fields(c));
  const Points pts = sample(SamplingSpec::volume(c.n_train, c.seed, c.bounds), base);
  Mat targets(pts.cols(), 3);
  targets.col(0) = base(pts);
  targets.col(1) = deformed_field(sphere, detail::trajectory(c, 'A', 1.0))(pts);
  targets.col(2) = deformed_field(sphere, detail::trajectory(c, 'B', 1.0))(pts);
  Model m = init_model(3, c.hidden_dim, c.depth, c.omega0, 3, c.seed + 1);
  m.heads[0].label = "base";
  m.heads[1].label = "ear-grow";
  m.heads[2].label = "second-ear";
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.learning_rate = c.learning_rate;
  tc.seed = c.seed + 2;
  tc.n_train_points = c.n_train;
  auto res = train(std::move(m), Dataset{pts, targets}, tc, on_epoch);
  if (final_loss) *final_loss = res.loss_history.empty() ? 0.0 : res.loss_history.back();
  return std::move(res.model);
}

/// Six tasks: trajectories A and B at each held-out fraction, all editing head 0.
inline std::vector<EditTask> bump_suite_tasks(const BumpSuiteConfig& c, std::shared_ptr<const Model> model) {
  if (model->n_heads() < 1) throw InputError("suite model needs a base head");
  const Sphere sphere{c.radius};
  const auto base = deformed_field(sphere, detail::base_fields(c));
  const Points volume = sample(SamplingSpec::volume(c.n_volume, c.seed + 10, c.bounds), base);
  const Points band = sample(SamplingSpec::band(c.band_width, c.n_band, c.seed + 11, c.bounds), base);
  std::vector<EditTask> tasks;
  std::uint64_t k = 0;
  for (char which : {'A', 'B'})
    for (double s : c.fractions) {
      EditTask t;
      t.name = std::string(1, which) + "@" + detail::num(s);
      t.seed = c.seed + 100 + k++;
      t.model = model;
      t.head = 0;
      t.target_field = deformed_field(sphere, detail::trajectory(c, which, s));
      const FieldFn target = t.target_field;
      t.displacement = normal_displacement(base, [base, target](const Points& x) { return Vec(target(x) - base(x)); });
      t.volume_points = volume;
      t.band_points = band;
      t.target_mesh = marching_cubes(t.target_field, c.bounds, c.mesh_resolution);
      tasks.push_back(std::move(t));
    }
  return tasks;
}

inline BumpSuite make_bump_suite(const BumpSuiteConfig& c, const EpochCallback& on_epoch = {}) {
  BumpSuite s;
  s.model = std::make_shared<const Model>(train_bump_suite_model(c, &s.final_train_loss, on_epoch));
  s.tasks = bump_suite_tasks(c, s.model);
  return s;
}

}  // namespace genie
