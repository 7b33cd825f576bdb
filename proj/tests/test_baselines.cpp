#include "genie/baselines.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace genie;

namespace {

const Box kBox{Vec3::Constant(-0.8), Vec3::Constant(0.8)};

Points random_points(Eigen::Index n, std::uint64_t seed, double half = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  Points x(3, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

VectorFieldFn zero_field() {
  return [](const Points& x) { return Points(Points::Zero(3, x.cols())); };
}

VectorFieldFn radial(double delta) {
  return [delta](const Points& x) { return Points(delta * x.colwise().normalized()); };
}

class TrainedSphere : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainConfig cfg;
    cfg.epochs = 800;
    cfg.learning_rate = 1e-3;
    cfg.seed = 3;
    const auto sdf = shape_field(Sphere{0.5});
    const Points pts = sample(SamplingSpec::volume(3000, 11, kBox), sdf);
    model_ = std::make_shared<const Model>(train(init_model(3, 64, 3, 10.0, 1, 5), Dataset{pts, sdf(pts)}, cfg).model);
  }
  static void TearDownTestSuite() { model_.reset(); }
  static Points band(std::size_t n, std::uint64_t seed) {
    return sample(SamplingSpec::band(0.05, n, seed, kBox), shape_field(Sphere{0.5}));
  }
  static inline std::shared_ptr<const Model> model_;
};

}  // namespace

TEST(MethodNames, RoundTrip) {
  for (auto m : all_methods()) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("adam"), ConfigError);
  EXPECT_EQ(all_methods().size(), 5u);
}

TEST(GdSdfLast, ZeroStepsLeavesModelUnchanged) {
  const Model m = init_model(3, 16, 2, 30.0, 1, 1);
  const Points x = random_points(100, 2);
  const auto run = gd_sdf_last(m, 0, Vec(Vec::Ones(100)), x, 0);
  EXPECT_EQ(run.edited, m);
  EXPECT_EQ(run.loss_history.size(), 1u);
  EXPECT_THROW(gd_sdf_last(m, 0, Vec(Vec::Ones(99)), x, 5), InputError);
  EXPECT_THROW(gd_sdf_last(m, 0, Vec(Vec::Ones(100)), x, -1), InputError);
}

TEST(GdSdfLast, Deterministic) {
  const Model m = init_model(3, 16, 2, 30.0, 1, 1);
  const Points x = random_points(150, 3);
  const auto a = gd_sdf_last(m, 0, shape_field(Sphere{}), x, 50);
  const auto b = gd_sdf_last(m, 0, shape_field(Sphere{}), x, 50);
  EXPECT_EQ(a.edited, b.edited);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.report.steps, 50);
}

TEST(GdSdfLast, ConvergesToClosedForm) {
  const Model m = init_model(3, 8, 2, 30.0, 1, 4);
  const Points x = random_points(200, 5);
  const Vec target = shape_field(Torus{})(x);
  const auto h = build_feature_matrix(m, x);
  const Vec f0 = forward_batch(m, 0, x);
  const auto sol = solve_edit(h.data, target - f0, 0.0);
  const double lmax = spectrum_of(h).eigenvalues[0];
  const double lr = 0.9 * 200.0 / (2.0 * lmax);
  const auto run = gd_sdf_last(m, 0, target, x, 20000, lr);
  const Vec gd_field = forward_batch(run.edited, 0, x);
  EXPECT_LE((gd_field - (f0 + sol.realized)).norm() / std::sqrt(200.0), 1e-4);
}

TEST(GdSdfLast, DivergenceIsReported) {
  const Model m = init_model(3, 16, 2, 30.0, 1, 1);
  const Points x = random_points(100, 2);
  const auto run = gd_sdf_last(m, 0, Vec(Vec::Ones(100)), x, 400, 1e6);
  EXPECT_TRUE(run.report.diverged);
  EXPECT_FALSE(std::isfinite(run.report.final_loss));
}

TEST_F(TrainedSphere, GdSdfLossNonIncreasingAtDefaultRate) {
  const Points x = sample(SamplingSpec::volume(2000, 21, kBox), shape_field(Sphere{0.5}));
  const auto run = gd_sdf_last(*model_, 0, shape_field(Sphere{0.55}), x);
  ASSERT_EQ(run.loss_history.size(), 401u);
  for (std::size_t i = 1; i < run.loss_history.size(); ++i)
    EXPECT_LE(run.loss_history[i], run.loss_history[i - 1] * (1.0 + 1e-12)) << i;
  EXPECT_LT(run.loss_history.back(), 0.1 * run.loss_history.front());
}

TEST_F(TrainedSphere, LinearizedTargetsAreUniform) {
  const Points x = band(500, 7);
  const double delta = 0.02;
  // V = -delta * n / |grad f| so -grad f . V = delta on a unit-gradient field.
  const Points grad = spatial_gradient_fd(*model_, 0, x);
  const VectorFieldFn v = [&](const Points& p) {
    Points out(3, p.cols());
    for (Eigen::Index i = 0; i < p.cols(); ++i) out.col(i) = -delta * grad.col(i) / grad.col(i).squaredNorm();
    return out;
  };
  const auto lin = detail::linearized_targets(*model_, 0, v, x);
  EXPECT_EQ(lin.dropped, 0u);
  EXPECT_LE((lin.y.array() - delta).abs().maxCoeff(), 1e-12);

  const auto analytic = detail::linearized_targets(*model_, 0, radial(-delta), x);
  const double rms = std::sqrt((analytic.y.array() - delta).square().mean());
  EXPECT_LE(rms, 0.05 * delta);
}

TEST_F(TrainedSphere, ZeroDisplacementIsZeroEdit) {
  const Points x = band(400, 8);
  const auto run = bs_linearized_last(*model_, 0, zero_field(), x);
  EXPECT_LE((run.edited.heads[0].weights - model_->heads[0].weights).norm(), 1e-15);
  EXPECT_EQ(run.report.steps, 1);
  const auto gd = gd_bs(*model_, 0, true, zero_field(), x, 20);
  double drift = (gd.edited.heads[0].weights - model_->heads[0].weights).cwiseAbs().maxCoeff();
  for (std::size_t l = 0; l < model_->backbone.size(); ++l)
    drift = std::max(drift, (gd.edited.backbone[l].weights - model_->backbone[l].weights).cwiseAbs().maxCoeff());
  EXPECT_LE(drift, 1e-12);
}

TEST_F(TrainedSphere, BsLinearizedGrowsSphere) {
  const Points x = band(3000, 9);
  const auto run = bs_linearized_last(*model_, 0, radial(0.05), x);
  const Mesh edited = marching_cubes(model_field(run.edited, 0), kBox, 64);
  const Mesh target = marching_cubes(shape_field(Sphere{0.55}), kBox, 64);
  const auto m = mesh_metrics(edited, target, kDefaultMetricSamples, 1);
  EXPECT_LE(m.hd, 0.02);
}

TEST_F(TrainedSphere, GdBsLastZeroRateAndDescent) {
  const Points x = band(800, 10);
  const auto frozen = gd_bs(*model_, 0, false, radial(0.05), x, 30, 0.0);
  EXPECT_EQ(frozen.edited, *model_);
  const auto frozen_all = gd_bs(*model_, 0, true, radial(0.05), x, 5, 0.0);
  EXPECT_EQ(frozen_all.edited, *model_);
  const auto run = gd_bs(*model_, 0, false, radial(0.05), x, 100);
  EXPECT_FALSE(run.report.diverged);
  EXPECT_LT(run.loss_history.back(), run.loss_history.front());
  EXPECT_EQ(run.report.method, Method::GdBsLast);
}

TEST_F(TrainedSphere, ZeroEditSuite) {
  EditTask task;
  task.name = "identity";
  task.seed = 4;
  task.model = model_;
  task.target_field = model_field(model_, 0);
  task.displacement = zero_field();
  task.volume_points = sample(SamplingSpec::volume(1500, 12, kBox), shape_field(Sphere{0.5}));
  task.band_points = band(800, 13);
  task.target_mesh = marching_cubes(model_field(model_, 0), kBox, 48);
  ComparisonOptions opt;
  opt.gd_steps = 20;
  opt.mesh_resolution = 48;
  opt.metric_samples = 20000;
  opt.bounds = kBox;
  const auto rows = run_comparison({task}, all_methods(), opt);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_LE(r.cd, 1e-4) << to_string(r.method);
    EXPECT_LE(r.hd, 0.03) << to_string(r.method);
    EXPECT_EQ(r.task, "identity");
  }
  EXPECT_EQ(rows[0].steps, 1);
}

TEST_F(TrainedSphere, FailingTaskBecomesNanRow) {
  EditTask task;
  task.name = "broken";
  task.model = model_;
  task.target_field = [](const Points&) { return Vec(Vec::Zero(3)); };
  task.displacement = [](const Points&) { return Points(3, 1); };
  task.volume_points = band(100, 1);
  task.band_points = band(100, 2);
  const auto rows = run_comparison({task}, {Method::Genie, Method::BsLinearizedLast});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isnan(r.cd));
    EXPECT_TRUE(std::isnan(r.wall_time));
  }
}

TEST(ComparisonCsv, HeaderAndAverages) {
  BaselineReport a, b;
  a.method = b.method = Method::GdSdfLast;
  a.task = "t0";
  b.task = "t1";
  a.cd = 1.0;
  b.cd = 3.0;
  a.steps = b.steps = 400;
  const auto avg = average_by_method({a, b});
  ASSERT_EQ(avg.size(), 1u);
  EXPECT_EQ(avg[0].cd, 2.0);
  std::ostringstream os;
  write_comparison_csv(os, avg);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "method,task,seed,time_s,cd,hd,steps");
  EXPECT_NE(os.str().find("gd-sdf-last,mean,0,0,2,0,400"), std::string::npos);
}
