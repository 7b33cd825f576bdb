#include "genie/edit.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace genie;

namespace {

Points random_points(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Points x(3, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(SolveEdit, InSpanExactness) {
  std::mt19937_64 rng(1);
  const Mat h = oracle::gaussian(200, 16, rng);
  const Vec w = oracle::gaussian(16, 1, rng);
  const auto sol = solve_edit(h, h * w, 0.0);
  EXPECT_LE(rel(sol.delta_theta, w), 1e-8);
  EXPECT_NEAR(sol.eta, 1.0, 1e-10);
  EXPECT_FALSE(sol.pseudoinverse);
}

TEST(SolveEdit, OrthogonalTargetAnnihilated) {
  std::mt19937_64 rng(2);
  const Mat h = oracle::gaussian(60, 8, rng);
  Vec y = oracle::gaussian(60, 1, rng);
  y -= h * Eigen::ColPivHouseholderQR<Mat>(h).solve(y);
  const auto sol = solve_edit(h, y, 0.0);
  EXPECT_LE(sol.delta_theta.norm(), 1e-10);
  EXPECT_NEAR(sol.eta, 0.0, 1e-12);
  EXPECT_NEAR(editability_ratio(h, y), 0.0, 1e-12);
}

TEST(SolveEdit, MatchesDenseInverseOracle) {
  std::mt19937_64 rng(3);
  const Mat h = oracle::gaussian(500, 32, rng);
  const Vec y = oracle::gaussian(500, 1, rng);
  EXPECT_LE(rel(solve_edit(h, y, 1e-6).delta_theta, oracle::dense_inverse_solve(h, y, 1e-6)), 1e-8);
}

TEST(SolveEdit, NormalEquationOptimalityAndEta) {
  std::mt19937_64 rng(4);
  const Mat h = oracle::gaussian(300, 20, rng);
  const Vec y = oracle::gaussian(300, 1, rng);
  const auto sol = solve_edit(h, y, 0.0);
  EXPECT_LE((h.transpose() * sol.residual).norm(), 1e-8 * (h.transpose() * y).norm());
  EXPECT_NEAR(sol.eta, sol.realized.squaredNorm() / y.squaredNorm(), 1e-14);
  EXPECT_LE((sol.realized + sol.residual - y).norm(), 1e-12 * y.norm());
}

TEST(SolveEdit, RankDeficientUsesMinimumNorm) {
  std::mt19937_64 rng(5);
  const Mat h = oracle::gaussian(80, 5, rng) * oracle::gaussian(5, 12, rng);
  const Vec y = oracle::gaussian(80, 1, rng);
  const auto sol = solve_edit(h, y, 0.0);
  EXPECT_TRUE(sol.pseudoinverse);
  const Vec ref = h.completeOrthogonalDecomposition().solve(y);
  EXPECT_LE(rel(sol.delta_theta, ref), 1e-8);
  EXPECT_LE((h.transpose() * sol.residual).norm(), 1e-8 * (h.transpose() * y).norm());
}

TEST(SolveEdit, ZeroTargetShortCircuit) {
  const Mat h = Mat::Ones(10, 3);
  const auto sol = solve_edit(h, Vec::Zero(10), 0.0);
  EXPECT_EQ(sol.delta_theta, Vec::Zero(3));
  EXPECT_EQ(sol.eta, 1.0);
  EXPECT_THROW(editability_ratio(h, Vec::Zero(10)), InputError);
}

TEST(SolveEdit, Errors) {
  const Mat h = Mat::Identity(4, 4);
  EXPECT_THROW(solve_edit(h, Vec::Ones(3), 0.0), InputError);
  EXPECT_THROW(solve_edit(h, Vec::Ones(4), -1.0), InputError);
  Mat bad = h;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(solve_edit(bad, Vec::Ones(4), 1e-3), NumericalError);
}

TEST(SolveEdit, ProjectionIdempotentAndScaleFree) {
  std::mt19937_64 rng(6);
  const Mat h = oracle::gaussian(100, 10, rng);
  const Vec y = oracle::gaussian(100, 1, rng);
  const auto sol = solve_edit(h, y, 0.0);
  EXPECT_NEAR(solve_edit(h, sol.realized, 0.0).eta, 1.0, 1e-8);
  for (double c : {-3.0, 1e-4, 250.0}) EXPECT_NEAR(editability_ratio(h, c * y), sol.eta, 1e-10);
}

TEST(SolveEdit, RidgeMonotonicity) {
  std::mt19937_64 rng(7);
  const Mat h = oracle::gaussian(50, 12, rng);
  const Vec y = oracle::gaussian(50, 1, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double r : {0.0, 1e-6, 1e-2, 1.0, 100.0}) {
    const double n = solve_edit(h, y, r).delta_theta.norm();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(SolveEdit, DefaultRidge) {
  const Mat g = Vec3(2, 4, 6).asDiagonal();
  EXPECT_DOUBLE_EQ(default_ridge(g), 4e-8);
}

TEST(Editability, GaussianProjectionLaw) {
  double sum = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const Mat h = oracle::gaussian(1000, 128, rng);
    const Vec y = oracle::gaussian(1000, 1, rng);
    sum += editability_ratio(h, y);
  }
  EXPECT_NEAR(sum / 50.0, 0.128, 0.01);
}

TEST(ApplyEdit, FieldChangeMatchesRealized) {
  const Model m = init_model(3, 24, 3, 30.0, 2, 1);
  const Points x = random_points(400, 2);
  const auto h = build_feature_matrix(m, x);
  std::mt19937_64 rng(3);
  const Vec y = 0.01 * oracle::gaussian(400, 1, rng);
  const auto sol = solve_edit(h.data, y, 0.0);
  const Model e = apply_edit(m, 1, sol);
  EXPECT_LE((forward_batch(e, 1, x) - forward_batch(m, 1, x) - sol.realized).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(e.backbone, m.backbone);
  EXPECT_EQ(e.heads[0], m.heads[0]);
  EXPECT_NE(e.heads[1], m.heads[1]);

  EditSolution neg = sol;
  neg.delta_theta = -sol.delta_theta;
  const Model back = apply_edit(e, 1, neg);
  EXPECT_LE((forward_batch(back, 1, x) - forward_batch(m, 1, x)).cwiseAbs().maxCoeff(), 1e-14);

  EditSolution zero;
  zero.delta_theta = Vec::Zero(24);
  EXPECT_EQ(apply_edit(m, 0, zero), m);
  zero.delta_theta = Vec::Zero(5);
  EXPECT_THROW(apply_edit(m, 0, zero), InputError);
}

TEST(InSpanEdit, SingleMode) {
  const Model m = init_model(3, 32, 3, 30.0, 1, 4);
  const Points x = random_points(3000, 5);
  const auto spec = spectrum_of(build_feature_matrix(m, x));
  const auto out = in_span_edit(m, 0, spec, {{0, 0.01}}, x);
  EXPECT_NEAR(out.solution.eta, 1.0, 1e-8);
  EXPECT_LE((out.solution.delta_theta - 0.01 * spec.eigenvectors.col(0)).norm(), 1e-8 * 0.01);
}

TEST(InSpanEdit, ThreeModesHeldOutGrid) {
  const Model m = init_model(3, 32, 3, 30.0, 1, 6);
  const Points x = random_points(4000, 7);
  const auto spec = spectrum_of(build_feature_matrix(m, x));
  const ModeCoefficients c{{1, 0.02}, {5, -0.01}, {12, 0.005}};
  const auto out = in_span_edit(m, 0, spec, c, x);
  EXPECT_NEAR(out.solution.eta, 1.0, 1e-8);
  const Points grid = random_points(5000, 99);
  const auto target = perturbed_field(std::make_shared<const Model>(m), 0, mode_combination(spec, c));
  const Vec diff = forward_batch(out.edited, 0, grid) - target(grid);
  EXPECT_LE(diff.norm() / std::sqrt(5000.0), 1e-6);
}

TEST(InSpanEdit, NullModeRejected) {
  Model m = init_model(3, 8, 2, 30.0, 1, 1);
  m.backbone[1].weights.row(7).setZero();
  m.backbone[1].bias[7] = 0.0;  // feature 7 is identically zero
  const Points x = random_points(500, 1);
  const auto spec = spectrum_of(build_feature_matrix(m, x));
  EXPECT_EQ(spec.rank(), 7);
  EXPECT_THROW(in_span_edit(m, 0, spec, {{7, 0.1}}, x), DegenerateModeError);
  EXPECT_THROW(in_span_edit(m, 0, spec, {{8, 0.1}}, x), InputError);
}

TEST(ExternalEdit, CurrentFieldIsIdentity) {
  const auto m = std::make_shared<const Model>(init_model(3, 16, 2, 30.0, 1, 3));
  const Points x = random_points(300, 4);
  const auto out = external_edit(*m, 0, model_field(m, 0), x);
  EXPECT_EQ(out.solution.eta, 1.0);
  EXPECT_EQ(out.edited, *m);
}

TEST(ExternalEdit, RealizesProjection) {
  const Model m = init_model(3, 16, 2, 30.0, 1, 3);
  const Points x = random_points(500, 4);
  const auto out = external_edit(m, 0, shape_field(Sphere{0.4}), x, 0.0);
  const Vec after = forward_batch(out.edited, 0, x);
  EXPECT_LE((after - forward_batch(m, 0, x) - out.solution.realized).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GT(out.solution.eta, 0.0);
  EXPECT_LT(out.solution.eta, 1.0);
}

TEST(Blend, LinearityAndEndpoints) {
  Model m = init_model(3, 16, 3, 30.0, 2, 8);
  m.heads[1].bias = 0.3;
  const Points x = random_points(1000, 9);
  const Vec fa = forward_batch(m, 0, x), fb = forward_batch(m, 1, x);
  for (double t : {-0.5, 0.0, 0.3, 0.5, 1.0, 1.5}) {
    const Model b = blend_heads(m, 0, 1, t);
    ASSERT_EQ(b.n_heads(), 3u);
    EXPECT_LE((forward_batch(b, 2, x) - ((1 - t) * fa + t * fb)).cwiseAbs().maxCoeff(), 1e-12) << t;
  }
  EXPECT_EQ(forward_batch(blend_heads(m, 0, 1, 0.0), 2, x), fa);
  EXPECT_EQ(forward_batch(blend_heads(m, 0, 1, 1.0), 2, x), fb);
  EXPECT_THROW(blend_heads(m, 0, 2, 0.5), InputError);
}

TEST(Blend, SolveBasedAgreesWithWeightBlend) {
  Model m = init_model(3, 16, 3, 30.0, 2, 10);
  m.heads[1].bias = -0.2;
  const Points x = random_points(2000, 11);
  const Points test = random_points(1000, 12);
  for (double t : {-0.5, 0.3, 1.5}) {
    const auto out = interpolate_by_solve(m, 0, 1, t, x);
    EXPECT_NEAR(out.solution.eta, 1.0, 1e-8);
    const Vec blended = forward_batch(blend_heads(m, 0, 1, t), 2, test);
    EXPECT_LE((forward_batch(out.edited, 0, test) - blended).cwiseAbs().maxCoeff(), 1e-8) << t;
  }
}

TEST(SolutionCsv, EigenbasisCoordinates) {
  const Model m = init_model(3, 4, 2, 30.0, 1, 1);
  const Points x = random_points(100, 1);
  const auto spec = spectrum_of(build_feature_matrix(m, x));
  const auto out = in_span_edit(m, 0, spec, {{1, 0.5}}, x);
  std::ostringstream os;
  write_solution_csv(os, spec, out.solution);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "k,coefficient");
  std::vector<double> coeff;
  while (std::getline(is, line)) coeff.push_back(std::stod(line.substr(line.find(',') + 1)));
  ASSERT_EQ(coeff.size(), 4u);
  EXPECT_NEAR(coeff[1], 0.5, 1e-8);
  EXPECT_NEAR(coeff[0], 0.0, 1e-8);
}
