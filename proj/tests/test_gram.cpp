#include "genie/gram.hpp"

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

void expect_valid_decomposition(const Mat& g, const Vec& vals, const Mat& vecs) {
  const Eigen::Index n = g.rows();
  EXPECT_LE((g - vecs * vals.asDiagonal() * vecs.transpose()).norm(), 1e-8 * g.norm());
  EXPECT_LE((vecs.transpose() * vecs - Mat::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index k = 1; k < n; ++k) EXPECT_GE(vals[k - 1], vals[k]);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index imax = 0;
    vecs.col(k).cwiseAbs().maxCoeff(&imax);
    EXPECT_GT(vecs(imax, k), 0.0);
  }
}

}  // namespace

TEST(FeatureMatrix, SinglePointRow) {
  const Model m = init_model(3, 16, 3, 30.0, 1, 2);
  const Points p = random_points(1, 1);
  const auto h = build_feature_matrix(m, p);
  ASSERT_EQ(h.rows(), 1);
  EXPECT_EQ(Vec(h.data.row(0).transpose()), features(m, p.col(0)));
}

TEST(FeatureMatrix, DeterministicAndZeroModel) {
  Model m = init_model(3, 16, 3, 30.0, 1, 2);
  const Points p = random_points(100, 3);
  EXPECT_EQ(build_feature_matrix(m, p).data, build_feature_matrix(m, p).data);
  for (auto& l : m.backbone) {
    l.weights.setZero();
    l.bias.setZero();
  }
  EXPECT_EQ(build_feature_matrix(m, p).data, Mat::Zero(100, 16));
  EXPECT_THROW(build_feature_matrix(m, Points(3, 0)), InputError);
}

TEST(GramOf, IdentityAndRankOne) {
  EXPECT_EQ(gram_of(Mat::Identity(5, 5)), Mat::Identity(5, 5));
  const Vec h = Vec::LinSpaced(6, -1.0, 2.0);
  const Mat g = gram_of(h.transpose());
  EXPECT_LE((g - h * h.transpose()).norm(), 1e-14);
  EXPECT_NEAR(g.trace(), h.squaredNorm(), 1e-13);
}

TEST(GramOf, MatchesDirectSummation) {
  std::mt19937_64 rng(4);
  const Mat h = oracle::gaussian(100, 8, rng);
  Mat brute = Mat::Zero(8, 8);
  for (Eigen::Index i = 0; i < 100; ++i) brute += h.row(i).transpose() * h.row(i);
  const Mat g = gram_of(h);
  EXPECT_LE((g - brute).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(g, g.transpose());
}

TEST(EigSym, DiagonalExample) {
  const auto [vals, vecs] = eig_sym(Vec3(3, 1, 2).asDiagonal().toDenseMatrix());
  EXPECT_EQ(vals, Vec3(3, 2, 1));
  Mat expect(3, 3);
  expect << 1, 0, 0, 0, 0, 1, 0, 1, 0;
  EXPECT_EQ(vecs, expect);
}

TEST(EigSym, RandomPsdInvariants) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat g = oracle::random_psd(8, 3 + trial % 6, rng);
    const auto [vals, vecs] = eig_sym(g);
    expect_valid_decomposition(g, vals, vecs);
    EXPECT_GE(vals[7], -1e-8 * vals[0]);
  }
}

TEST(EigSym, MatchesBisectionOracleOnSmallMatrices) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    const Mat g = oracle::random_psd(n, n, rng);
    const Vec ref = oracle::bisection_eigenvalues(g);
    const auto [vals, vecs] = eig_sym(g);
    EXPECT_LE((vals - ref).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, ref[0]));
  }
}

TEST(EigSym, ScaledIdentity) {
  const Mat g = 2.5 * Mat::Identity(6, 6);
  const auto [vals, vecs] = eig_sym(g);
  EXPECT_LE((vals.array() - 2.5).abs().maxCoeff(), 1e-14);
  expect_valid_decomposition(g, vals, vecs);
}

TEST(EigSym, Errors) {
  Mat g = Mat::Identity(3, 3);
  g(0, 2) = 0.5;
  EXPECT_THROW(eig_sym(g), InputError);
  EXPECT_THROW(eig_sym(Mat::Zero(2, 3)), InputError);
  g(0, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(eig_sym(g), NumericalError);
  std::mt19937_64 rng(1);
  EigOptions opt;
  opt.max_sweeps = 1;
  EXPECT_THROW(eig_sym(oracle::random_psd(20, 20, rng), opt), NumericalError);
}

TEST(Spectrum, ModeEnergyIdentityOnModelFeatures) {
  const Model m = init_model(3, 32, 3, 30.0, 1, 5);
  const auto h = build_feature_matrix(m, random_points(2000, 6));
  const auto s = spectrum_of(h);
  for (Eigen::Index k = 0; k < s.dim(); ++k) {
    if (s.eigenvalues[k] <= 1e-10 * s.eigenvalues[0]) continue;
    const double energy = deformation_mode(h.data, s.eigenvectors.col(k)).squaredNorm();
    EXPECT_NEAR(energy, s.eigenvalues[k], 1e-8 * s.eigenvalues[k]) << k;
  }
  EXPECT_EQ(deformation_mode(h.data, Vec::Zero(32)), Vec::Zero(2000));
  EXPECT_THROW(deformation_mode(h.data, Vec::Zero(31)), InputError);
}

TEST(Spectrum, RangeConsistency) {
  std::mt19937_64 rng(12);
  const Mat h = oracle::gaussian(50, 10, rng) * oracle::gaussian(10, 16, rng);  // rank 10
  const auto s = spectrum_of(gram_of(h));
  EXPECT_EQ(s.rank(), 10);
  const Vec dtheta = oracle::gaussian(16, 1, rng);
  const Vec df = h * dtheta;
  Mat basis(50, 10);
  for (Eigen::Index k = 0; k < 10; ++k) basis.col(k) = h * s.eigenvectors.col(k) / std::sqrt(s.eigenvalues[k]);
  const Vec resid = df - basis * (basis.transpose() * df);
  EXPECT_LE(resid.norm(), 1e-8 * df.norm());
}

TEST(Spectrum, ScalingLaw) {
  std::mt19937_64 rng(3);
  const Mat h = oracle::gaussian(40, 6, rng);
  const auto a = spectrum_of(gram_of(h));
  const auto b = spectrum_of(gram_of(3.0 * h));
  EXPECT_LE((b.eigenvalues - 9.0 * a.eigenvalues).cwiseAbs().maxCoeff(), 1e-10 * b.eigenvalues[0]);
  EXPECT_LE((b.eigenvectors - a.eigenvectors).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SubspaceSimilarity, Basics) {
  std::mt19937_64 rng(9);
  const auto s = spectrum_of(oracle::random_psd(12, 12, rng));
  const Mat& v = s.eigenvectors;
  EXPECT_NEAR(subspace_similarity(v, v, 4), 1.0, 1e-12);
  EXPECT_NEAR(subspace_similarity(v.leftCols(4), v.rightCols(4), 4), 0.0, 1e-12);
  Mat w = v;
  w.col(0).swap(w.col(2));
  w.col(1) *= -1.0;
  EXPECT_NEAR(subspace_similarity(v, w, 4), subspace_similarity(v, v, 4), 1e-12);
  const Mat q = Eigen::HouseholderQR<Mat>(oracle::gaussian(4, 4, rng)).householderQ();
  Mat rotated = v;
  rotated.leftCols(4) = v.leftCols(4) * q;
  EXPECT_NEAR(subspace_similarity(v, rotated, 4), 1.0, 1e-12);
  const auto t = spectrum_of(oracle::random_psd(12, 12, rng));
  EXPECT_NEAR(subspace_similarity(v, t.eigenvectors, 5), subspace_similarity(t.eigenvectors, v, 5), 1e-14);
  EXPECT_THROW(subspace_similarity(v, v, 13), InputError);
  EXPECT_THROW(subspace_similarity(v, v, 0), InputError);
}

TEST(StabilitySweep, ReferenceAgainstItself) {
  const Model m = init_model(3, 16, 2, 30.0, 1, 1);
  const auto ref = SamplingSpec::volume(3000, 7);
  const auto rows = stability_sweep(m, {{"ref", ref}}, ref, 5, shape_field(Sphere{}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].similarity, 1.0, 1e-12);
  EXPECT_THROW(stability_sweep(m, {{"big", SamplingSpec::volume(4000, 1)}}, ref, 5, shape_field(Sphere{})),
               InputError);
}

TEST(Csv, Headers) {
  std::ostringstream a, b;
  write_spectrum_csv(a, Vec3(3, 2, 1));
  EXPECT_EQ(a.str(), "k,lambda\n0,3\n1,2\n2,1\n");
  write_stability_csv(b, {{"0.05", 0.5, 1.0}});
  EXPECT_EQ(b.str(), "param,similarity\n0.05,0.5\n");
}
