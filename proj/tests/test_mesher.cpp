#include "genie/mesher.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace genie;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("genie_mesh_" + name)).string();
}

double signed_volume(const Mesh& m) {
  double v = 0.0;
  for (const auto& t : m.triangles)
    v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
  return v;
}

Points random_points(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Points x(3, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

double brute_nearest_sq(const Points& pts, const Vec3& q) {
  return (pts.colwise() - q).colwise().squaredNorm().minCoeff();
}

FieldFn constant(double c) {
  return [c](const Points& x) { return Vec::Constant(x.cols(), c); };
}

}  // namespace

TEST(MarchingCubes, ConstantFieldIsEmpty) {
  EXPECT_TRUE(marching_cubes(constant(1.0), Box{}, 8).empty());
  EXPECT_TRUE(marching_cubes(constant(-1.0), Box{}, 8).vertices.empty());
}

TEST(MarchingCubes, PlaneIsExact) {
  const FieldFn plane = [](const Points& x) { return Vec(x.row(2).transpose().array() - 0.013); };
  const Mesh m = marching_cubes(plane, Box{}, 16);
  ASSERT_FALSE(m.empty());
  for (const auto& v : m.vertices) EXPECT_LE(std::abs(v.z() - 0.013), 1e-6);
}

TEST(MarchingCubes, SphereRadiusEulerAndWinding) {
  const Mesh m = marching_cubes(shape_field(Sphere{0.5}), Box{}, 64);
  const double cell = 2.0 / 64;
  double worst = 0.0;
  for (const auto& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - 0.5));
  EXPECT_LE(worst, 2 * cell);
  EXPECT_EQ(euler_characteristic(m), 2);
  EXPECT_NEAR(signed_volume(m), 4.0 / 3.0 * std::numbers::pi * 0.125, 0.01);
}

TEST(MarchingCubes, TorusEuler) {
  const Mesh m = marching_cubes(shape_field(Torus{0.5, 0.2}), Box{}, 48);
  EXPECT_EQ(euler_characteristic(m), 0);
}

TEST(MarchingCubes, IndicesValidAndNoDegenerates) {
  const Mesh m = marching_cubes(shape_field(Cylinder{}), Box{}, 40);
  for (const auto& t : m.triangles) {
    for (auto i : t) EXPECT_LT(i, m.vertices.size());
    const double area = 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
    EXPECT_GT(area, 1e-12);
  }
}

TEST(MarchingCubes, Deterministic) {
  const auto f = shape_field(Torus{});
  const Mesh a = marching_cubes(f, Box{}, 32), b = marching_cubes(f, Box{}, 32);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.triangles, b.triangles);
}

TEST(MarchingCubes, RejectsLowResolution) {
  EXPECT_THROW(marching_cubes(constant(1.0), Box{}, 1), InputError);
}

TEST(SampleSurface, SingleTriangleBarycentric) {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}};
  const Points p = sample_surface(m, 2000, 4);
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    EXPECT_GE(p(0, i), -1e-15);
    EXPECT_GE(p(1, i), -1e-15);
    EXPECT_LE(p(0, i) + p(1, i), 1.0 + 1e-15);
    EXPECT_EQ(p(2, i), 0.0);
  }
  EXPECT_EQ(sample_surface(m, 50, 8), sample_surface(m, 50, 8));
}

TEST(SampleSurface, AreaWeighting) {
  Mesh m;
  const double s = 3.0;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(5, 0, 0), Vec3(5 + s, 0, 0), Vec3(5, s, 0)};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  const int n = 10000;
  const Points p = sample_surface(m, n, 2);
  const auto big = (p.row(0).array() >= 5.0).count();
  const double expect = 0.9 * n, sigma = std::sqrt(n * 0.9 * 0.1);
  EXPECT_NEAR(static_cast<double>(big), expect, 4 * sigma);
}

TEST(SampleSurface, EmptyMesh) {
  EXPECT_THROW(sample_surface(Mesh{}, 10, 1), InputError);
}

TEST(ChamferHausdorff, Basics) {
  const Points a = random_points(300, 1);
  auto r = chamfer_hausdorff(a, a);
  EXPECT_EQ(r.cd, 0.0);
  EXPECT_EQ(r.hd, 0.0);
  Points p(3, 1), q(3, 1);
  p.col(0) = Vec3::Zero();
  q.col(0) = Vec3(0, 0, 0.1);
  r = chamfer_hausdorff(p, q);
  EXPECT_NEAR(r.cd, 0.01, 1e-15);
  EXPECT_NEAR(r.hd, 0.1, 1e-15);
  EXPECT_THROW(chamfer_hausdorff(a, Points(3, 0)), InputError);
}

TEST(ChamferHausdorff, MatchesBruteForce) {
  const Points a = random_points(700, 3), b = random_points(450, 4);
  double sa = 0, sb = 0, ha = 0, hb = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double d = brute_nearest_sq(b, a.col(i));
    sa += d;
    ha = std::max(ha, d);
  }
  for (Eigen::Index i = 0; i < b.cols(); ++i) {
    const double d = brute_nearest_sq(a, b.col(i));
    sb += d;
    hb = std::max(hb, d);
  }
  const auto r = chamfer_hausdorff(a, b);
  EXPECT_NEAR(r.cd, 0.5 * (sa / 700 + sb / 450), 1e-14);
  EXPECT_NEAR(r.hd, std::sqrt(std::max(ha, hb)), 1e-14);
}

TEST(ChamferHausdorff, SymmetricAndTranslationInvariant) {
  const Points a = random_points(400, 5), b = random_points(300, 6);
  const auto ab = chamfer_hausdorff(a, b), ba = chamfer_hausdorff(b, a);
  EXPECT_EQ(ab.cd, ba.cd);
  EXPECT_EQ(ab.hd, ba.hd);
  const Vec3 shift(0.3, -2.0, 1.5);
  const auto moved = chamfer_hausdorff(a.colwise() + shift, b.colwise() + shift);
  EXPECT_NEAR(moved.cd, ab.cd, 1e-12);
  EXPECT_NEAR(moved.hd, ab.hd, 1e-12);
}

TEST(ChamferHausdorff, HausdorffBoundsLargestTerm) {
  const Points a = random_points(200, 7), b = random_points(250, 8);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) worst = std::max(worst, brute_nearest_sq(b, a.col(i)));
  EXPECT_GE(chamfer_hausdorff(a, b).hd, std::sqrt(worst) - 1e-15);
}

TEST(ChamferHausdorff, ConcentricSpheres) {
  const Mesh a = marching_cubes(shape_field(Sphere{0.5}), Box{}, 64);
  const Mesh b = marching_cubes(shape_field(Sphere{0.55}), Box{}, 64);
  const auto r = mesh_metrics(a, b, 100000, 1);
  EXPECT_NEAR(r.hd, 0.05, 0.005);
  EXPECT_EQ(r.n_samples, 100000u);
}

TEST(MeshMetrics, EmptyCases) {
  const Mesh a = marching_cubes(shape_field(Sphere{0.5}), Box{}, 16);
  EXPECT_EQ(mesh_metrics(Mesh{}, Mesh{}, 100, 1).cd, 0.0);
  EXPECT_TRUE(std::isinf(mesh_metrics(a, Mesh{}, 100, 1).hd));
}

TEST(Export, ObjRoundTrip) {
  const Mesh m = marching_cubes(shape_field(Sphere{0.5}), Box{}, 12);
  const auto path = temp_path("sphere.obj");
  export_mesh(m, path);
  std::ifstream is(path);
  std::string tag;
  std::size_t nv = 0, nf = 0, max_index = 0;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "v") ++nv;
    if (tag == "f") {
      ++nf;
      std::size_t a, b, c;
      ls >> a >> b >> c;
      EXPECT_GE(std::min({a, b, c}), 1u);
      max_index = std::max({max_index, a, b, c});
    }
  }
  EXPECT_EQ(nv, m.vertices.size());
  EXPECT_EQ(nf, m.triangles.size());
  EXPECT_EQ(max_index, nv);
  std::remove(path.c_str());
}

TEST(Export, EmptyObj) {
  const auto path = temp_path("empty.obj");
  export_mesh(Mesh{}, path);
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) EXPECT_TRUE(line.empty() || line[0] == '#');
  std::remove(path.c_str());
  EXPECT_THROW(export_mesh(Mesh{}, "/nonexistent/dir/x.obj"), Error);
}

TEST(Export, FieldGridConstant) {
  const auto path = temp_path("grid.bin");
  const Box b{Vec3(-1, -2, -3), Vec3(1, 2, 3)};
  export_field_grid(constant(0.25), b, 5, path);
  std::ifstream is(path, std::ios::binary);
  const GridFile g = read_field_grid(is);
  EXPECT_EQ(g.nx, 6u);
  EXPECT_EQ(g.ny, 6u);
  EXPECT_EQ(g.nz, 6u);
  EXPECT_EQ(g.lo, b.lo);
  EXPECT_EQ(g.hi, b.hi);
  ASSERT_EQ(g.values.size(), 216u);
  for (float v : g.values) EXPECT_EQ(v, 0.25f);
  std::remove(path.c_str());
}
