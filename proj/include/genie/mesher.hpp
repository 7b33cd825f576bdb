#pragma once

// Zero-level-set extraction and point-set distances.

#include "genie/geometry.hpp"
#include "genie/mc_tables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace genie {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  bool operator==(const Mesh&) const = default;
};

/// Uniform grid of (res+1)^3 nodes over bounds, x fastest.
struct FieldGrid {
  Box bounds;
  int res = 0;
  std::vector<double> values;

  int nodes() const { return res + 1; }
  double at(int i, int j, int k) const {
    return values[static_cast<std::size_t>(i) +
                  static_cast<std::size_t>(nodes()) * (static_cast<std::size_t>(j) +
                                                       static_cast<std::size_t>(nodes()) * static_cast<std::size_t>(k))];
  }
  Vec3 node(int i, int j, int k) const {
    const Vec3 step = (bounds.hi - bounds.lo) / res;
    return bounds.lo + Vec3(i * step.x(), j * step.y(), k * step.z());
  }
};

/// Samples field_fn on the grid one z-slice per batch.
inline FieldGrid sample_grid(const FieldFn& field_fn, const Box& bounds, int res) {
  if (res < 2) throw InputError("grid resolution must be >= 2 cells per axis");
  FieldGrid g{bounds, res, {}};
  const int n = res + 1;
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  Points slice(3, static_cast<Eigen::Index>(n) * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) slice.col(i + n * j) = g.node(i, j, k);
    const Vec vals = field_fn(slice);
    if (vals.size() != slice.cols()) throw InputError("field function returned the wrong number of values");
    std::copy(vals.data(), vals.data() + vals.size(), g.values.begin() + static_cast<std::ptrdiff_t>(k) * n * n);
  }
  return g;
}

namespace detail {

inline constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                            {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

/// Drops triangles with repeated indices or area <= 1e-12, then removes
/// vertices no triangle references (preserving order).
inline void compact(Mesh& m) {
  std::vector<std::array<std::uint32_t, 3>> kept;
  kept.reserve(m.triangles.size());
  for (const auto& t : m.triangles) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    const Vec3 e1 = m.vertices[t[1]] - m.vertices[t[0]];
    const Vec3 e2 = m.vertices[t[2]] - m.vertices[t[0]];
    if (0.5 * e1.cross(e2).norm() <= 1e-12) continue;
    kept.push_back(t);
  }
  std::vector<std::uint32_t> remap(m.vertices.size(), std::numeric_limits<std::uint32_t>::max());
  std::vector<Vec3> verts;
  for (auto& t : kept)
    for (auto& v : t) {
      if (remap[v] == std::numeric_limits<std::uint32_t>::max()) {
        remap[v] = static_cast<std::uint32_t>(verts.size());
        verts.push_back(m.vertices[v]);
      }
      v = remap[v];
    }
  m.vertices = std::move(verts);
  m.triangles = std::move(kept);
}

}  // namespace detail

/// Marching cubes on a presampled grid. Vertices on shared grid edges are
/// welded; triangles are wound so normals point toward positive values.
inline Mesh marching_cubes(const FieldGrid& g, double iso = 0.0) {
  Mesh mesh;
  const int n = g.nodes();
  const auto node_index = [n](int i, int j, int k) {
    return static_cast<std::uint64_t>(i) +
           static_cast<std::uint64_t>(n) * (static_cast<std::uint64_t>(j) + static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k));
  };
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  for (int k = 0; k < g.res; ++k)
    for (int j = 0; j < g.res; ++j)
      for (int i = 0; i < g.res; ++i) {
        double val[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          val[c] = g.at(i + detail::kCorner[c][0], j + detail::kCorner[c][1], k + detail::kCorner[c][2]);
          if (val[c] < iso) cube |= 1 << c;
        }
        const auto mask = mc::kEdgeTable[cube];
        if (mask == 0) continue;
        std::uint32_t vid[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mask & (1 << e))) continue;
          int a = detail::kEdgeCorners[e][0], b = detail::kEdgeCorners[e][1];
          // Orient every edge from its lower to its upper node so the
          // interpolated position is identical for all four sharing cells.
          if (detail::kCorner[a][0] + detail::kCorner[a][1] + detail::kCorner[a][2] >
              detail::kCorner[b][0] + detail::kCorner[b][1] + detail::kCorner[b][2])
            std::swap(a, b);
          const int ai = i + detail::kCorner[a][0], aj = j + detail::kCorner[a][1], ak = k + detail::kCorner[a][2];
          const int axis = detail::kCorner[b][0] != detail::kCorner[a][0] ? 0
                           : detail::kCorner[b][1] != detail::kCorner[a][1] ? 1 : 2;
          const std::uint64_t key = node_index(ai, aj, ak) * 3 + static_cast<std::uint64_t>(axis);
          const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
          if (inserted) {
            const double va = val[a], vb = val[b];
            const double t = va == vb ? 0.5 : (iso - va) / (vb - va);
            const Vec3 pa = g.node(ai, aj, ak);
            const Vec3 pb = g.node(i + detail::kCorner[b][0], j + detail::kCorner[b][1], k + detail::kCorner[b][2]);
            mesh.vertices.push_back(pa + t * (pb - pa));
          }
          vid[e] = it->second;
        }
        for (int t = 0; mc::kTriTable[cube][t] != -1; t += 3)
          mesh.triangles.push_back({vid[mc::kTriTable[cube][t]], vid[mc::kTriTable[cube][t + 2]],
                                    vid[mc::kTriTable[cube][t + 1]]});
      }
  detail::compact(mesh);
  return mesh;
}

inline Mesh marching_cubes(const FieldFn& field_fn, const Box& bounds, int res, double iso = 0.0) {
  return marching_cubes(sample_grid(field_fn, bounds, res), iso);
}

/// V - E + F over welded vertices.
inline long euler_characteristic(const Mesh& m) {
  std::vector<std::uint64_t> edges;
  edges.reserve(m.triangles.size() * 3);
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const std::uint64_t a = t[e], b = t[(e + 1) % 3];
      edges.push_back(std::min(a, b) << 32 | std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  const auto n_edges = std::unique(edges.begin(), edges.end()) - edges.begin();
  return static_cast<long>(m.vertices.size()) - static_cast<long>(n_edges) + static_cast<long>(m.triangles.size());
}

/// Area-weighted uniform samples on the mesh surface.
inline Points sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw InputError("sample_surface: mesh is empty");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                       .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]])
                       .norm();
    cumulative[t] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points out(3, static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = u(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(u(rng)), r2 = u(rng);
    out.col(static_cast<Eigen::Index>(s)) = (1.0 - r1) * mesh.vertices[tri[0]] +
                                            r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                                            r1 * r2 * mesh.vertices[tri[2]];
  }
  return out;
}

/// Static kd-tree over a point set for exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const Points& pts)
      : pts_(pts), index_(static_cast<std::size_t>(pts.cols())), axis_(index_.size(), 0), split_(index_.size(), 0.0) {
    std::iota(index_.begin(), index_.end(), 0);
    if (!index_.empty()) build(0, index_.size());
  }

  /// Squared distance from q to the nearest stored point.
  double nearest_sq(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    if (!index_.empty()) search(0, index_.size(), q, best);
    return best;
  }

 private:
  static constexpr std::size_t kLeaf = 8;

  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= kLeaf) return;
    const Points& p = pts_;
    Eigen::Vector3d mn = Vec3::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d mx = -mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(p.col(index_[i]));
      mx = mx.cwiseMax(p.col(index_[i]));
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(index_.begin() + static_cast<std::ptrdiff_t>(lo), index_.begin() + static_cast<std::ptrdiff_t>(mid),
                     index_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](Eigen::Index a, Eigen::Index b) { return p(axis, a) < p(axis, b); });
    // Internal nodes have distinct mids. The pivot itself is moved by the
    // right child's partition, so its coordinate is kept here.
    axis_[mid] = static_cast<std::int8_t>(axis);
    split_[mid] = p(axis, index_[mid]);
    build(lo, mid);
    build(mid, hi);
  }

  void search(std::size_t lo, std::size_t hi, const Vec3& q, double& best) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) best = std::min(best, (pts_.col(index_[i]) - q).squaredNorm());
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const int axis = axis_[mid];
    const double diff = q[axis] - split_[mid];
    if (diff < 0.0) {
      search(lo, mid, q, best);
      if (diff * diff < best) search(mid, hi, q, best);
    } else {
      search(mid, hi, q, best);
      if (diff * diff < best) search(lo, mid, q, best);
    }
  }

  const Points& pts_;
  std::vector<Eigen::Index> index_;
  std::vector<std::int8_t> axis_;
  std::vector<double> split_;
};

struct MetricResult {
  double cd = 0.0;  // mean symmetric squared NN distance
  double hd = 0.0;  // max symmetric NN distance
  std::size_t n_samples = 0;
};

/// Symmetric Chamfer (squared-distance convention) and Hausdorff distances.
inline MetricResult chamfer_hausdorff(const Points& a, const Points& b) {
  if (a.cols() == 0 || b.cols() == 0) throw InputError("chamfer_hausdorff: empty point set");
  const KdTree ta(a), tb(b);
  auto one_side = [](const Points& from, const KdTree& to, double& mean, double& worst) {
    double sum = 0.0;
    worst = 0.0;
    for (Eigen::Index i = 0; i < from.cols(); ++i) {
      const double d2 = to.nearest_sq(from.col(i));
      sum += d2;
      worst = std::max(worst, d2);
    }
    mean = sum / static_cast<double>(from.cols());
  };
  double ma, wa, mb, wb;
  one_side(a, tb, ma, wa);
  one_side(b, ta, mb, wb);
  return {0.5 * (ma + mb), std::sqrt(std::max(wa, wb)), static_cast<std::size_t>(std::max(a.cols(), b.cols()))};
}

inline constexpr std::size_t kDefaultMetricSamples = 100000;

/// Samples both meshes and compares the samples. An empty mesh on either side
/// yields infinite distances.
inline MetricResult mesh_metrics(const Mesh& a, const Mesh& b, std::size_t n = kDefaultMetricSamples,
                                 std::uint64_t seed = 0) {
  if (a.empty() && b.empty()) return {0.0, 0.0, 0};
  if (a.empty() || b.empty())
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 0};
  return chamfer_hausdorff(sample_surface(a, n, seed), sample_surface(b, n, seed + 1));
}

inline void write_obj(std::ostream& os, const Mesh& m) {
  char buf[96];
  for (const auto& v : m.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    os << buf;
  }
  for (const auto& t : m.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void export_mesh(const Mesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_obj(os, m);
  if (!os) throw Error("write failed for '" + path + "'");
}

// Field grid file, little-endian:
//   char[12] "GENIEGRIDv1\0"
//   u32 nx, ny, nz (node counts)
//   f64 lo[3], hi[3]
//   f32 values[nx*ny*nz], x fastest
inline constexpr char kGridMagic[12] = {'G', 'E', 'N', 'I', 'E', 'G', 'R', 'I', 'D', 'v', '1', '\0'};

inline void write_field_grid(std::ostream& os, const FieldGrid& g) {
  os.write(kGridMagic, 12);
  const std::uint32_t n = static_cast<std::uint32_t>(g.nodes());
  for (int a = 0; a < 3; ++a) os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(g.bounds.lo.data()), 24);
  os.write(reinterpret_cast<const char*>(g.bounds.hi.data()), 24);
  std::vector<float> payload(g.values.begin(), g.values.end());
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
}

inline void export_field_grid(const FieldFn& field_fn, const Box& bounds, int res, const std::string& path) {
  const auto g = sample_grid(field_fn, bounds, res);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_field_grid(os, g);
  if (!os) throw Error("write failed for '" + path + "'");
}

struct GridFile {
  std::uint32_t nx = 0, ny = 0, nz = 0;
  Vec3 lo, hi;
  std::vector<float> values;
};

inline GridFile read_field_grid(std::istream& is) {
  char magic[12];
  GridFile g;
  if (!is.read(magic, 12) || std::memcmp(magic, kGridMagic, 12) != 0) throw FormatError("not a field grid file");
  is.read(reinterpret_cast<char*>(&g.nx), 4);
  is.read(reinterpret_cast<char*>(&g.ny), 4);
  is.read(reinterpret_cast<char*>(&g.nz), 4);
  is.read(reinterpret_cast<char*>(g.lo.data()), 24);
  is.read(reinterpret_cast<char*>(g.hi.data()), 24);
  if (!is) throw FormatError("field grid header truncated");
  g.values.resize(static_cast<std::size_t>(g.nx) * g.ny * g.nz);
  is.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * 4));
  if (!is) throw FormatError("field grid payload truncated");
  return g;
}

}  // namespace genie
