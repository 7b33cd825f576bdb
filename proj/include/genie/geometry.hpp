#pragma once

// Analytic signed distance fields, analytic deformation fields used as
// multi-head supervision, sampling distributions and SDF point-cloud files.

#include "genie/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace genie {

/// Batched scalar field: one value per column of the input.
using FieldFn = std::function<Vec(const Points&)>;

// ---------------------------------------------------------------------------
// Shapes

struct Sphere {
  double r = 0.5;
};
/// Axis-aligned semi-axes a, b, c along x, y, z.
struct Ellipsoid {
  double a = 0.6, b = 0.4, c = 0.3;
};
/// Ring of major radius R in the xy plane, tube radius r.
struct Torus {
  double R = 0.5, r = 0.2;
};
/// Capped cylinder along z with half-height h.
struct Cylinder {
  double r = 0.35, h = 0.5;
};
/// Thin box: half extents hx, hy in-plane and half-thickness t along z.
struct Sheet {
  double hx = 0.6, hy = 0.6, t = 0.1;
};
/// Smooth-min union of two tori centred at x = +-sep/2.
struct DoubleTorus {
  double R = 0.3, r = 0.1, sep = 0.55, k = 0.05;
};

using Shape = std::variant<Sphere, Ellipsoid, Torus, Cylinder, Sheet, DoubleTorus>;

namespace detail {

inline double torus_sdf(const Vec3& p, double R, double r) {
  const double q = std::hypot(p.x(), p.y()) - R;
  return std::hypot(q, p.z()) - r;
}

inline double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

/// Polynomial smooth minimum; the gradient is a convex blend of the inputs'.
inline double smin(double a, double b, double k) {
  const double h = std::max(k - std::abs(a - b), 0.0) / k;
  return std::min(a, b) - h * h * k * 0.25;
}

// Closest point on an ellipse / ellipsoid by bisection on the Lagrange
// multiplier (D. Eberly, "Distance from a Point to an Ellipse, an Ellipsoid,
// or a Hyperellipsoid"). Semi-axes sorted e0 >= e1 (>= e2), point in the first
// quadrant/octant. Returns the unsigned distance.
inline double ellipse_root(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0.0 ? 0.0 : std::hypot(n0, z1) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 200; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0), b = z1 / (s + 1.0);
    const double v = a * a + b * b - 1.0;
    if (v > 0.0) s0 = s;
    else if (v < 0.0) s1 = s;
    else break;
  }
  return s;
}

inline double ellipse_distance(double e0, double e1, double y0, double y1) {
  if (y1 > 0.0) {
    if (y0 > 0.0) {
      const double z0 = y0 / e0, z1 = y1 / e1, g = z0 * z0 + z1 * z1 - 1.0;
      if (g == 0.0) return 0.0;
      const double r0 = (e0 / e1) * (e0 / e1);
      const double s = ellipse_root(r0, z0, z1, g);
      return std::hypot(r0 * y0 / (s + r0) - y0, y1 / (s + 1.0) - y1);
    }
    return std::abs(y1 - e1);
  }
  const double numer = e0 * y0, denom = e0 * e0 - e1 * e1;
  if (numer < denom) {
    const double xd = numer / denom;
    const double x0 = e0 * xd, x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xd * xd));
    return std::hypot(x0 - y0, x1);
  }
  return std::abs(y0 - e0);
}

inline double ellipsoid_root(double r0, double r1, double z0, double z1, double z2, double g) {
  const double n0 = r0 * z0, n1 = r1 * z1;
  double s0 = z2 - 1.0;
  double s1 = g < 0.0 ? 0.0 : std::sqrt(n0 * n0 + n1 * n1 + z2 * z2) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 200; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0), b = n1 / (s + r1), c = z2 / (s + 1.0);
    const double v = a * a + b * b + c * c - 1.0;
    if (v > 0.0) s0 = s;
    else if (v < 0.0) s1 = s;
    else break;
  }
  return s;
}

inline double ellipsoid_distance(double e0, double e1, double e2, double y0, double y1, double y2) {
  if (y2 > 0.0) {
    if (y1 > 0.0) {
      if (y0 > 0.0) {
        const double z0 = y0 / e0, z1 = y1 / e1, z2 = y2 / e2;
        const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
        if (g == 0.0) return 0.0;
        const double r0 = (e0 / e2) * (e0 / e2), r1 = (e1 / e2) * (e1 / e2);
        const double s = ellipsoid_root(r0, r1, z0, z1, z2, g);
        const Vec3 x(r0 * y0 / (s + r0), r1 * y1 / (s + r1), y2 / (s + 1.0));
        return (x - Vec3(y0, y1, y2)).norm();
      }
      return ellipse_distance(e1, e2, y1, y2);
    }
    if (y0 > 0.0) return ellipse_distance(e0, e2, y0, y2);
    return std::abs(y2 - e2);
  }
  const double d0 = e0 * e0 - e2 * e2, d1 = e1 * e1 - e2 * e2;
  const double n0 = e0 * y0, n1 = e1 * y1;
  if (n0 < d0 && n1 < d1) {
    const double a = n0 / d0, b = n1 / d1, rest = 1.0 - a * a - b * b;
    if (rest > 0.0) return Vec3(e0 * a - y0, e1 * b - y1, e2 * std::sqrt(rest)).norm();
  }
  return ellipse_distance(e0, e1, y0, y1);
}

inline double ellipsoid_sdf(const Vec3& p, const Vec3& axes) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return axes[i] > axes[j]; });
  const Vec3 q = p.cwiseAbs();
  const double d = ellipsoid_distance(axes[order[0]], axes[order[1]], axes[order[2]], q[order[0]], q[order[1]],
                                      q[order[2]]);
  return p.cwiseQuotient(axes).squaredNorm() < 1.0 ? -d : d;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace detail

inline double sdf(const Shape& shape, const Vec3& p) {
  return std::visit(
      detail::overloaded{
          [&](const Sphere& s) { return p.norm() - s.r; },
          [&](const Ellipsoid& e) { return detail::ellipsoid_sdf(p, Vec3(e.a, e.b, e.c)); },
          [&](const Torus& t) { return detail::torus_sdf(p, t.R, t.r); },
          [&](const Cylinder& c) {
            const double dr = std::hypot(p.x(), p.y()) - c.r;
            const double dz = std::abs(p.z()) - c.h;
            return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
          },
          [&](const Sheet& s) { return detail::box_sdf(p, Vec3(s.hx, s.hy, s.t)); },
          [&](const DoubleTorus& d) {
            const Vec3 off(0.5 * d.sep, 0.0, 0.0);
            return detail::smin(detail::torus_sdf(p - off, d.R, d.r),
                                detail::torus_sdf(p + off, d.R, d.r), d.k);
          },
      },
      shape);
}

/// Lipschitz slack per kind: |sdf(x)-sdf(y)| <= (1+delta)|x-y|. Every
/// kind is an exact distance except the double torus, whose smooth-min union
/// keeps the bound because its gradient is a convex blend.
inline double lipschitz_slack(const Shape&) { return 0.0; }

/// Half extent along z, used to scale axial coordinates of deformation modes.
inline double axial_extent(const Shape& shape) {
  return std::visit(detail::overloaded{
                        [](const Sphere& s) { return s.r; },
                        [](const Ellipsoid& e) { return e.c; },
                        [](const Torus& t) { return t.r; },
                        [](const Cylinder& c) { return c.h; },
                        [](const Sheet& s) { return s.hx; },
                        [](const DoubleTorus& d) { return d.r; },
                    },
                    shape);
}

// ---------------------------------------------------------------------------
// Deformation fields. Every kind is bounded by |g| <= 1.

/// Real spherical harmonic of degree l <= 3 on the direction x/|x|,
/// rescaled so that its maximum magnitude on the sphere is 1.
struct SphericalHarmonic {
  int l = 2, m = 0;
};
/// cos(p*phi) * cos(q*psi) over the torus' major angle phi and tube angle psi.
struct TorusTrig {
  int p = 2, q = 1;
};
/// cos(p*phi) * cos(q*pi*z/h) over the angle about z and the axial coordinate.
struct CylinderTrig {
  int p = 2, q = 1;
};
/// g = -1: uniform outward growth.
struct Breathing {};
/// cos(2*phi).
struct Ovalization {};
/// cos(pi*z/(2h)), largest at mid-height.
struct AxialBulge {};
/// cos(p*phi) * sin(q*pi*z/h).
struct Corrugation {
  int p = 3, q = 1;
};
/// sin(q*pi*z/h) * sin(p*phi). Stand-in for a twisting pattern.
struct TwistLike {
  int p = 2, q = 1;
};
/// exp(-(1 - cos angle)/width^2) around direction (theta, phi).
struct Bump {
  double theta = 0.0, phi = 0.0, width = 0.35;
};

using DeformationKind = std::variant<SphericalHarmonic, TorusTrig, CylinderTrig, Breathing,
                                     Ovalization, AxialBulge, Corrugation, TwistLike, Bump>;

struct DeformationField {
  DeformationKind kind;
  double eps = 0.05;
};

namespace detail {

/// Associated Legendre P_l^m(z) with s = sqrt(1 - z^2), no Condon-Shortley phase.
inline double legendre(int l, int m, double z, double s) {
  switch (l * 10 + m) {
    case 0: return 1.0;
    case 10: return z;
    case 11: return s;
    case 20: return 0.5 * (3.0 * z * z - 1.0);
    case 21: return 3.0 * z * s;
    case 22: return 3.0 * s * s;
    case 30: return 0.5 * (5.0 * z * z * z - 3.0 * z);
    case 31: return 1.5 * (5.0 * z * z - 1.0) * s;
    case 32: return 15.0 * z * s * s;
    case 33: return 15.0 * s * s * s;
    default: throw ConfigError("spherical harmonic needs 0 <= |m| <= l <= 3");
  }
}

/// max over z in [-1,1] of |P_l^m(z)|: dense scan then golden-section refinement.
inline double legendre_max(int l, int m) {
  auto f = [&](double t) { return std::abs(legendre(l, m, std::cos(t), std::sin(t))); };
  constexpr int kScan = 4096;
  const double step = std::numbers::pi / kScan;
  int best = 0;
  for (int i = 1; i <= kScan; ++i)
    if (f(i * step) > f(best * step)) best = i;
  double a = std::max(0.0, (best - 1) * step), b = std::min(std::numbers::pi, (best + 1) * step);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double c = b - gr * (b - a), d = a + gr * (b - a);
    if (f(c) > f(d)) b = d; else a = c;
  }
  return std::max(f(0.5 * (a + b)), f(best * step));
}

inline double sh_norm(int l, int m) {
  static const auto table = [] {
    std::map<int, double> t;
    for (int l = 0; l <= 3; ++l)
      for (int m = 0; m <= l; ++m) t[l * 10 + m] = legendre_max(l, m);
    return t;
  }();
  return table.at(l * 10 + m);
}

}  // namespace detail

inline double spherical_harmonic(int l, int m, const Vec3& p) {
  if (l < 0 || l > 3 || std::abs(m) > l)
    throw ConfigError("spherical harmonic needs 0 <= |m| <= l <= 3");
  const double r = p.norm();
  const Vec3 d = r > 0.0 ? Vec3(p / r) : Vec3(0.0, 0.0, 1.0);
  const double z = std::clamp(d.z(), -1.0, 1.0);
  const double s = std::hypot(d.x(), d.y());
  const double phi = std::atan2(d.y(), d.x());
  const int am = std::abs(m);
  const double radial = detail::legendre(l, am, z, s) / detail::sh_norm(l, am);
  if (m > 0) return radial * std::cos(am * phi);
  if (m < 0) return radial * std::sin(am * phi);
  return radial;
}

/// Unscaled deformation g(x) for the given base shape.
inline double deformation(const DeformationKind& kind, const Shape& shape, const Vec3& p) {
  using std::numbers::pi;
  const double phi = std::atan2(p.y(), p.x());
  const double h = axial_extent(shape);
  return std::visit(
      detail::overloaded{
          [&](const SphericalHarmonic& s) { return spherical_harmonic(s.l, s.m, p); },
          [&](const TorusTrig& t) {
            double major = 0.5;
            if (const auto* tor = std::get_if<Torus>(&shape)) major = tor->R;
            const double psi = std::atan2(p.z(), std::hypot(p.x(), p.y()) - major);
            return std::cos(t.p * phi) * std::cos(t.q * psi);
          },
          [&](const CylinderTrig& c) { return std::cos(c.p * phi) * std::cos(c.q * pi * p.z() / h); },
          [&](const Breathing&) { return -1.0; },
          [&](const Ovalization&) { return std::cos(2.0 * phi); },
          [&](const AxialBulge&) { return std::cos(0.5 * pi * p.z() / h); },
          [&](const Corrugation& c) { return std::cos(c.p * phi) * std::sin(c.q * pi * p.z() / h); },
          [&](const TwistLike& t) { return std::sin(t.q * pi * p.z() / h) * std::sin(t.p * phi); },
          [&](const Bump& b) {
            const Vec3 dir(std::sin(b.theta) * std::cos(b.phi), std::sin(b.theta) * std::sin(b.phi),
                           std::cos(b.theta));
            const double r = p.norm();
            const double c = r > 0.0 ? dir.dot(p) / r : 1.0;
            return std::exp(-(1.0 - c) / (b.width * b.width));
          },
      },
      kind);
}

/// sdf(x) + eps * g(x): SDF target for a head supervised on a deformation.
inline double deformed_target(const Shape& shape, const DeformationKind& g, double eps,
                              const Vec3& p) {
  const double base = sdf(shape, p);
  return eps == 0.0 ? base : base + eps * deformation(g, shape, p);
}

/// Base SDF plus the sum of several scaled deformations.
inline double deformed_target(const Shape& shape, const std::vector<DeformationField>& fields,
                              const Vec3& p) {
  double v = sdf(shape, p);
  for (const auto& f : fields)
    if (f.eps != 0.0) v += f.eps * deformation(f.kind, shape, p);
  return v;
}

inline FieldFn shape_field(Shape shape) {
  return [shape](const Points& x) {
    Vec out(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = sdf(shape, x.col(i));
    return out;
  };
}

inline FieldFn deformed_field(Shape shape, std::vector<DeformationField> fields) {
  return [shape, fields = std::move(fields)](const Points& x) {
    Vec out(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = deformed_target(shape, fields, x.col(i));
    return out;
  };
}

// ---------------------------------------------------------------------------
// Catalog strings: "torus:R=0.5,r=0.2", "sh:2,0:eps=0.05", "breathing:eps=0.1".

namespace detail {

struct Spec {
  std::string kind;
  std::vector<double> positional;
  std::map<std::string, double> named;
};

inline double to_number(const std::string& s, const std::string& ctx) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("bad number '" + s + "' in '" + ctx + "'");
  return v;
}

inline Spec parse_spec(const std::string& text) {
  Spec spec;
  std::stringstream segs(text);
  std::string seg;
  bool first = true;
  while (std::getline(segs, seg, ':')) {
    if (first) {
      spec.kind = seg;
      first = false;
      continue;
    }
    std::stringstream items(seg);
    std::string item;
    while (std::getline(items, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        spec.positional.push_back(to_number(item, text));
      } else {
        spec.named[item.substr(0, eq)] = to_number(item.substr(eq + 1), text);
      }
    }
  }
  if (spec.kind.empty()) throw ConfigError("empty catalog entry");
  return spec;
}

inline double get(const Spec& s, const std::string& key, double fallback) {
  const auto it = s.named.find(key);
  return it == s.named.end() ? fallback : it->second;
}

inline int integer(double v, const std::string& ctx) {
  if (v != std::round(v)) throw ConfigError("expected an integer in '" + ctx + "'");
  return static_cast<int>(v);
}

inline std::pair<int, int> int_pair(const Spec& s, const std::string& text, const char* ka,
                                    const char* kb, std::pair<int, int> fallback) {
  if (s.positional.size() >= 2)
    return {integer(s.positional[0], text), integer(s.positional[1], text)};
  return {integer(get(s, ka, fallback.first), text), integer(get(s, kb, fallback.second), text)};
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline Shape parse_shape(const std::string& text) {
  const auto s = detail::parse_spec(text);
  auto positive = [&](double v) {
    if (!(v > 0.0)) throw ConfigError("shape parameters must be positive in '" + text + "'");
    return v;
  };
  using detail::get;
  if (s.kind == "sphere") return Sphere{positive(get(s, "r", 0.5))};
  if (s.kind == "ellipsoid")
    return Ellipsoid{positive(get(s, "a", 0.6)), positive(get(s, "b", 0.4)), positive(get(s, "c", 0.3))};
  if (s.kind == "torus") return Torus{positive(get(s, "R", 0.5)), positive(get(s, "r", 0.2))};
  if (s.kind == "cylinder") return Cylinder{positive(get(s, "r", 0.35)), positive(get(s, "h", 0.5))};
  if (s.kind == "sheet")
    return Sheet{positive(get(s, "x", 0.6)), positive(get(s, "y", 0.6)), positive(get(s, "t", 0.1))};
  if (s.kind == "double-torus")
    return DoubleTorus{positive(get(s, "R", 0.3)), positive(get(s, "r", 0.1)),
                       positive(get(s, "sep", 0.55)), positive(get(s, "k", 0.05))};
  throw ConfigError("unknown shape kind '" + s.kind + "'");
}

inline std::string to_string(const Shape& shape) {
  using detail::num;
  return std::visit(
      detail::overloaded{
          [](const Sphere& s) { return "sphere:r=" + num(s.r); },
          [](const Ellipsoid& e) { return "ellipsoid:a=" + num(e.a) + ",b=" + num(e.b) + ",c=" + num(e.c); },
          [](const Torus& t) { return "torus:R=" + num(t.R) + ",r=" + num(t.r); },
          [](const Cylinder& c) { return "cylinder:r=" + num(c.r) + ",h=" + num(c.h); },
          [](const Sheet& s) { return "sheet:x=" + num(s.hx) + ",y=" + num(s.hy) + ",t=" + num(s.t); },
          [](const DoubleTorus& d) {
            return "double-torus:R=" + num(d.R) + ",r=" + num(d.r) + ",sep=" + num(d.sep) + ",k=" + num(d.k);
          },
      },
      shape);
}

inline DeformationField parse_deformation(const std::string& text) {
  const auto s = detail::parse_spec(text);
  DeformationField f;
  f.eps = detail::get(s, "eps", 0.05);
  using detail::get;
  if (s.kind == "sh") {
    const auto [l, m] = detail::int_pair(s, text, "l", "m", {2, 0});
    if (l < 0 || l > 3 || std::abs(m) > l) throw ConfigError("sh needs 0 <= |m| <= l <= 3: '" + text + "'");
    f.kind = SphericalHarmonic{l, m};
  } else if (s.kind == "torus-trig") {
    const auto [p, q] = detail::int_pair(s, text, "p", "q", {2, 1});
    f.kind = TorusTrig{p, q};
  } else if (s.kind == "cylinder-trig") {
    const auto [p, q] = detail::int_pair(s, text, "p", "q", {2, 1});
    f.kind = CylinderTrig{p, q};
  } else if (s.kind == "breathing") {
    f.kind = Breathing{};
  } else if (s.kind == "ovalization") {
    f.kind = Ovalization{};
  } else if (s.kind == "axial-bulge") {
    f.kind = AxialBulge{};
  } else if (s.kind == "corrugation") {
    const auto [p, q] = detail::int_pair(s, text, "p", "q", {3, 1});
    f.kind = Corrugation{p, q};
  } else if (s.kind == "twist") {
    const auto [p, q] = detail::int_pair(s, text, "p", "q", {2, 1});
    f.kind = TwistLike{p, q};
  } else if (s.kind == "bump") {
    const double width = get(s, "width", 0.35);
    if (!(width > 0.0)) throw ConfigError("bump width must be positive: '" + text + "'");
    f.kind = Bump{get(s, "theta", 0.0), get(s, "phi", 0.0), width};
  } else {
    throw ConfigError("unknown deformation kind '" + s.kind + "'");
  }
  return f;
}

inline std::string to_string(const DeformationField& f) {
  using detail::num;
  const std::string body = std::visit(
      detail::overloaded{
          [](const SphericalHarmonic& s) { return "sh:" + std::to_string(s.l) + "," + std::to_string(s.m); },
          [](const TorusTrig& t) { return "torus-trig:" + std::to_string(t.p) + "," + std::to_string(t.q); },
          [](const CylinderTrig& c) { return "cylinder-trig:" + std::to_string(c.p) + "," + std::to_string(c.q); },
          [](const Breathing&) { return std::string("breathing"); },
          [](const Ovalization&) { return std::string("ovalization"); },
          [](const AxialBulge&) { return std::string("axial-bulge"); },
          [](const Corrugation& c) { return "corrugation:" + std::to_string(c.p) + "," + std::to_string(c.q); },
          [](const TwistLike& t) { return "twist:" + std::to_string(t.p) + "," + std::to_string(t.q); },
          [](const Bump& b) {
            return "bump:theta=" + num(b.theta) + ",phi=" + num(b.phi) + ",width=" + num(b.width);
          },
      },
      f.kind);
  return body + ":eps=" + num(f.eps);
}

// ---------------------------------------------------------------------------
// Sampling

struct Box {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
  double volume() const { return (hi - lo).prod(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct SamplingSpec {
  enum class Mode { Volume, Band };
  Mode mode = Mode::Volume;
  double band_width = 0.1;  // |sdf| <= band_width in Band mode
  std::size_t n_points = 20000;
  std::uint64_t seed = 0;
  Box bounds{};
  /// Max proposals before giving up; 0 means 1000 * n_points.
  std::size_t attempt_budget = 0;

  static SamplingSpec volume(std::size_t n, std::uint64_t seed, Box bounds = {}) {
    return {Mode::Volume, 0.0, n, seed, bounds, 0};
  }
  static SamplingSpec band(double width, std::size_t n, std::uint64_t seed, Box bounds = {}) {
    return {Mode::Band, width, n, seed, bounds, 0};
  }
};

struct SampleResult {
  Points points;
  std::size_t proposals = 0;
};

/// Draws spec.n_points points. Band mode rejects uniform proposals in chunks,
/// accepting in proposal order, so the result only depends on the seed.
inline SampleResult sample_with_stats(const SamplingSpec& spec, const FieldFn& sdf_fn) {
  if (spec.mode == SamplingSpec::Mode::Band && !(spec.band_width > 0.0))
    throw InputError("band sampling needs a positive width");
  if ((spec.bounds.hi.array() <= spec.bounds.lo.array()).any())
    throw InputError("sampling bounds are empty");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 lo = spec.bounds.lo, ext = spec.bounds.hi - spec.bounds.lo;
  auto propose = [&](Points& out, Eigen::Index count) {
    out.resize(3, count);
    for (Eigen::Index i = 0; i < count; ++i)
      for (int a = 0; a < 3; ++a) out(a, i) = lo[a] + ext[a] * u(rng);
  };

  SampleResult res;
  const auto n = static_cast<Eigen::Index>(spec.n_points);
  if (spec.mode == SamplingSpec::Mode::Volume) {
    propose(res.points, n);
    res.proposals = spec.n_points;
    return res;
  }

  const std::size_t budget = spec.attempt_budget ? spec.attempt_budget : 1000 * spec.n_points;
  res.points.resize(3, n);
  Eigen::Index filled = 0;
  Points chunk;
  while (filled < n) {
    const auto remaining_budget = static_cast<Eigen::Index>(budget - res.proposals);
    if (remaining_budget <= 0)
      throw SamplingStarved("band sampling exhausted its budget of " + std::to_string(budget) +
                            " proposals with " + std::to_string(filled) + "/" + std::to_string(n) +
                            " points accepted");
    const Eigen::Index count = std::min<Eigen::Index>(std::max<Eigen::Index>(4096, 2 * (n - filled)),
                                                      remaining_budget);
    propose(chunk, count);
    const Vec vals = sdf_fn(chunk);
    for (Eigen::Index i = 0; i < count && filled < n; ++i) {
      ++res.proposals;
      if (std::abs(vals[i]) <= spec.band_width) res.points.col(filled++) = chunk.col(i);
    }
  }
  return res;
}

inline Points sample(const SamplingSpec& spec, const FieldFn& sdf_fn) {
  return sample_with_stats(spec, sdf_fn).points;
}

// ---------------------------------------------------------------------------
// SDF point clouds: plain text, one "x y z sdf" row per line, '#' comments.

struct SdfSample {
  Vec3 point;
  double sdf = 0.0;
  bool operator==(const SdfSample&) const = default;
};

inline std::vector<SdfSample> read_sdf_pointcloud(std::istream& is) {
  std::vector<SdfSample> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, "line " + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (vals.empty()) continue;
    if (vals.size() != 4)
      throw ParseError(lineno, "line " + std::to_string(lineno) + ": expected 4 columns (x y z sdf), got " +
                                   std::to_string(vals.size()));
    rows.push_back({Vec3(vals[0], vals[1], vals[2]), vals[3]});
  }
  return rows;
}

inline std::vector<SdfSample> load_sdf_pointcloud(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open point cloud '" + path + "'");
  try {
    return read_sdf_pointcloud(is);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

inline void write_sdf_pointcloud(std::ostream& os, const std::vector<SdfSample>& rows) {
  os << "# x y z sdf\n";
  for (const auto& r : rows)
    os << detail::num(r.point.x()) << ' ' << detail::num(r.point.y()) << ' ' << detail::num(r.point.z())
       << ' ' << detail::num(r.sdf) << '\n';
}

inline void export_sdf_pointcloud(const std::vector<SdfSample>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_sdf_pointcloud(os, rows);
}

}  // namespace genie
