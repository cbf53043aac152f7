#pragma once

// Limiting spectral density on a mesh: support detection, curve evaluation
// and mesh integration of test functions against the curve.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "common.hpp"
#include "measures.hpp"
#include "stieltjes.hpp"

namespace flss {

struct DensityConfig {
  int m = 10000;           // mesh subdivisions (mesh has m + 1 points)
  double epsilon = 1e-3;   // imaginary offset for curve evaluation
  std::optional<std::pair<double, double>> support_hint{};
  SolverConfig solver{};

  // support detection knobs
  double probe_epsilon = 1e-4;  // offset for edge probing
  double far_floor = 1e-8;      // below this the point counts as outside
  int bisect_iters = 48;

  void validate() const {
    if (m < 2) throw config_error("density mesh m must be >= 2");
    if (!(epsilon > 0.0)) throw config_error("density epsilon must be > 0");
    if (!(probe_epsilon > 0.0)) throw config_error("probe epsilon must be > 0");
    solver.validate();
  }
};

struct SupportInterval {
  double c1 = 0.0;
  double c2 = 0.0;
};

struct DensityCurve {
  std::vector<double> x;  // mesh points, size m + 1
  std::vector<double> u;  // density values, clipped at 0
  double c1 = 0.0, c2 = 0.0;
  double epsilon = 0.0;
  double y1 = 0.0;
  double point_mass_at_zero = 0.0;  // max(0, 1 - 1/y1), excluded from integrals
  double mass = 0.0;                // left-rule mass of the curve
  bool edge_ok = false;             // u <= 1e-3 at both mesh endpoints
  double min_raw = 0.0;             // most negative raw value before clipping
  AspectRatios ratios_used{1.0, 0.5};
};

namespace detail {

// Continuous-part density at x + i*eps. The companion transform carries a
// known point mass at the origin whose Poisson tail is removed before
// scaling; for y1 > 1 that mass cancels inside the companion and the raw
// value is already the continuous part.
inline double continuous_density(const SpectralMeasure& H, const AspectRatios& r,
                                 double x, double eps, const SolverConfig& scfg,
                                 cplx* warm = nullptr) {
  SolverConfig cfg = scfg;
  if (warm && *warm != cplx(0.0)) cfg.warm_start = *warm;
  cplx z(x, eps);
  StieltjesTriple t = solve_m0(H, r, z, cfg);
  if (warm) *warm = t.m0;
  double atom = std::max(0.0, 1.0 - r.y1);
  cplx compensated = t.m_under + atom / z;
  return compensated.imag() / (std::numbers::pi * r.y1);
}

}  // namespace detail

// Locates the support [c1, c2] of the continuous part of the limit law.
// Strategy: bracket from the population extremes scaled by the closed-form
// single-atom edges, widened by 50%; classify points by the offset-doubling
// ratio (off support the smoothed density scales linearly with the offset,
// on support it is offset-stable); bisect the transition from each end.
inline SupportInterval detect_support(const SpectralMeasure& H, const AspectRatios& r,
                                      const DensityConfig& cfg = {}) {
  cfg.validate();
  const double h = std::sqrt(r.h_sq());
  const double a_I = std::pow((1.0 - h) / (1.0 - r.y2), 2.0);
  const double b_I = std::pow((1.0 + h) / (1.0 - r.y2), 2.0);

  double lo, hi;
  if (cfg.support_hint) {
    lo = cfg.support_hint->first;
    hi = cfg.support_hint->second;
    if (!(lo > 0.0) || !(hi > lo)) throw config_error("support_hint must satisfy 0 < lo < hi");
  } else {
    lo = std::max(H.min_value() * a_I / 1.5, 1e-10);
    hi = H.max_value() * b_I * 1.5;
  }

  auto classify_outside = [&](double x) {
    cplx w1{}, w2{};
    double u1 = detail::continuous_density(H, r, x, cfg.probe_epsilon, cfg.solver, &w1);
    if (std::abs(u1) < cfg.far_floor) return true;
    double u2 = detail::continuous_density(H, r, x, 2.0 * cfg.probe_epsilon, cfg.solver, &w2);
    if (u1 <= 0.0) return true;
    return u2 / u1 >= 1.5;
  };

  if (!classify_outside(lo) || !classify_outside(hi)) {
    std::ostringstream os;
    os << "support appears to reach the probe bracket [" << lo << ", " << hi
       << "]; pass support_hint to override";
    throw numeric_error("support", os.str());
  }

  // coarse scan for an interior point
  int inner_idx = -1;
  const int scan_n = 64;
  std::vector<double> scan(scan_n);
  for (int i = 0; i < scan_n; ++i) {
    scan[i] = lo + (hi - lo) * (i + 0.5) / scan_n;
    if (inner_idx < 0 && !classify_outside(scan[i])) inner_idx = i;
  }
  if (inner_idx < 0) {
    // refine scan once before giving up
    const int fine_n = 512;
    for (int i = 0; i < fine_n && inner_idx < 0; ++i) {
      double x = lo + (hi - lo) * (i + 0.5) / fine_n;
      if (!classify_outside(x)) {
        inner_idx = 0;
        scan.assign(1, x);
      }
    }
    if (inner_idx < 0)
      throw numeric_error("support", "no spectral mass found inside the probe bracket");
  } else {
    scan.assign(1, scan[inner_idx]);
  }
  double x_in = scan[0];
  // highest interior point from the original scan for the right edge
  double x_in_hi = x_in;
  for (int i = scan_n - 1; i >= 0; --i) {
    double x = lo + (hi - lo) * (i + 0.5) / scan_n;
    if (x <= x_in) break;
    if (!classify_outside(x)) {
      x_in_hi = x;
      break;
    }
  }

  double a_out = lo, a_in = x_in;
  for (int it = 0; it < cfg.bisect_iters && (a_in - a_out) > 1e-12 * (1.0 + a_in); ++it) {
    double mid = 0.5 * (a_out + a_in);
    if (classify_outside(mid))
      a_out = mid;
    else
      a_in = mid;
  }
  double b_in = x_in_hi, b_out = hi;
  for (int it = 0; it < cfg.bisect_iters && (b_out - b_in) > 1e-12 * (1.0 + b_out); ++it) {
    double mid = 0.5 * (b_in + b_out);
    if (classify_outside(mid))
      b_out = mid;
    else
      b_in = mid;
  }
  // outer endpoints: conservative, contains the transition zone
  return SupportInterval{a_out, b_out};
}

// Evaluates the density curve on the uniform mesh x_j = c1 + (c2-c1) j / m,
// j = 0..m, at offset epsilon, with warm-started continuation along the mesh.
inline DensityCurve density_on_mesh(const SpectralMeasure& H, const AspectRatios& r,
                                    const SupportInterval& sup, const DensityConfig& cfg = {}) {
  cfg.validate();
  if (!(sup.c2 > sup.c1)) throw config_error("support interval must have c2 > c1");

  DensityCurve curve;
  curve.c1 = sup.c1;
  curve.c2 = sup.c2;
  curve.epsilon = cfg.epsilon;
  curve.y1 = r.y1;
  curve.point_mass_at_zero = std::max(0.0, 1.0 - 1.0 / r.y1);
  curve.ratios_used = r;
  curve.x.resize(cfg.m + 1);
  curve.u.resize(cfg.m + 1);

  cplx warm{};
  double min_raw = 0.0;
  for (int j = 0; j <= cfg.m; ++j) {
    double x = sup.c1 + (sup.c2 - sup.c1) * double(j) / cfg.m;
    curve.x[j] = x;
    double uj;
    try {
      uj = detail::continuous_density(H, r, x, cfg.epsilon, cfg.solver, &warm);
    } catch (const numeric_error&) {
      warm = cplx(0.0);
      try {
        uj = detail::continuous_density(H, r, x, cfg.epsilon, cfg.solver, &warm);
      } catch (const numeric_error&) {
        std::ostringstream os;
        os << "density evaluation failed at mesh point x = " << x;
        throw numeric_error("density", os.str());
      }
    }
    min_raw = std::min(min_raw, uj);
    if (uj < -1e-8) {
      std::ostringstream os;
      os << "negative density " << uj << " at x = " << x;
      throw numeric_error("density", os.str());
    }
    curve.u[j] = std::max(0.0, uj);
  }
  curve.min_raw = min_raw;

  double dx = (sup.c2 - sup.c1) / cfg.m;
  kahan_sum mass;
  for (int j = 1; j <= cfg.m; ++j) mass.add(curve.u[j] * dx);
  curve.mass = mass.value();

  double expected = std::min(1.0, 1.0 / r.y1);
  if (std::abs(curve.mass - expected) > 0.02) {
    std::ostringstream os;
    os << "curve mass " << curve.mass << " deviates from " << expected
       << " by more than 0.02; check support or epsilon";
    throw numeric_error("density", os.str());
  }
  curve.edge_ok = curve.u.front() <= 1e-3 && curve.u.back() <= 1e-3;
  return curve;
}

enum class QuadRule { LeftEndpoint, Trapezoid };

// Mesh integral of f against the curve: ((c2-c1)/m) * Sum_{j=1..m} f(x_j) u_j
// by default; trapezoid variant behind a flag. The point mass at zero is
// never included.
inline double integrate_functional(const SpectralFunctional& f, const DensityCurve& curve,
                                   QuadRule rule = QuadRule::LeftEndpoint) {
  const std::size_t m = curve.x.size() - 1;
  const double dx = (curve.c2 - curve.c1) / double(m);
  if (curve.c1 < f.real_domain_min())
    throw config_error("functional undefined on part of the density mesh");
  kahan_sum s;
  if (rule == QuadRule::LeftEndpoint) {
    for (std::size_t j = 1; j <= m; ++j) s.add(f(curve.x[j]) * curve.u[j] * dx);
  } else {
    for (std::size_t j = 0; j <= m; ++j) {
      double wgt = (j == 0 || j == m) ? 0.5 : 1.0;
      s.add(wgt * f(curve.x[j]) * curve.u[j] * dx);
    }
  }
  return s.value();
}

}  // namespace flss
