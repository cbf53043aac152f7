#pragma once

// Solvers for the coupled transform equations of the limiting Fisher
// spectrum. The primary unknown is m0(z); the companion transform m_under(z)
// and the plain transform m(z) follow by closed formulas. A second,
// independently coded real-split solver and a set of identity cross-checks
// guard the implementation.

#include <cmath>
#include <optional>
#include <sstream>

#include "common.hpp"
#include "measures.hpp"

namespace flss {

struct SolverConfig {
  double tol = 1e-10;
  int max_iter = 200;
  double damping = 1.0;  // step multiplier in (0, 1]
  std::optional<cplx> warm_start{};

  void validate() const {
    if (!(tol > 0.0)) throw config_error("solver tol must be > 0");
    if (max_iter < 1) throw config_error("solver max_iter must be >= 1");
    if (!(damping > 0.0) || damping > 1.0)
      throw config_error("solver damping must lie in (0, 1]");
  }
};

// One solved point: the chain m0 -> m_under -> m at a fixed z.
struct StieltjesTriple {
  cplx z{};
  cplx m0{};
  cplx m_under{};
  cplx m{};
  double residual = 0.0;  // |master(m0) - z| / max(1, |z|)
  int iterations = 0;
};

namespace detail {

// Sum(j) w_j * m0 / (lambda_j + m0)
inline cplx j1_sum(const SpectralMeasure& H, cplx m0) {
  cplx s = 0.0;
  for (const auto& a : H.atoms()) s += a.weight * m0 / (a.value + m0);
  return s;
}

// Sum(j) w_j * m0^2 / (lambda_j + m0)^2
inline cplx j2_sum(const SpectralMeasure& H, cplx m0) {
  cplx s = 0.0;
  for (const auto& a : H.atoms()) {
    cplx q = m0 / (a.value + m0);
    s += a.weight * q * q;
  }
  return s;
}

// Sum(j) w_j * lambda_j * m0^3 / (lambda_j + m0)^3
inline cplx j3t_sum(const SpectralMeasure& H, cplx m0) {
  cplx s = 0.0;
  for (const auto& a : H.atoms()) {
    cplx q = m0 / (a.value + m0);
    s += a.weight * a.value * q * q * q;
  }
  return s;
}

// Master map: phi(m0) should equal z.
inline cplx master_map(const SpectralMeasure& H, const AspectRatios& r, cplx m0) {
  double h2 = r.h_sq();
  cplx den = r.y2 * (-1.0 + r.y2 * j1_sum(H, m0));
  return h2 * m0 / den + (r.y1 / r.y2) * m0;
}

inline cplx master_map_deriv(const SpectralMeasure& H, const AspectRatios& r, cplx m0) {
  double h2 = r.h_sq();
  cplx A = -1.0 + r.y2 * j1_sum(H, m0);
  cplx j1p = 0.0;  // d/dm0 of j1_sum
  for (const auto& a : H.atoms()) {
    cplx d = a.value + m0;
    j1p += a.weight * a.value / (d * d);
  }
  return (h2 / r.y2) * (A - m0 * r.y2 * j1p) / (A * A) + r.y1 / r.y2;
}

inline bool on_wrong_branch(cplx z, cplx m0) {
  if (std::abs(z.imag()) < 1e-12) return false;  // branch undefined on the axis
  return m0.imag() * sign_of(z.imag()) >= 0.0;
}

// Damped Newton iteration on phi(m0) = z from a given start. Returns true on
// convergence (branch not inspected here).
inline bool newton_m0(const SpectralMeasure& H, const AspectRatios& r, cplx z,
                      const SolverConfig& cfg, cplx start, cplx& out, int& iters) {
  const double scale = std::max(1.0, std::abs(z));
  cplx m0 = start;
  cplx F = master_map(H, r, m0) - z;
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (!std::isfinite(F.real()) || !std::isfinite(F.imag())) return false;
    if (std::abs(F) <= cfg.tol * scale) {
      out = m0;
      iters = it;
      return true;
    }
    cplx dphi = master_map_deriv(H, r, m0);
    if (!std::isfinite(dphi.real()) || !std::isfinite(dphi.imag()) || dphi == cplx(0.0))
      return false;
    cplx step = -F / dphi;
    double damp = cfg.damping;
    cplx m0_next = m0 + damp * step;
    cplx F_next = master_map(H, r, m0_next) - z;
    int halvings = 0;
    while ((!std::isfinite(F_next.real()) || !std::isfinite(F_next.imag()) ||
            std::abs(F_next) >= std::abs(F)) &&
           halvings < 30) {
      damp *= 0.5;
      m0_next = m0 + damp * step;
      F_next = master_map(H, r, m0_next) - z;
      ++halvings;
    }
    if (halvings >= 30) return false;
    m0 = m0_next;
    F = F_next;
  }
  if (std::abs(F) <= cfg.tol * scale) {
    out = m0;
    iters = cfg.max_iter;
    return true;
  }
  return false;
}

inline cplx default_m0_start(cplx z) {
  return cplx(0.0, -sign_of(z.imag()) / std::max(1.0, std::abs(z)));
}

}  // namespace detail

// Completes the chain from a solved m0: companion transform and plain
// transform of the limit law.
inline StieltjesTriple complete_triple(const SpectralMeasure& H, const AspectRatios& r,
                                       cplx z, cplx m0, int iters) {
  StieltjesTriple t;
  t.z = z;
  t.m0 = m0;
  cplx s = 0.0;
  for (const auto& a : H.atoms()) s += a.weight / (a.value + m0);
  t.m_under = 1.0 / m0 - r.y2 * s;
  t.m = (t.m_under + (1.0 - r.y1) / z) / r.y1;
  t.residual = std::abs(detail::master_map(H, r, m0) - z) / std::max(1.0, std::abs(z));
  t.iterations = iters;
  return t;
}

// Solves the master equation for m0(z). For Im z != 0 the returned root lies
// on the branch with sign(Im m0) = -sign(Im z); a wrong-branch convergence is
// retried once from the conjugated root, then reported as a numeric error.
// Real z (used by contour corners outside the support) skips the branch rule.
inline StieltjesTriple solve_m0(const SpectralMeasure& H, const AspectRatios& r, cplx z,
                                const SolverConfig& cfg = {}) {
  cfg.validate();
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw config_error("solve_m0: z must be finite");

  auto attempt_at = [&](cplx target, cplx start, cplx& out, int& iters) {
    return detail::newton_m0(H, r, target, cfg, start, out, iters);
  };
  auto attempt = [&](cplx start, cplx& out, int& iters) {
    return attempt_at(z, start, out, iters);
  };

  cplx m0{};
  int iters = 0;
  std::vector<cplx> starts;
  if (cfg.warm_start) starts.push_back(*cfg.warm_start);
  starts.push_back(detail::default_m0_start(z));
  starts.push_back(-z);  // far-field asymptote of the admissible root
  starts.push_back(0.1 * detail::default_m0_start(z));
  starts.push_back(10.0 * detail::default_m0_start(z));
  starts.push_back(cplx(0.0, -sign_of(z.imag())));

  for (std::size_t si = 0; si < starts.size(); ++si) {
    if (!attempt(starts[si], m0, iters)) continue;
    if (!detail::on_wrong_branch(z, m0)) return complete_triple(H, r, z, m0, iters);
    // converged to the mirrored root: restart from its reflection
    cplx m0b{};
    int it2 = 0;
    if (attempt(std::conj(m0), m0b, it2) && !detail::on_wrong_branch(z, m0b))
      return complete_triple(H, r, z, m0b, iters + it2);
  }

  // continuation ladder: solve high above the axis (easy far field), then
  // walk the imaginary part down to the target with warm starts
  {
    double s = z.imag() == 0.0 ? 1.0 : sign_of(z.imag());
    double scale = std::max(1.0, std::abs(z));
    cplx cur{};
    bool have = false;
    int total = 0;
    for (double t = 4.0 * scale; t > std::abs(z.imag()) || !have; t *= 0.2) {
      cplx zt(z.real(), s * t);
      cplx next{};
      int it = 0;
      if (attempt_at(zt, have ? cur : -zt, next, it) && !detail::on_wrong_branch(zt, next)) {
        cur = next;
        have = true;
        total += it;
      }
      if (t < 1e-4 * scale) break;
    }
    if (have) {
      int it = 0;
      if (attempt(cur, m0, it) && !detail::on_wrong_branch(z, m0))
        return complete_triple(H, r, z, m0, total + it);
    }
  }

  std::ostringstream os;
  os << "no admissible root at z = (" << z.real() << ", " << z.imag() << ")";
  throw numeric_error("stieltjes", os.str());
}

// Independently coded solver working on the real/imaginary split of the
// master equation, with a finite-difference Jacobian. Used to cross-check
// solve_m0; shares no iteration code with it.
inline cplx solve_m0_real_split(const SpectralMeasure& H, const AspectRatios& r, cplx z,
                                const SolverConfig& cfg = {}) {
  cfg.validate();
  const double h2 = r.h_sq();
  const double y1 = r.y1, y2 = r.y2;
  const auto& atoms = H.atoms();

  // components of the split map: (u, v) -> (x_z, y_z)
  auto map2 = [&](double u, double v, double& xz, double& yz) {
    double SA = 0.0, SB = 0.0;
    for (const auto& a : atoms) {
      double lam = a.value;
      double den = (lam + u) * (lam + u) + v * v;
      SA += y2 * a.weight * lam * (lam + u) / den;
      SB += y2 * a.weight * lam * v / den;
    }
    double one = 1.0 - y2 + SA;
    double D = y2 * one * one + y2 * SB * SB;
    xz = -(h2 * u * one - h2 * v * SB) / D + y1 * u / y2;
    yz = -(h2 * u * SB + h2 * v * one) / D + y1 * v / y2;
  };

  const double scale = std::max(1.0, std::abs(z));

  // damped FD-Jacobian Newton toward target (xz, yz); true when converged
  auto run = [&](double xz, double yz, double& u, double& v) -> bool {
    double f1, f2;
    map2(u, v, f1, f2);
    f1 -= xz;
    f2 -= yz;
    for (int it = 0; it < cfg.max_iter; ++it) {
      double res = std::hypot(f1, f2);
      if (!std::isfinite(res)) return false;
      if (res <= cfg.tol * scale) return true;

      double step = 1e-7 * std::max(1.0, std::hypot(u, v));
      double a1, a2, b1, b2, c1, c2, d1, d2;
      map2(u + step, v, a1, a2);
      map2(u - step, v, b1, b2);
      map2(u, v + step, c1, c2);
      map2(u, v - step, d1, d2);
      double J11 = (a1 - b1) / (2 * step), J21 = (a2 - b2) / (2 * step);
      double J12 = (c1 - d1) / (2 * step), J22 = (c2 - d2) / (2 * step);
      double det = J11 * J22 - J12 * J21;
      if (det == 0.0 || !std::isfinite(det)) return false;
      double du = -(J22 * f1 - J12 * f2) / det;
      double dv = -(-J21 * f1 + J11 * f2) / det;

      double damp = cfg.damping;
      double un = u + damp * du, vn = v + damp * dv;
      double g1, g2;
      map2(un, vn, g1, g2);
      g1 -= xz;
      g2 -= yz;
      int halvings = 0;
      while ((!std::isfinite(g1) || !std::isfinite(g2) || std::hypot(g1, g2) >= res) &&
             halvings < 30) {
        damp *= 0.5;
        un = u + damp * du;
        vn = v + damp * dv;
        map2(un, vn, g1, g2);
        g1 -= xz;
        g2 -= yz;
        ++halvings;
      }
      if (halvings >= 30) return false;
      u = un;
      v = vn;
      f1 = g1;
      f2 = g2;
    }
    return std::hypot(f1, f2) <= cfg.tol * scale;
  };

  // same branch rule as the complex solver; real z skips it
  auto admissible = [&](double v) {
    return z.imag() == 0.0 || v * sign_of(z.imag()) < 0.0;
  };

  std::vector<cplx> starts;
  if (cfg.warm_start) starts.push_back(*cfg.warm_start);
  starts.push_back(cplx(0.0, -sign_of(z.imag()) / scale));
  starts.push_back(-z);
  starts.push_back(cplx(0.0, -sign_of(z.imag())));
  for (cplx s0 : starts) {
    double u = s0.real(), v = s0.imag();
    if (!run(z.real(), z.imag(), u, v)) continue;
    if (admissible(v)) return cplx(u, v);
    v = -v;  // mirrored root: restart from the reflection
    if (run(z.real(), z.imag(), u, v) && admissible(v)) return cplx(u, v);
  }

  // vertical continuation from the easy far field down to the target
  {
    double sgn = z.imag() == 0.0 ? 1.0 : sign_of(z.imag());
    bool have = false;
    double cu = 0.0, cv = 0.0;
    for (double t = 4.0 * scale; t > std::abs(z.imag()) || !have; t *= 0.2) {
      double u = have ? cu : -z.real(), v = have ? cv : -sgn * t;
      if (run(z.real(), sgn * t, u, v) && v * sgn < 0.0) {
        cu = u;
        cv = v;
        have = true;
      }
      if (t < 1e-4 * scale) break;
    }
    if (have) {
      double u = cu, v = cv;
      if (run(z.real(), z.imag(), u, v) && admissible(v)) return cplx(u, v);
    }
  }

  std::ostringstream os;
  os << "real-split solver found no admissible root at z = (" << z.real() << ", "
     << z.imag() << ")";
  throw numeric_error("stieltjes", os.str());
}

// Solves the one-sample companion equation
//   w = -1/M + y2 * Sum_j w_j / (lambda_j + M)
// for M(w), the companion transform of the weighted-inverse population law.
// For Im w != 0 the admissible root has sign(Im M) = sign(Im w).
inline cplx solve_m_under_y2(const SpectralMeasure& H, double y2, cplx w,
                             const SolverConfig& cfg = {}) {
  cfg.validate();
  if (!(y2 > 0.0) || !(y2 < 1.0)) throw config_error("y2 must lie in (0, 1)");

  auto G = [&](cplx M, cplx wt) {
    cplx s = 0.0;
    for (const auto& a : H.atoms()) s += a.weight / (a.value + M);
    return -1.0 / M + y2 * s - wt;
  };
  auto Gp = [&](cplx M) {
    cplx s = 0.0;
    for (const auto& a : H.atoms()) {
      cplx d = a.value + M;
      s += a.weight / (d * d);
    }
    return 1.0 / (M * M) - y2 * s;
  };
  auto wrong_branch = [&](cplx M, cplx wt) {
    if (std::abs(wt.imag()) < 1e-12) return false;
    return M.imag() * sign_of(wt.imag()) <= 0.0;
  };

  const double scale = std::max(1.0, std::abs(w));
  auto attempt = [&](cplx start, cplx wt, cplx& out) {
    cplx M = start;
    cplx F = G(M, wt);
    for (int it = 0; it < cfg.max_iter; ++it) {
      if (!std::isfinite(F.real()) || !std::isfinite(F.imag())) return false;
      if (std::abs(F) <= cfg.tol * scale) {
        out = M;
        return true;
      }
      cplx dg = Gp(M);
      if (dg == cplx(0.0) || !std::isfinite(dg.real()) || !std::isfinite(dg.imag()))
        return false;
      cplx step = -F / dg;
      double damp = cfg.damping;
      cplx Mn = M + damp * step;
      cplx Fn = G(Mn, wt);
      int halvings = 0;
      while ((!std::isfinite(Fn.real()) || !std::isfinite(Fn.imag()) ||
              std::abs(Fn) >= std::abs(F)) &&
             halvings < 30) {
        damp *= 0.5;
        Mn = M + damp * step;
        Fn = G(Mn, wt);
        ++halvings;
      }
      if (halvings >= 30) return false;
      M = Mn;
      F = Fn;
    }
    if (std::abs(F) <= cfg.tol * scale) {
      out = M;
      return true;
    }
    return false;
  };

  std::vector<cplx> starts;
  if (cfg.warm_start) starts.push_back(*cfg.warm_start);
  starts.push_back(-1.0 / w + cplx(0.0, 0.1 * sign_of(w.imag()) / scale));
  starts.push_back(cplx(0.0, sign_of(w.imag())) / std::max(1.0, std::abs(w)));
  starts.push_back(cplx(0.0, sign_of(w.imag())));
  starts.push_back(-1.0 / w);

  bool branch_retry_used = false;
  cplx M{};
  for (std::size_t si = 0; si < starts.size(); ++si) {
    if (!attempt(starts[si], w, M)) continue;
    if (!wrong_branch(M, w)) return M;
    if (branch_retry_used) break;
    branch_retry_used = true;
    cplx M2{};
    if (attempt(std::conj(M), w, M2) && !wrong_branch(M2, w)) return M2;
  }

  // Direct starts can straddle the branch point when w sits near the real
  // axis. Approach w from far above on its vertical line, warm starting each
  // rung from the previous one; the far-field start is unambiguous.
  if (std::abs(w.imag()) > 1e-12) {
    double s = sign_of(w.imag());
    cplx cur{};
    bool have = false;
    for (double t = 4.0 * scale; t > std::abs(w.imag()); t *= 0.2) {
      cplx wt(w.real(), s * t);
      cplx next{};
      if (attempt(have ? cur : -1.0 / wt, wt, next) && !wrong_branch(next, wt)) {
        cur = next;
        have = true;
      }
    }
    if (have && attempt(cur, w, M) && !wrong_branch(M, w)) return M;
  }

  std::ostringstream os;
  os << "no admissible companion root at w = (" << w.real() << ", " << w.imag() << ")";
  throw numeric_error("stieltjes", os.str());
}

// Residuals of internal identities linking the two solvers and the
// derivative structure of the transform chain. All residuals are relative
// (scaled by 1 + |reference|). Finite differences use a central step
// 1e-5 * max(1, |z|) along the real direction.
struct IdentityReport {
  double temp1_lem15 = 0.0;   // m_under^2 / m_under' vs closed ratio form
  double lem14_first = 0.0;   // m0 recovered through the companion solver
  double lem14_second = 0.0;  // derivative relation for m0'
  double lem16 = 0.0;         // derivative relation for the J2 expression
  double max_residual() const {
    return std::max(std::max(temp1_lem15, lem14_first), std::max(lem14_second, lem16));
  }
};

inline IdentityReport check_identities(const SpectralMeasure& H, const AspectRatios& r,
                                       cplx z, const SolverConfig& cfg = {}) {
  if (std::abs(z.imag()) < 1e-6)
    throw config_error("check_identities needs |Im z| >= 1e-6 for stable differencing");
  const double y2 = r.y2;
  const double fd = 1e-5 * std::max(1.0, std::abs(z));

  // differencing divides solver noise by fd and the near-edge Jacobian is
  // small, so the stencil solves need more digits than the default residual
  SolverConfig tight = cfg;
  tight.tol = std::min(cfg.tol, 1e-12);
  StieltjesTriple c = solve_m0(H, r, z, tight);
  SolverConfig warm = tight;
  warm.warm_start = c.m0;
  // seven-point central stencil: near the support edges the transforms have
  // square-root branch points, and lower-order stencils at this step size
  // leave truncation above the identity tolerances on edge-adjacent nodes
  StieltjesTriple cp = solve_m0(H, r, z + fd, warm);
  StieltjesTriple cm = solve_m0(H, r, z - fd, warm);
  StieltjesTriple cp2 = solve_m0(H, r, z + 2.0 * fd, warm);
  StieltjesTriple cm2 = solve_m0(H, r, z - 2.0 * fd, warm);
  StieltjesTriple cp3 = solve_m0(H, r, z + 3.0 * fd, warm);
  StieltjesTriple cm3 = solve_m0(H, r, z - 3.0 * fd, warm);

  auto d7 = [&](cplx fp3, cplx fp2, cplx fp, cplx fm, cplx fm2, cplx fm3) {
    return (45.0 * (fp - fm) - 9.0 * (fp2 - fm2) + (fp3 - fm3)) / (60.0 * fd);
  };
  cplx mu_p = d7(cp3.m_under, cp2.m_under, cp.m_under,
                 cm.m_under, cm2.m_under, cm3.m_under);  // m_under'(z)
  cplx m0_p = d7(cp3.m0, cp2.m0, cp.m0, cm.m0, cm2.m0, cm3.m0);  // m0'(z)

  cplx j1 = detail::j1_sum(H, c.m0);
  cplx j2 = detail::j2_sum(H, c.m0);
  cplx one_m_j2 = 1.0 - y2 * j2;
  double h2 = r.h_sq();
  cplx K = h2 / y2 - (r.y1 / y2) * (1.0 - y2 * j1) * (1.0 - y2 * j1) / one_m_j2;

  IdentityReport rep;
  {
    cplx lhs = c.m_under * c.m_under / mu_p;
    rep.temp1_lem15 = std::abs(lhs - K) / (1.0 + std::abs(K));
  }
  {
    // independent route to m0: solve the companion equation at w = -m_under,
    // express s_{y2}(-1/m_under) through that root and substitute.
    cplx zp = -c.m_under;
    cplx M = solve_m_under_y2(H, y2, zp, cfg);
    cplx s_val = -(zp * zp * M + zp) / y2;  // s_{y2}(1/zp)
    cplx recon = (1.0 / c.m_under) * (1.0 - (y2 / c.m_under) * s_val);
    rep.lem14_first = std::abs(recon - c.m0) / (1.0 + std::abs(c.m0));
  }
  {
    cplx rhs = -mu_p * c.m0 * c.m0 / one_m_j2;
    rep.lem14_second = std::abs(m0_p - rhs) / (1.0 + std::abs(m0_p));
  }
  {
    auto q = [&](const StieltjesTriple& t) { return 1.0 - y2 * detail::j2_sum(H, t.m0); };
    cplx lhs = d7(q(cp3), q(cp2), q(cp), q(cm), q(cm2), q(cm3));
    cplx rhs = 2.0 * mu_p * y2 * detail::j3t_sum(H, c.m0) / one_m_j2;
    rep.lem16 = std::abs(lhs - rhs) / (1.0 + std::abs(rhs));
  }
  return rep;
}

}  // namespace flss
