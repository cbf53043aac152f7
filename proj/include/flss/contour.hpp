#pragma once

// Rectangular contour grids around the support, solved transform chains on
// them, and the discrete loop sums giving the asymptotic mean and covariance
// of centered linear spectral statistics. Includes the data-driven estimator
// of the fourth-moment kernel functions needed when beta_x != 0.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "common.hpp"
#include "density.hpp"
#include "measures.hpp"
#include "stieltjes.hpp"

namespace flss {

// The node listing below walks down the left edge, right along the bottom,
// up the right edge and left along the top: counterclockwise. The projection
// signs in the loop sums assume this order.
inline constexpr int kLoopOrientation = +1;

struct ContourConfig {
  double eps = 1e-3;   // horizontal margin beyond [c1, c2]
  double zeta = 1e-3;  // vertical half-height
  int m1 = 1000;       // subdivisions of each vertical edge
  int m2 = 1000;       // subdivisions of each horizontal edge
  SolverConfig solver{};

  void validate() const {
    if (!(eps > 0.0) || !(zeta > 0.0)) throw config_error("contour eps and zeta must be > 0");
    if (m1 < 4 || m2 < 4) throw config_error("contour needs m1, m2 >= 4");
    solver.validate();
  }
};

struct ContourGrid {
  std::vector<cplx> nodes;  // 2*m1 + 2*m2 + 4 nodes, closed loop in listed order
  double c1 = 0.0, c2 = 0.0;
  double eps = 0.0, zeta = 0.0;
  int m1 = 0, m2 = 0;
  int orientation = kLoopOrientation;

  cplx delta(std::size_t j) const { return nodes[(j + 1) % nodes.size()] - nodes[j]; }

  // Closed-loop trapezoid node weight: half the two adjacent steps. Left-endpoint
  // steps break conjugate pairing at the corners and leak an O(step) artifact into
  // the discarded projection; this weighting cancels mirror nodes exactly while
  // leaving the kept projection unchanged to rounding.
  cplx weight(std::size_t j) const {
    return 0.5 * (delta(j) + delta((j + nodes.size() - 1) % nodes.size()));
  }
};

namespace detail {

inline ContourGrid build_one_contour(double c1, double c2, double eps, double zeta,
                                     int m1, int m2) {
  ContourGrid g;
  g.c1 = c1;
  g.c2 = c2;
  g.eps = eps;
  g.zeta = zeta;
  g.m1 = m1;
  g.m2 = m2;
  g.nodes.reserve(2 * m1 + 2 * m2 + 4);
  // lerp lands exactly on the segment endpoints, so consecutive segments
  // repeat each corner node bit for bit
  for (int k = 0; k <= m1; ++k)
    g.nodes.emplace_back(c1 - eps, std::lerp(zeta, -zeta, double(k) / m1));
  for (int j = 0; j <= m2; ++j)
    g.nodes.emplace_back(std::lerp(c1 - eps, c2 + eps, double(j) / m2), -zeta);
  for (int k = 0; k <= m1; ++k)
    g.nodes.emplace_back(c2 + eps, std::lerp(-zeta, zeta, double(k) / m1));
  for (int j = 0; j <= m2; ++j)
    g.nodes.emplace_back(std::lerp(c2 + eps, c1 - eps, double(j) / m2), zeta);
  return g;
}

}  // namespace detail

// Builds the outer grid A1 (margins eps, zeta) and the inner grid A2
// (margins eps/2, zeta/2), both enclosing [c1, c2]. Functionals with a
// logarithmic branch point must stay analytic on and inside the outer
// rectangle, which requires c1 - eps to clear their real domain.
inline std::pair<ContourGrid, ContourGrid> build_contours(
    const SupportInterval& sup, const ContourConfig& cfg,
    const std::vector<SpectralFunctional>& fs = {}) {
  cfg.validate();
  if (!(sup.c2 > sup.c1)) throw config_error("support interval must have c2 > c1");
  for (const auto& f : fs) {
    if (sup.c1 - cfg.eps <= f.real_domain_min()) {
      std::ostringstream os;
      os << "contour touches the branch cut of " << f.name() << ": c1 - eps = "
         << (sup.c1 - cfg.eps) << " does not clear " << f.real_domain_min();
      throw numeric_error("contour", os.str());
    }
  }
  ContourGrid a1 = detail::build_one_contour(sup.c1, sup.c2, cfg.eps, cfg.zeta, cfg.m1, cfg.m2);
  ContourGrid a2 =
      detail::build_one_contour(sup.c1, sup.c2, cfg.eps / 2.0, cfg.zeta / 2.0, cfg.m1, cfg.m2);
  return {a1, a2};
}

// Solves the transform chain on every grid node, warm-starting each node
// from its predecessor, with one cold retry per node.
inline std::vector<StieltjesTriple> solve_on_contour(const SpectralMeasure& H,
                                                     const AspectRatios& r,
                                                     const ContourGrid& grid,
                                                     const SolverConfig& scfg = {}) {
  std::vector<StieltjesTriple> out;
  out.reserve(grid.nodes.size());
  SolverConfig cfg = scfg;
  for (std::size_t j = 0; j < grid.nodes.size(); ++j) {
    try {
      out.push_back(solve_m0(H, r, grid.nodes[j], cfg));
    } catch (const numeric_error&) {
      cfg.warm_start.reset();
      try {
        out.push_back(solve_m0(H, r, grid.nodes[j], cfg));
      } catch (const numeric_error&) {
        std::ostringstream os;
        os << "transform solve failed at contour node " << j << ", z = ("
           << grid.nodes[j].real() << ", " << grid.nodes[j].imag() << ")";
        throw numeric_error("contour", os.str());
      }
    }
    cfg.warm_start = out.back().m0;
  }
  return out;
}

namespace detail {

// log along a closed discrete loop with the phase continued from node to
// node. A wrapped step larger than pi/2 means the grid cannot track the
// argument. A nonzero total winding makes the plain loop integrand
// multivalued; `allow_winding` relaxes that for kernels whose starting-phase
// ambiguity multiplies a closed derivative loop (which sums to zero).
inline std::vector<cplx> unwrapped_log(const std::vector<cplx>& vals, const char* what,
                                       bool allow_winding, int* winding_out = nullptr) {
  std::vector<cplx> out(vals.size());
  if (vals.empty()) return out;
  if (vals[0] == cplx(0.0))
    throw numeric_error("contour", std::string(what) + " hits zero on the grid");
  double theta_prev = std::arg(vals[0]);
  double theta_acc = theta_prev;
  out[0] = cplx(std::log(std::abs(vals[0])), theta_acc);
  for (std::size_t j = 1; j < vals.size(); ++j) {
    if (vals[j] == cplx(0.0))
      throw numeric_error("contour", std::string(what) + " hits zero on the grid");
    double th = std::arg(vals[j]);
    double d = th - theta_prev;
    while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
    if (std::abs(d) > 0.5 * std::numbers::pi) {
      std::ostringstream os;
      os << what << " argument moves " << d << " rad between adjacent nodes " << (j - 1)
         << " and " << j << "; grid too coarse";
      throw numeric_error("contour", os.str());
    }
    theta_acc += d;
    theta_prev = th;
    out[j] = cplx(std::log(std::abs(vals[j])), theta_acc);
  }
  double d = std::arg(vals[0]) - theta_prev;
  while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  double total = theta_acc + d - std::arg(vals[0]);
  int winding = int(std::lround(total / (2.0 * std::numbers::pi)));
  if (winding_out) *winding_out = winding;
  if (!allow_winding && winding != 0) {
    std::ostringstream os;
    os << what << " winds " << winding << " times around the origin along the loop";
    throw numeric_error("contour", os.str());
  }
  return out;
}

// K(z) = h^2/y2 - (y1/y2) (1 - y2 J1)^2 / (1 - y2 J2)
inline cplx k_ratio(const SpectralMeasure& H, const AspectRatios& r, cplx m0) {
  cplx j1 = j1_sum(H, m0);
  cplx j2 = j2_sum(H, m0);
  cplx num = 1.0 - r.y2 * j1;
  return r.h_sq() / r.y2 - (r.y1 / r.y2) * num * num / (1.0 - r.y2 * j2);
}

}  // namespace detail

// Asymptotic mean of the centered statistic, decomposed as
//   mean = (kappa - 1) * part_k + beta_x * part_bx + beta_y * part_by.
struct MeanResult {
  double mean = 0.0;
  double part_k = 0.0;
  double part_bx = 0.0;
  double part_by = 0.0;
  double imag_residue = 0.0;  // magnitude of the discarded projection
  int winding_k = 0;          // loop winding of the ratio-log kernel
  int winding_j2 = 0;         // loop winding of the J2-log kernel
};

// hm1_values, when present, must align with grid.nodes index by index.
inline std::vector<MeanResult> mean_EXf(const std::vector<SpectralFunctional>& fs,
                                        const SpectralMeasure& H, const AspectRatios& r,
                                        const MomentParams& mom, const ContourGrid& grid,
                                        const std::vector<StieltjesTriple>& sol,
                                        const std::vector<cplx>* hm1_values = nullptr) {
  const std::size_t N = grid.nodes.size();
  if (sol.size() != N) throw config_error("solution vector does not match grid");
  const bool with_bx = mom.beta_x != 0.0;
  if (with_bx && (!hm1_values || hm1_values->size() != N))
    throw config_error("beta_x != 0 requires kernel estimates aligned with the grid");

  const double pi = std::numbers::pi;

  // node kernels shared by all functionals
  std::vector<cplx> Kv(N), one_m_j2(N), j2v(N);
  for (std::size_t j = 0; j < N; ++j) {
    cplx j2 = detail::j2_sum(H, sol[j].m0);
    j2v[j] = j2;
    one_m_j2[j] = 1.0 - r.y2 * j2;
    Kv[j] = detail::k_ratio(H, r, sol[j].m0);
  }
  int wk = 0, wj2 = 0;
  std::vector<cplx> logK = detail::unwrapped_log(Kv, "mean ratio kernel", false, &wk);
  std::vector<cplx> logJ2 = detail::unwrapped_log(one_m_j2, "mean J2 kernel", false, &wj2);

  std::vector<MeanResult> out;
  out.reserve(fs.size());
  for (const auto& f : fs) {
    cplx s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      cplx dz = grid.weight(j);
      if (dz == cplx(0.0)) continue;
      cplx z = grid.nodes[j];
      cplx fp = f.deriv(z);
      s1 += fp * logK[j] * dz;
      s3 += fp * logJ2[j] * dz;
      s4 += fp * j2v[j] * dz;
      if (with_bx) {
        cplx mu = sol[j].m_under;
        s2 += f(z) * (z * z * mu * mu * mu * (*hm1_values)[j] / Kv[j]) * dz;
      }
    }
    MeanResult mr;
    mr.winding_k = wk;
    mr.winding_j2 = wj2;
    // Im projections of the four loop sums
    mr.part_k = -(1.0 / (4.0 * pi)) * (s1.imag() + s3.imag());
    mr.part_bx = -(r.y1 / (2.0 * pi)) * s2.imag();
    mr.part_by = (r.y2 / (4.0 * pi)) * s4.imag();
    mr.mean = (mom.kappa - 1.0) * mr.part_k + mom.beta_x * mr.part_bx +
              mom.beta_y * mr.part_by;
    // the same combination of the discarded real projections
    double rk = -(1.0 / (4.0 * pi)) * (s1.real() + s3.real());
    double rbx = -(r.y1 / (2.0 * pi)) * s2.real();
    double rby = (r.y2 / (4.0 * pi)) * s4.real();
    mr.imag_residue = std::abs((mom.kappa - 1.0) * rk + mom.beta_x * rbx +
                               mom.beta_y * rby);
    out.push_back(mr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data-driven estimation of the fourth-moment kernels.
// ---------------------------------------------------------------------------

// Precomputed spectral split of the per-column leave-one-out resolvents for
// one data matrix X (p x n) and whitening factor Q (p x p):
//   R = Q S Q^adj with S = X X^adj / divisor, R = V diag(lam) V^adj,
//   D(z) = R - z I, and columnwise downdates D_j = D - u_j u_j^adj with
//   u_j = Q x_j / sqrt(divisor), inverted by a rank-one update.
template <typename Scalar>
class HKernelBasis {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatC = Eigen::MatrixXcd;
  using VecC = Eigen::VectorXcd;

  HKernelBasis(const Mat& X, const Mat& Q, double divisor)
      : p_(int(Q.rows())), n_(int(X.cols())), divisor_(divisor) {
    if (Q.rows() != Q.cols()) throw config_error("whitening factor must be square");
    if (X.rows() != Q.rows()) throw config_error("data rows must match whitening size");
    if (p_ > 500) throw config_error("kernel estimator supports p <= 500");
    if (!(divisor > 0.0)) throw config_error("divisor must be positive");

    Mat S = (X * X.adjoint()) / divisor_;
    Mat R = Q * S * Q.adjoint();
    R = ((R + R.adjoint()) * Scalar(0.5)).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(R);
    if (es.info() != Eigen::Success)
      throw numeric_error("estimator", "eigendecomposition of the whitened covariance failed");
    lam_ = es.eigenvalues();
    V_ = es.eigenvectors();
    P_ = V_.adjoint() * Q;                          // p x p
    Pabs2_ = P_.cwiseAbs2();                        // |P_{ki}|^2, real
    W_ = V_.adjoint() * X / std::sqrt(divisor_);    // p x n, columns V^adj u_j
    Wabs2_ = W_.cwiseAbs2();
    G_ = (Q.adjoint() * Q).template cast<cplx>();   // p x p complex copy
    Qc_ = Q.template cast<cplx>();
    Pc_ = P_.template cast<cplx>();
  }

  int p() const { return p_; }
  int ncols() const { return n_; }

  // Kernel value (1/(n p)) Sum_{i,j} B1_ij(z) B2_ij(z) at one node.
  cplx hm1(cplx z, cplx m_under) const {
    NodeData nd = node_data(z, m_under, true);
    cplx acc = 0.0;
    for (int j = 0; j < n_; ++j) {
      Column col = column_data(nd, j);
      for (int i = 0; i < p_; ++i) {
        cplx b1 = nd.base1(i) + col.a(i) * col.ahat(i) / col.denom;
        cplx b2 = nd.base2(i) + col.a(i) * col.bhat(i) / col.denom;
        acc += b1 * b2;
      }
    }
    return acc / (double(n_) * double(p_));
  }

  // Full matrix of B1_ij(z) values (p x n), used for the two-point kernel.
  MatC b1_matrix(cplx z) const {
    NodeData nd = node_data(z, cplx(0.0), false);
    MatC B(p_, n_);
    for (int j = 0; j < n_; ++j) {
      Column col = column_data(nd, j);
      for (int i = 0; i < p_; ++i)
        B(i, j) = nd.base1(i) + col.a(i) * col.ahat(i) / col.denom;
    }
    return B;
  }

  // Two-point kernel value (1/(n p)) Sum_{i,j} B1_ij(z1) B1_ij(z2).
  cplx hv1(cplx z1, cplx z2) const {
    MatC B1 = b1_matrix(z1);
    MatC B2 = b1_matrix(z2);
    return hv1_pair(B1, B2);
  }

  cplx hv1_pair(const MatC& B1, const MatC& B2) const {
    cplx acc = (B1.array() * B2.array()).sum();
    return acc / (double(n_) * double(p_));
  }

 private:
  struct NodeData {
    VecC d;      // 1 / (lam_k - z)
    VecC base1;  // diag(Q^adj D^{-1} Q)
    VecC base2;  // diag(Q^adj D^{-1} C), C = (m_under Q^adj Q + I)^{-1} Q
    MatC T1;     // V^adj C
    cplx z;
  };

  struct Column {
    VecC a;     // Q^adj D^{-1} u
    VecC ahat;  // (u^adj D^{-1} Q)^T entries
    VecC bhat;  // u^adj D^{-1} C entries
    cplx denom;
  };

  NodeData node_data(cplx z, cplx m_under, bool with_b2) const {
    NodeData nd;
    nd.z = z;
    nd.d = (lam_.template cast<cplx>().array() - z).inverse().matrix();
    nd.base1 = Pabs2_.transpose().template cast<cplx>() * nd.d;
    if (with_b2) {
      MatC A = m_under * G_;
      A.diagonal().array() += 1.0;
      Eigen::PartialPivLU<MatC> lu(A);
      MatC C = lu.solve(Qc_);
      nd.T1 = V_.adjoint().template cast<cplx>() * C;
      MatC M2 = nd.d.asDiagonal() * nd.T1;
      nd.base2 = (Pc_.conjugate().array() * M2.array()).colwise().sum().transpose();
    }
    return nd;
  }

  Column column_data(const NodeData& nd, int j) const {
    Column col;
    VecC w = W_.col(j).template cast<cplx>();
    VecC wd = w.array().conjugate().matrix().cwiseProduct(nd.d);  // conj(w) .* d
    VecC wdir = w.cwiseProduct(nd.d);                             // w .* d
    cplx alpha = (Wabs2_.col(j).template cast<cplx>().cwiseProduct(nd.d)).sum();
    col.denom = 1.0 - alpha;
    if (std::abs(col.denom) < 1e-10 * (1.0 + std::abs(alpha))) {
      std::ostringstream os;
      os << "leave-one-out resolvent singular at column " << j << ", z = (" << nd.z.real()
         << ", " << nd.z.imag() << ")";
      throw numeric_error("estimator", os.str());
    }
    col.a = Pc_.adjoint() * wdir;       // Sum_k conj(P_ki) d_k w_k
    col.ahat = Pc_.transpose() * wd;    // Sum_k P_ki d_k conj(w_k)
    if (nd.T1.size() > 0) col.bhat = nd.T1.transpose() * wd;
    return col;
  }

  int p_ = 0, n_ = 0;
  double divisor_ = 1.0;
  Eigen::VectorXd lam_;
  Mat V_, P_, W_;
  Eigen::MatrixXd Pabs2_, Wabs2_;
  MatC G_, Qc_, Pc_;
};

using HKernelBasisD = HKernelBasis<double>;

// One-point kernel estimates along a grid, index-aligned with grid.nodes.
struct HM1Estimate {
  std::vector<cplx> nodes;
  std::vector<cplx> values;
};

template <typename Scalar>
inline HM1Estimate estimate_h_m1(const HKernelBasis<Scalar>& basis, const ContourGrid& grid,
                                 const std::vector<StieltjesTriple>& sol,
                                 unsigned threads = 1) {
  const std::size_t N = grid.nodes.size();
  if (sol.size() != N) throw config_error("solution vector does not match grid");
  HM1Estimate est;
  est.nodes = grid.nodes;
  est.values.assign(N, cplx(0.0));
  parallel_for(N, threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j)
      est.values[j] = basis.hm1(grid.nodes[j], sol[j].m_under);
  });
  return est;
}

// ---------------------------------------------------------------------------
// Covariance loop sums.
// ---------------------------------------------------------------------------

struct CovResult {
  Eigen::MatrixXd cov;           // symmetrized total
  Eigen::MatrixXd part_k;        // coefficient of kappa
  Eigen::MatrixXd part_by;       // coefficient of beta_y
  Eigen::MatrixXd part_bx;       // coefficient of beta_x
  Eigen::MatrixXd imag_residue;  // discarded projection magnitudes
  double max_asymmetry = 0.0;
};

// Covariance of the centered statistics over functional pairs:
//   cov = kappa * part_k + beta_y * part_by + beta_x * part_bx,
// computed from the double loop sum over A1 x A2. The basis argument supplies
// the two-point kernel when beta_x != 0 (real-entry data only).
inline CovResult cov_Xf(const std::vector<SpectralFunctional>& fs, const SpectralMeasure& H,
                        const AspectRatios& r, const MomentParams& mom,
                        const ContourGrid& a1, const std::vector<StieltjesTriple>& sol1,
                        const ContourGrid& a2, const std::vector<StieltjesTriple>& sol2,
                        const HKernelBasisD* basis = nullptr, unsigned threads = 1) {
  const std::size_t N1 = a1.nodes.size(), N2 = a2.nodes.size();
  if (sol1.size() != N1 || sol2.size() != N2)
    throw config_error("solution vectors do not match grids");
  const bool with_bx = mom.beta_x != 0.0;
  if (with_bx && !basis)
    throw config_error("beta_x != 0 requires data for the two-point kernel");
  const int F = int(fs.size());
  const double pi = std::numbers::pi;

  // weights g_f(node) = f'(z) * trapezoid node weight on each grid
  auto weights = [&](const ContourGrid& g) {
    std::vector<std::vector<cplx>> w(F, std::vector<cplx>(g.nodes.size()));
    for (int f = 0; f < F; ++f)
      for (std::size_t j = 0; j < g.nodes.size(); ++j)
        w[f][j] = fs[f].deriv(g.nodes[j]) * g.weight(j);
    return w;
  };
  std::vector<std::vector<cplx>> g1 = weights(a1), g2 = weights(a2);

  // partial-fraction pieces for the beta_y kernel:
  //   Sum_t w t^2 / ((t+A)(t+B)) = (S(A) - S(B)) / (B - A),  S(M) = Sum w t^2/(t+M)
  std::vector<cplx> S1v(N1), S2v(N2), S1p(N1);
  auto S_of = [&](cplx M) {
    cplx s = 0.0;
    for (const auto& at : H.atoms()) s += at.weight * at.value * at.value / (at.value + M);
    return s;
  };
  auto Sp_of = [&](cplx M) {
    cplx s = 0.0;
    for (const auto& at : H.atoms()) {
      cplx d = at.value + M;
      s += at.weight * at.value * at.value / (d * d);
    }
    return s;
  };
  for (std::size_t j = 0; j < N1; ++j) S1v[j] = S_of(sol1[j].m0);
  for (std::size_t k = 0; k < N2; ++k) S2v[k] = S_of(sol2[k].m0);
  for (std::size_t j = 0; j < N1; ++j) S1p[j] = Sp_of(sol1[j].m0);

  // two-point kernel cache over the inner grid (chunked to bound memory)
  std::vector<Eigen::MatrixXcd> b1_inner;
  std::size_t chunk = N2;
  if (with_bx) {
    std::size_t bytes_per_node = sizeof(cplx) * std::size_t(basis->p()) * basis->ncols();
    std::size_t budget = std::size_t(1200) * 1024 * 1024;
    chunk = std::max<std::size_t>(1, std::min(N2, budget / std::max<std::size_t>(1, bytes_per_node)));
  }

  auto wrap_pi = [pi](double d) {
    while (d > pi) d -= 2.0 * pi;
    while (d <= -pi) d += 2.0 * pi;
    return d;
  };
  // Phase step of m0a - m0(z) as z moves from za to zb along the inner loop.
  // The outer image sits outside the inner image curve, so each true step is
  // below pi in magnitude; a near-pi swing is disambiguated by solving the
  // transform at the segment midpoint and composing the half-steps.
  std::function<double(cplx, cplx, cplx, cplx, cplx, int)> arc_step =
      [&](cplx m0a, cplx za, cplx ma, cplx zb, cplx mb, int depth) -> double {
    double d = wrap_pi(std::arg(m0a - mb) - std::arg(m0a - ma));
    if (std::abs(d) <= 0.98 * pi) return d;
    if (depth >= 24 || std::abs(zb - za) < 1e-13 * (1.0 + std::abs(za)))
      throw numeric_error(
          "contour",
          "pair kernel phase is ambiguous between adjacent nodes; contours too close");
    cplx zm = 0.5 * (za + zb);
    SolverConfig scfg;
    scfg.warm_start = ma;
    StieltjesTriple mid = solve_m0(H, r, zm, scfg);
    return arc_step(m0a, za, ma, zm, mid.m0, depth + 1) +
           arc_step(m0a, zm, mid.m0, zb, mb, depth + 1);
  };

  using Acc = std::vector<cplx>;  // flattened F x F accumulator
  auto accumulate_rows = [&](std::size_t b, std::size_t e, Acc& acc_k, Acc& acc_by,
                             Acc& acc_bx, std::size_t inner_b, std::size_t inner_e,
                             bool do_k_by) {
    std::vector<cplx> Lrow(N2), L2row(N2);
    std::vector<cplx> Tj(F);
    for (std::size_t a = b; a < e; ++a) {
      cplx m0a = sol1[a].m0;
      if (do_k_by) {
        // continued-phase log of m0(z1_a) - m0(z2_.) along the inner loop
        double theta = 0.0;
        for (std::size_t k = 0; k < N2; ++k) {
          cplx diff = m0a - sol2[k].m0;
          double mag = std::abs(diff);
          if (mag < 1e-14 * (1.0 + std::abs(m0a))) {
            std::ostringstream os;
            os << "transform values coincide between grids at outer node " << a
               << " and inner node " << k << "; contours not separated";
            throw numeric_error("contour", os.str());
          }
          if (k == 0)
            theta = std::arg(diff);
          else
            theta += arc_step(m0a, a2.nodes[k - 1], sol2[k - 1].m0, a2.nodes[k],
                              sol2[k].m0, 0);
          Lrow[k] = cplx(std::log(mag), theta);
          // beta_y kernel by partial fractions
          cplx delta = sol2[k].m0 - m0a;
          if (std::abs(delta) < 1e-9 * (1.0 + std::abs(m0a)))
            L2row[k] = -S1p[a];
          else
            L2row[k] = (S1v[a] - S2v[k]) / delta;
        }
        // closing the loop must return the phase to its start; a net winding
        // means the image curves cross or enclose one another
        double closed = theta - Lrow[0].imag() +
                        arc_step(m0a, a2.nodes[N2 - 1], sol2[N2 - 1].m0, a2.nodes[0],
                                 sol2[0].m0, 0);
        if (std::abs(closed) > 1.0) {
          std::ostringstream os;
          os << "pair kernel phase winds by " << closed / (2.0 * pi)
             << " turns along the inner loop at outer node " << a
             << "; contours are not properly nested";
          throw numeric_error("contour", os.str());
        }
        for (int f = 0; f < F; ++f) {
          cplx t = 0.0;
          for (std::size_t k = 0; k < N2; ++k) t += g2[f][k] * Lrow[k];
          Tj[f] = t;
        }
        for (int fi = 0; fi < F; ++fi)
          for (int fj = 0; fj < F; ++fj) acc_k[fi * F + fj] += g1[fi][a] * Tj[fj];
        for (int f = 0; f < F; ++f) {
          cplx t = 0.0;
          for (std::size_t k = 0; k < N2; ++k) t += g2[f][k] * L2row[k];
          Tj[f] = t;
        }
        for (int fi = 0; fi < F; ++fi)
          for (int fj = 0; fj < F; ++fj) acc_by[fi * F + fj] += g1[fi][a] * Tj[fj];
      }
      if (with_bx && inner_e > inner_b) {
        Eigen::MatrixXcd B1a = basis->b1_matrix(a1.nodes[a]);
        cplx za = a1.nodes[a];
        cplx mua = sol1[a].m_under;
        for (int f = 0; f < F; ++f) Tj[f] = cplx(0.0);
        for (std::size_t k = inner_b; k < inner_e; ++k) {
          cplx hv = basis->hv1_pair(B1a, b1_inner[k - inner_b]);
          cplx kern = za * a2.nodes[k] * mua * sol2[k].m_under * hv;
          for (int f = 0; f < F; ++f) Tj[f] += g2[f][k] * kern;
        }
        for (int fi = 0; fi < F; ++fi)
          for (int fj = 0; fj < F; ++fj) acc_bx[fi * F + fj] += g1[fi][a] * Tj[fj];
      }
    }
  };

  const unsigned T = std::max(1u, threads);
  // Row-chunk grouping is a function of N1 alone; threads only schedule
  // chunks, so the summation order is the same for every worker count.
  const std::size_t C = std::min<std::size_t>(N1, 32);
  std::vector<Acc> acc_k(C, Acc(F * F, cplx(0.0))), acc_by = acc_k, acc_bx = acc_k;

  // kappa and beta_y sums in one pass over outer rows
  parallel_for(C, T, [&](unsigned, std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c)
      accumulate_rows(N1 * c / C, N1 * (c + 1) / C, acc_k[c], acc_by[c], acc_bx[c], 0, 0,
                      true);
  });

  // beta_x sum with chunked inner cache (serial outer loop per chunk)
  if (with_bx) {
    for (std::size_t cb = 0; cb < N2; cb += chunk) {
      std::size_t ce = std::min(N2, cb + chunk);
      b1_inner.clear();
      b1_inner.reserve(ce - cb);
      for (std::size_t k = cb; k < ce; ++k) b1_inner.push_back(basis->b1_matrix(a2.nodes[k]));
      accumulate_rows(0, N1, acc_k[0], acc_by[0], acc_bx[0], cb, ce, false);
    }
  }

  auto reduce = [&](std::vector<Acc>& parts) {
    Acc total(F * F, cplx(0.0));
    for (const auto& a : parts)
      for (int i = 0; i < F * F; ++i) total[i] += a[i];
    return total;
  };
  Acc tot_k = reduce(acc_k), tot_by = reduce(acc_by), tot_bx = reduce(acc_bx);

  CovResult res;
  res.part_k.resize(F, F);
  res.part_by.resize(F, F);
  res.part_bx.resize(F, F);
  res.imag_residue.resize(F, F);
  Eigen::MatrixXd raw(F, F);
  const double c_k = -1.0 / (4.0 * pi * pi);
  const double c_by = -r.y2 / (4.0 * pi * pi);
  const double c_bx = -r.y1 / (4.0 * pi * pi);
  for (int i = 0; i < F; ++i) {
    for (int j = 0; j < F; ++j) {
      cplx vk = tot_k[i * F + j], vby = tot_by[i * F + j], vbx = tot_bx[i * F + j];
      res.part_k(i, j) = c_k * vk.real();
      res.part_by(i, j) = c_by * vby.real();
      res.part_bx(i, j) = c_bx * vbx.real();
      raw(i, j) = mom.kappa * res.part_k(i, j) + mom.beta_y * res.part_by(i, j) +
                  mom.beta_x * res.part_bx(i, j);
      res.imag_residue(i, j) = std::abs(mom.kappa * c_k * vk.imag() +
                                        mom.beta_y * c_by * vby.imag() +
                                        mom.beta_x * c_bx * vbx.imag());
    }
  }
  res.max_asymmetry = (raw - raw.transpose()).cwiseAbs().maxCoeff();
  res.cov = 0.5 * (raw + raw.transpose());
  res.part_k = (0.5 * (res.part_k + res.part_k.transpose().eval())).eval();
  res.part_by = (0.5 * (res.part_by + res.part_by.transpose().eval())).eval();
  res.part_bx = (0.5 * (res.part_bx + res.part_bx.transpose().eval())).eval();
  return res;
}

// ---------------------------------------------------------------------------
// Orchestration.
// ---------------------------------------------------------------------------

struct CLTConfig {
  DensityConfig density{};
  ContourConfig contour{};
  unsigned threads = 1;
  // The beta_x block of the covariance needs the two-point kernel on every
  // pair of grid nodes, which is only affordable on coarse grids. When false,
  // the covariance omits that block (the mean still carries its correction).
  bool include_bx_cov = true;
};

// Optional data attachment for the beta_x kernels: X columns are the first
// sample, Q is the whitening factor mapping to the ratio-matrix frame, and
// divisor is the covariance normalizer matching the sampling convention.
struct EstimatorData {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Q;
  double divisor = 0.0;
};

struct CLTSummary {
  std::vector<std::string> functional_names;
  std::vector<double> mean;
  Eigen::MatrixXd cov;
  std::vector<double> centering;  // integral of f against the centering curve
  SupportInterval support{};      // support at the asymptotic ratios
  DensityCurve curve;             // centering curve at the finite-sample ratios
  ContourGrid outer_grid;         // loop of the single sums and outer cov loop
  ContourGrid inner_grid;         // nested loop of the covariance double sum
  std::vector<MeanResult> mean_detail;
  CovResult cov_detail;
  bool bx_cov_included = true;
  int orientation = kLoopOrientation;
  double max_residual = 0.0;        // worst node-solve residual across both loops
  std::int64_t total_iterations = 0;  // summed solver iterations across both loops
};

// Full pipeline: support detection, centering curve, contours, node solves,
// kernel estimation (if needed), mean and covariance sums, sanity checks.
inline CLTSummary clt_summary(const SpectralMeasure& H, const AspectRatios& r,
                              const MomentParams& mom,
                              const std::vector<SpectralFunctional>& fs,
                              const CLTConfig& cfg = {},
                              const EstimatorData* data = nullptr) {
  if (fs.empty()) throw config_error("need at least one functional");
  CLTSummary out;
  for (const auto& f : fs) out.functional_names.push_back(f.name());

  AspectRatios ra = r.asymptotic_view();
  AspectRatios rn = r.finite_sample_view();

  out.support = detect_support(H, ra, cfg.density);

  SupportInterval sup_n = out.support;
  if (ra.y1 != rn.y1 || ra.y2 != rn.y2) sup_n = detect_support(H, rn, cfg.density);
  out.curve = density_on_mesh(H, rn, sup_n, cfg.density);

  auto grids = build_contours(out.support, cfg.contour, fs);
  out.outer_grid = grids.first;
  out.inner_grid = grids.second;
  std::vector<StieltjesTriple> sol1 = solve_on_contour(H, ra, grids.first, cfg.contour.solver);
  std::vector<StieltjesTriple> sol2 = solve_on_contour(H, ra, grids.second, cfg.contour.solver);
  for (const auto* sol : {&sol1, &sol2})
    for (const auto& t : *sol) {
      out.max_residual = std::max(out.max_residual, t.residual);
      out.total_iterations += t.iterations;
    }

  std::optional<HKernelBasisD> basis;
  std::vector<cplx> hm1_vals;
  const std::vector<cplx>* hm1_ptr = nullptr;
  if (mom.beta_x != 0.0) {
    if (!data) throw config_error("beta_x != 0 requires data for the kernel estimator");
    basis.emplace(data->X, data->Q, data->divisor);
    HM1Estimate est = estimate_h_m1(*basis, grids.first, sol1, cfg.threads);
    hm1_vals = std::move(est.values);
    hm1_ptr = &hm1_vals;
  }

  out.mean_detail = mean_EXf(fs, H, ra, mom, grids.first, sol1, hm1_ptr);
  for (const auto& mr : out.mean_detail) {
    out.mean.push_back(mr.mean);
    if (mr.imag_residue > 1e-6 * (1.0 + std::abs(mr.mean)))
      throw numeric_error("mean", "discarded projection exceeds tolerance; grid too coarse");
  }

  MomentParams mom_cov = mom;
  out.bx_cov_included = (mom.beta_x == 0.0) || cfg.include_bx_cov;
  if (!out.bx_cov_included) mom_cov.beta_x = 0.0;
  out.cov_detail = cov_Xf(fs, H, ra, mom_cov, grids.first, sol1, grids.second, sol2,
                          basis && out.bx_cov_included ? &*basis : nullptr, cfg.threads);
  out.cov = out.cov_detail.cov;
  const int F = int(fs.size());
  for (int i = 0; i < F; ++i) {
    if (!(out.cov(i, i) > 0.0))
      throw numeric_error("cov", "nonpositive variance for " + out.functional_names[i]);
    for (int j = 0; j < F; ++j)
      if (out.cov_detail.imag_residue(i, j) >
          1e-6 * (1.0 + std::abs(out.cov(i, j))))
        throw numeric_error("cov", "discarded projection exceeds tolerance; grid too coarse");
  }
  if (out.cov_detail.max_asymmetry > 1e-8 * (1.0 + out.cov.cwiseAbs().maxCoeff()))
    throw numeric_error("cov", "covariance loop sum asymmetric beyond tolerance");
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.cov);
    if (es.eigenvalues().minCoeff() < -1e-8 * (1.0 + out.cov.cwiseAbs().maxCoeff()))
      throw numeric_error("cov", "covariance matrix not positive semidefinite");
  }

  for (const auto& f : fs) out.centering.push_back(integrate_functional(f, out.curve));
  return out;
}

}  // namespace flss
