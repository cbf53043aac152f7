#include "catch_amalgamated.hpp"
#include "oracles.hpp"

#include "flss/contour.hpp"
#include "flss/density.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

using namespace flss;
using Catch::Matchers::ContainsSubstring;

namespace {

ContourConfig small_cfg(double eps, double zeta, int m1, int m2) {
  ContourConfig cfg;
  cfg.eps = eps;
  cfg.zeta = zeta;
  cfg.m1 = m1;
  cfg.m2 = m2;
  return cfg;
}

double polygon_area(const ContourGrid& g) {
  double acc = 0.0;
  for (std::size_t j = 0; j < g.nodes.size(); ++j)
    acc += (std::conj(g.nodes[j]) * g.delta(j)).imag();
  return 0.5 * acc;
}

}  // namespace

TEST_CASE("contour grids follow the documented layout", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);
  ContourConfig cfg = small_cfg(0.02, 0.01, 40, 60);
  auto [a1, a2] = build_contours(sup, cfg, {SpectralFunctional::log_f()});

  CHECK(a1.nodes.size() == std::size_t(2 * 40 + 2 * 60 + 4));
  CHECK(a2.nodes.size() == a1.nodes.size());
  CHECK(a1.eps == cfg.eps);
  CHECK(a1.zeta == cfg.zeta);
  CHECK(a2.eps == cfg.eps / 2);
  CHECK(a2.zeta == cfg.zeta / 2);
  CHECK(a1.orientation == kLoopOrientation);

  double lo = sup.c1 - cfg.eps, hi = sup.c2 + cfg.eps;
  int zero_steps = 0;
  cplx closing(0.0);
  for (std::size_t j = 0; j < a1.nodes.size(); ++j) {
    CHECK(a1.nodes[j].real() >= lo - 1e-12);
    CHECK(a1.nodes[j].real() <= hi + 1e-12);
    CHECK(std::abs(a1.nodes[j].imag()) <= cfg.zeta + 1e-12);
    if (a1.delta(j) == cplx(0.0)) ++zero_steps;
    closing += a1.delta(j);
  }
  CHECK(zero_steps == 4);  // corners listed twice, including the wrap
  CHECK(std::abs(closing) <= 1e-12);

  // counterclockwise traversal of the full rectangle
  double area = polygon_area(a1);
  double expect = (sup.c2 - sup.c1 + 2 * cfg.eps) * 2 * cfg.zeta;
  CHECK(area > 0.0);
  CHECK(std::abs(area - expect) <= 1e-12 * expect + 1e-15);

  // the inner rectangle keeps half margins on every side
  double gap_x = (sup.c1 - cfg.eps / 2) - lo;
  double gap_y = cfg.zeta - cfg.zeta / 2;
  CHECK(gap_x == Catch::Approx(cfg.eps / 2).margin(1e-15));
  CHECK(gap_y == Catch::Approx(cfg.zeta / 2).margin(1e-15));
  for (const cplx& z : a2.nodes) {
    CHECK(z.real() >= sup.c1 - cfg.eps / 2 - 1e-12);
    CHECK(z.real() <= sup.c2 + cfg.eps / 2 + 1e-12);
    CHECK(std::abs(z.imag()) <= cfg.zeta / 2 + 1e-12);
  }
}

TEST_CASE("contour weights reproduce closed loop integrals", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.2, 0.2);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.5, 0.3, 200, 200));
  (void)a2;

  cplx sum_w(0.0), sum_zw(0.0), pole_in(0.0), pole_out(0.0);
  cplx zc(0.5 * (sup.c1 + sup.c2), 0.0);
  cplx zo(sup.c2 + 1.5, 0.0);
  for (std::size_t j = 0; j < a1.nodes.size(); ++j) {
    cplx w = a1.weight(j);
    sum_w += w;
    sum_zw += a1.nodes[j] * w;
    pole_in += w / (a1.nodes[j] - zc);
    pole_out += w / (a1.nodes[j] - zo);
  }
  CHECK(std::abs(sum_w) <= 1e-12);
  CHECK(std::abs(sum_zw) <= 1e-12);
  cplx two_pi_i(0.0, 2.0 * std::numbers::pi);
  CHECK(std::abs(pole_in - two_pi_i) <= 1e-4);
  CHECK(std::abs(pole_out) <= 1e-4);
}

TEST_CASE("functionals with branch cuts reject tight margins", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);  // c1 ~ 0.078
  ContourConfig wide = small_cfg(0.1, 0.01, 40, 40);
  CHECK_THROWS_WITH(build_contours(sup, wide, {SpectralFunctional::log_f()}),
                    ContainsSubstring("branch cut"));
  // polynomial functionals have no cut and accept the same margins
  CHECK_NOTHROW(build_contours(sup, wide, {SpectralFunctional::power(2)}));

  ContourConfig bad = small_cfg(0.02, 0.01, 3, 40);
  CHECK_THROWS_AS(build_contours(sup, bad), config_error);
  ContourConfig neg = small_cfg(-0.02, 0.01, 40, 40);
  CHECK_THROWS_AS(build_contours(sup, neg), config_error);
}

TEST_CASE("node solves run along the loop and fail loudly when starved", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.02, 0.01, 30, 50));
  (void)a2;

  std::vector<StieltjesTriple> sol = solve_on_contour(H, r, a1);
  REQUIRE(sol.size() == a1.nodes.size());
  double worst = 0.0;
  for (const auto& t : sol) worst = std::max(worst, t.residual);
  CHECK(worst <= 1e-10);

  // warm-started values agree with independent cold solves
  std::mt19937_64 rng(99);
  for (int k = 0; k < 12; ++k) {
    std::size_t j = rng() % a1.nodes.size();
    StieltjesTriple cold = solve_m0(H, r, a1.nodes[j]);
    CHECK(std::abs(cold.m0 - sol[j].m0) <= 1e-9 * (1.0 + std::abs(cold.m0)));
  }

  SolverConfig starved;
  starved.max_iter = 1;
  CHECK_THROWS_WITH(solve_on_contour(H, r, a1, starved), ContainsSubstring("contour node"));
}

TEST_CASE("mean decomposition is affine in the moment parameters", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.02, 0.02, 200, 200));
  (void)a2;
  std::vector<StieltjesTriple> sol = solve_on_contour(H, r, a1);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f(), SpectralFunctional::power(1)};

  std::vector<MeanResult> base = mean_EXf(fs, H, r, MomentParams(2.0, 0.0, 0.0), a1, sol);
  std::vector<MeanResult> with_by = mean_EXf(fs, H, r, MomentParams(2.0, 0.0, 0.7), a1, sol);
  std::vector<MeanResult> complex_case = mean_EXf(fs, H, r, MomentParams(1.0, 0.0, 1.3), a1, sol);

  for (std::size_t i = 0; i < fs.size(); ++i) {
    // the decomposition parts do not depend on the moment values
    CHECK(base[i].part_k == with_by[i].part_k);
    CHECK(base[i].part_k == complex_case[i].part_k);
    CHECK(base[i].part_by == with_by[i].part_by);
    CHECK(base[i].part_by == complex_case[i].part_by);

    double scale = 1.0 + std::abs(base[i].part_k) + std::abs(base[i].part_by);
    CHECK(std::abs(base[i].mean - base[i].part_k) <= 1e-14 * scale);
    CHECK(std::abs(with_by[i].mean - (base[i].part_k + 0.7 * base[i].part_by)) <=
          1e-12 * scale);
    CHECK(std::abs(complex_case[i].mean - 1.3 * base[i].part_by) <= 1e-12 * scale);

    CHECK(base[i].winding_k == 0);
    CHECK(base[i].winding_j2 == 0);
    CHECK(base[i].imag_residue <= 1e-6 * (1.0 + std::abs(base[i].mean)));
  }

  // kappa = 1 with vanishing cumulant excesses kills every term
  std::vector<MeanResult> null_case = mean_EXf(fs, H, r, MomentParams(1.0, 0.0, 0.0), a1, sol);
  for (const auto& mr : null_case) CHECK(mr.mean == 0.0);

  CHECK_THROWS_AS(mean_EXf(fs, H, r, MomentParams(2.0, -1.0, 0.0), a1, sol), config_error);
  std::vector<StieltjesTriple> short_sol(sol.begin(), sol.end() - 1);
  CHECK_THROWS_AS(mean_EXf(fs, H, r, MomentParams(2.0, 0.0, 0.0), a1, short_sol),
                  config_error);
}

TEST_CASE("covariance decomposition is affine and symmetric", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.02, 0.02, 150, 150));
  std::vector<StieltjesTriple> s1 = solve_on_contour(H, r, a1);
  std::vector<StieltjesTriple> s2 = solve_on_contour(H, r, a2);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f(), SpectralFunctional::power(1)};

  CovResult real_case = cov_Xf(fs, H, r, MomentParams(2.0, 0.0, 0.0), a1, s1, a2, s2);
  CovResult with_by = cov_Xf(fs, H, r, MomentParams(2.0, 0.0, 0.9), a1, s1, a2, s2);
  CovResult complex_case = cov_Xf(fs, H, r, MomentParams(1.0, 0.0, 0.0), a1, s1, a2, s2);

  CHECK(real_case.part_k == with_by.part_k);
  CHECK(real_case.part_by == with_by.part_by);
  CHECK(real_case.part_k == complex_case.part_k);

  const int F = int(fs.size());
  for (int i = 0; i < F; ++i) {
    for (int j = 0; j < F; ++j) {
      double scale =
          1.0 + std::abs(real_case.part_k(i, j)) + std::abs(real_case.part_by(i, j));
      CHECK(std::abs(real_case.cov(i, j) - 2.0 * real_case.part_k(i, j)) <= 1e-12 * scale);
      CHECK(std::abs(with_by.cov(i, j) -
                     (2.0 * real_case.part_k(i, j) + 0.9 * real_case.part_by(i, j))) <=
            1e-12 * scale);
      CHECK(std::abs(complex_case.cov(i, j) - real_case.part_k(i, j)) <= 1e-12 * scale);
      CHECK(real_case.cov(i, j) == real_case.cov(j, i));
      CHECK(real_case.imag_residue(i, j) <= 1e-6 * (1.0 + std::abs(real_case.cov(i, j))));
    }
    CHECK(real_case.cov(i, i) > 0.0);
    CHECK(complex_case.cov(i, i) > 0.0);
  }
  CHECK(real_case.max_asymmetry <= 1e-8 * (1.0 + real_case.cov.cwiseAbs().maxCoeff()));

  // swapping the functional list transposes the matrix
  std::vector<SpectralFunctional> swapped{fs[1], fs[0]};
  CovResult sw = cov_Xf(swapped, H, r, MomentParams(2.0, 0.0, 0.0), a1, s1, a2, s2);
  CHECK(std::abs(sw.cov(0, 1) - real_case.cov(1, 0)) <= 1e-8);
  CHECK(std::abs(sw.cov(0, 0) - real_case.cov(1, 1)) <= 1e-12);
}

TEST_CASE("covariance totals are bit stable across worker counts", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.5, 0.25);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.02, 0.02, 100, 100));
  std::vector<StieltjesTriple> s1 = solve_on_contour(H, r, a1);
  std::vector<StieltjesTriple> s2 = solve_on_contour(H, r, a2);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f(), SpectralFunctional::power(1)};
  MomentParams mom(2.0, 0.0, 0.4);

  CovResult t1 = cov_Xf(fs, H, r, mom, a1, s1, a2, s2, nullptr, 1);
  CovResult t4 = cov_Xf(fs, H, r, mom, a1, s1, a2, s2, nullptr, 4);
  CovResult t3 = cov_Xf(fs, H, r, mom, a1, s1, a2, s2, nullptr, 3);
  CHECK(t1.cov == t4.cov);
  CHECK(t1.cov == t3.cov);
  CHECK(t1.part_k == t4.part_k);
  CHECK(t1.part_by == t4.part_by);
}

TEST_CASE("quadrature is stable under grid refinement and margin inflation", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f()};
  MomentParams mom(2.0, 0.0, 0.0);

  auto eval = [&](const AspectRatios& r, const SupportInterval& sup, double e1, double z1,
                  int m, double* mean, double* cov) {
    ContourGrid a1 = detail::build_one_contour(sup.c1, sup.c2, e1, z1, m, m);
    ContourGrid a2 = detail::build_one_contour(sup.c1, sup.c2, e1 / 2, z1 / 2, m, m);
    std::vector<StieltjesTriple> s1 = solve_on_contour(H, r, a1);
    std::vector<StieltjesTriple> s2 = solve_on_contour(H, r, a2);
    *mean = mean_EXf(fs, H, r, mom, a1, s1)[0].mean;
    *cov = cov_Xf(fs, H, r, mom, a1, s1, a2, s2).cov(0, 0);
  };

  SECTION("halving the node spacing shrinks the drift at second order") {
    AspectRatios r(0.5, 0.25);
    SupportInterval sup = detect_support(H, r);
    double m_[3], c_[3];
    int ms[3] = {250, 500, 1000};
    for (int k = 0; k < 3; ++k) eval(r, sup, 0.05, 0.05, ms[k], &m_[k], &c_[k]);
    double dm1 = std::abs(m_[1] - m_[0]), dm2 = std::abs(m_[2] - m_[1]);
    double dc1 = std::abs(c_[1] - c_[0]), dc2 = std::abs(c_[2] - c_[1]);
    CHECK(dm2 * 2.0 <= dm1 + 1e-12);
    CHECK(dc2 * 2.0 <= dc1 + 1e-12);
  }

  SECTION("doubling the node count moves the totals below 1e-3") {
    AspectRatios r(0.2, 0.2);
    SupportInterval sup = detect_support(H, r);
    double m1k, c1k, m2k, c2k;
    eval(r, sup, 1e-3, 1e-3, 1000, &m1k, &c1k);
    eval(r, sup, 1e-3, 1e-3, 2000, &m2k, &c2k);
    CHECK(std::abs(m2k - m1k) <= 1e-3);
    CHECK(std::abs(c2k - c1k) <= 1e-3 * std::abs(c1k));
  }

  SECTION("inflating the outer rectangle leaves the totals in place") {
    AspectRatios r(0.5, 0.25);
    SupportInterval sup = detect_support(H, r);
    int m = 1000;
    ContourGrid a2 = detail::build_one_contour(sup.c1, sup.c2, 0.01, 0.01, m, m);
    std::vector<StieltjesTriple> s2 = solve_on_contour(H, r, a2);
    double mean[2], cov[2];
    double margins[2] = {0.02, 0.04};
    for (int k = 0; k < 2; ++k) {
      ContourGrid a1 = detail::build_one_contour(sup.c1, sup.c2, margins[k], margins[k], m, m);
      std::vector<StieltjesTriple> s1 = solve_on_contour(H, r, a1);
      mean[k] = mean_EXf(fs, H, r, mom, a1, s1)[0].mean;
      cov[k] = cov_Xf(fs, H, r, mom, a1, s1, a2, s2).cov(0, 0);
    }
    CHECK(std::abs(mean[1] - mean[0]) <= 1e-3 * std::abs(mean[0]));
    CHECK(std::abs(cov[1] - cov[0]) <= 1e-3 * std::abs(cov[0]));
  }
}

TEST_CASE("kernel basis matches the dense reference", "[contour]") {
  const int p = 24, n = 60;
  std::mt19937_64 rng(20250819);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd X(p, n), A(p, p);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < p; ++i) X(i, j) = gauss(rng);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) A(i, j) = gauss(rng);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(p, p) + 0.1 * (A + A.transpose());
  double divisor = double(n);

  HKernelBasisD basis(X, Q, divisor);
  oracle::DenseKernel dense(X, Q, divisor);
  CHECK(basis.p() == p);
  CHECK(basis.ncols() == n);

  for (cplx z : {cplx(0.8, 0.05), cplx(2.0, -0.3), cplx(0.4, 1.0)}) {
    Eigen::MatrixXcd Bfast = basis.b1_matrix(z);
    Eigen::MatrixXcd Bref = dense.b1_matrix(z);
    CHECK((Bfast - Bref).cwiseAbs().maxCoeff() <= 1e-9);

    cplx mu(-0.4, 0.2);
    cplx hf = basis.hm1(z, mu);
    cplx hr = dense.hm1(z, mu);
    CHECK(std::abs(hf - hr) <= 1e-10 * (1.0 + std::abs(hr)));
  }

  // two-point kernel symmetry and conjugate pairing
  cplx z1(0.8, 0.05), z2(2.0, -0.3);
  CHECK(basis.hv1(z1, z2) == basis.hv1(z2, z1));
  cplx paired = basis.hv1(z1, std::conj(z1));
  CHECK(std::abs(paired.imag()) <= 1e-10 * (1.0 + std::abs(paired)));
  CHECK(paired.real() > 0.0);  // sum of squared magnitudes

  CHECK_THROWS_AS(HKernelBasisD(X, Q, 0.0), config_error);
  CHECK_THROWS_AS(HKernelBasisD(X.topRows(p - 1), Q, divisor), config_error);
  Eigen::MatrixXd big = Eigen::MatrixXd::Identity(501, 501);
  CHECK_THROWS_AS(HKernelBasisD(Eigen::MatrixXd::Zero(501, 4), big, 4.0), config_error);
}

TEST_CASE("mean correction scales linearly in the fourth cumulant", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.4, 0.3);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.05, 0.05, 24, 40));
  (void)a2;
  std::vector<StieltjesTriple> sol = solve_on_contour(H, r, a1);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f()};

  const int p = 30, n1 = 75;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd X(p, n1);
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < p; ++i) X(i, j) = gauss(rng);
  HKernelBasisD basis(X, Eigen::MatrixXd::Identity(p, p), double(n1));

  HM1Estimate est = estimate_h_m1(basis, a1, sol);
  REQUIRE(est.values.size() == a1.nodes.size());
  for (const cplx& v : est.values) {
    CHECK(std::isfinite(v.real()));
    CHECK(std::isfinite(v.imag()));
  }

  // estimates pair up under conjugation of the node
  for (std::size_t j = 0; j < a1.nodes.size(); ++j) {
    cplx zc = std::conj(a1.nodes[j]);
    for (std::size_t k = 0; k < a1.nodes.size(); ++k) {
      if (std::abs(a1.nodes[k] - zc) < 1e-14) {
        CHECK(std::abs(est.values[k] - std::conj(est.values[j])) <=
              1e-10 * (1.0 + std::abs(est.values[j])));
        break;
      }
    }
  }

  // estimator tables reuse the grid solve deterministically
  HM1Estimate est4 = estimate_h_m1(basis, a1, sol, 4);
  for (std::size_t j = 0; j < est.values.size(); ++j) CHECK(est.values[j] == est4.values[j]);

  std::vector<MeanResult> m0 = mean_EXf(fs, H, r, MomentParams(2.0, 0.0, 0.0), a1, sol);
  std::vector<MeanResult> mh =
      mean_EXf(fs, H, r, MomentParams(2.0, 0.5, 0.0), a1, sol, &est.values);
  std::vector<MeanResult> mf =
      mean_EXf(fs, H, r, MomentParams(2.0, 1.0, 0.0), a1, sol, &est.values);
  CHECK(mh[0].part_bx == mf[0].part_bx);
  double half = mh[0].mean - m0[0].mean;
  double full = mf[0].mean - m0[0].mean;
  CHECK(std::abs(full - 2.0 * half) <= 1e-10 * (1.0 + std::abs(full)));

  CHECK_THROWS_AS(mean_EXf(fs, H, r, MomentParams(2.0, 1.0, 0.0), a1, sol), config_error);
}

TEST_CASE("covariance fourth-cumulant block needs data and stays affine", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r(0.4, 0.3);
  SupportInterval sup = detect_support(H, r);
  auto [a1, a2] = build_contours(sup, small_cfg(0.05, 0.05, 16, 24));
  std::vector<StieltjesTriple> s1 = solve_on_contour(H, r, a1);
  std::vector<StieltjesTriple> s2 = solve_on_contour(H, r, a2);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f()};

  CHECK_THROWS_AS(cov_Xf(fs, H, r, MomentParams(2.0, 1.0, 0.0), a1, s1, a2, s2),
                  config_error);

  const int p = 24, n1 = 60;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd X(p, n1);
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < p; ++i) X(i, j) = gauss(rng);
  HKernelBasisD basis(X, Eigen::MatrixXd::Identity(p, p), double(n1));

  CovResult plain = cov_Xf(fs, H, r, MomentParams(2.0, 0.0, 0.0), a1, s1, a2, s2);
  CovResult half = cov_Xf(fs, H, r, MomentParams(2.0, 0.5, 0.0), a1, s1, a2, s2, &basis);
  CovResult full = cov_Xf(fs, H, r, MomentParams(2.0, 1.0, 0.0), a1, s1, a2, s2, &basis);

  CHECK(half.part_k == full.part_k);
  CHECK(half.part_bx == full.part_bx);
  CHECK(half.part_k(0, 0) == plain.part_k(0, 0));
  double dh = half.cov(0, 0) - plain.cov(0, 0);
  double df = full.cov(0, 0) - plain.cov(0, 0);
  CHECK(std::abs(df - 2.0 * dh) <= 1e-10 * (1.0 + std::abs(df)));
  CHECK(full.part_bx(0, 0) != 0.0);
}

TEST_CASE("summary pipeline assembles every block consistently", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r = AspectRatios::from_dims(80, 160, 320);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f(), SpectralFunctional::power(1)};

  CLTConfig cfg;
  cfg.contour = small_cfg(0.02, 0.02, 200, 200);
  CLTSummary s = clt_summary(H, r, MomentParams(2.0, 0.0, 0.0), fs, cfg);

  REQUIRE(s.mean.size() == 2);
  REQUIRE(s.centering.size() == 2);
  CHECK(s.functional_names[0] == fs[0].name());
  CHECK(s.cov.rows() == 2);
  CHECK(s.cov(0, 1) == s.cov(1, 0));
  CHECK(s.cov(0, 0) > 0.0);
  CHECK(s.cov(1, 1) > 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.cov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-8 * (1.0 + s.cov.cwiseAbs().maxCoeff()));
  CHECK(s.outer_grid.eps == cfg.contour.eps);
  CHECK(s.inner_grid.eps == cfg.contour.eps / 2);
  CHECK(s.max_residual <= 1e-10);
  CHECK(s.total_iterations > 0);
  CHECK(s.bx_cov_included);
  CHECK(s.orientation == kLoopOrientation);

  // first moment of the limit spectrum: 1 / (1 - y2)
  CHECK(std::abs(s.centering[1] - 1.0 / (1.0 - r.y2)) <= 0.03);
  CHECK(std::isfinite(s.centering[0]));

  // the mean vector reproduces the standalone evaluation
  std::vector<StieltjesTriple> sol = solve_on_contour(H, r, s.outer_grid);
  std::vector<MeanResult> direct =
      mean_EXf(fs, H, r, MomentParams(2.0, 0.0, 0.0), s.outer_grid, sol);
  CHECK(s.mean[0] == direct[0].mean);
  CHECK(s.mean[1] == direct[1].mean);

  CLTSummary again = clt_summary(H, r, MomentParams(2.0, 0.0, 0.0), fs, cfg);
  CHECK(again.mean == s.mean);
  CHECK(again.cov == s.cov);
  CHECK(again.centering == s.centering);

  CHECK_THROWS_AS(clt_summary(H, r, MomentParams(2.0, 0.0, 0.0), {}, cfg), config_error);
  CHECK_THROWS_AS(clt_summary(H, r, MomentParams(2.0, -1.0, 0.0), fs, cfg), config_error);
}

TEST_CASE("summary covariance can skip the cumulant double sum", "[contour]") {
  SpectralMeasure H = SpectralMeasure::point_mass(1.0);
  AspectRatios r = AspectRatios::from_dims(40, 100, 160);
  std::vector<SpectralFunctional> fs{SpectralFunctional::log_f()};

  const int p = 40, n1 = 100;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  EstimatorData data;
  data.X.resize(p, n1);
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < p; ++i) data.X(i, j) = gauss(rng);
  data.Q = Eigen::MatrixXd::Identity(p, p);
  data.divisor = double(n1);

  CLTConfig cfg;
  cfg.contour = small_cfg(0.05, 0.05, 16, 24);
  cfg.include_bx_cov = false;
  MomentParams mom(2.0, -1.0, 0.0);
  CLTSummary s = clt_summary(H, r, mom, fs, cfg, &data);
  CHECK_FALSE(s.bx_cov_included);
  CHECK(s.cov_detail.part_bx(0, 0) == 0.0);
  CHECK(s.mean_detail[0].part_bx != 0.0);

  cfg.include_bx_cov = true;
  CLTSummary full = clt_summary(H, r, mom, fs, cfg, &data);
  CHECK(full.bx_cov_included);
  CHECK(full.cov_detail.part_bx(0, 0) != 0.0);
  CHECK(full.mean == s.mean);

  CHECK_THROWS_AS(clt_summary(H, r, mom, fs, cfg), config_error);
}
