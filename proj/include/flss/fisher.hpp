#pragma once

// Two-sample covariance ratios: sample covariance construction, generalized
// symmetric eigenvalues, linear spectral statistics and the two-sample
// log-ratio statistic.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <vector>

#include "common.hpp"
#include "density.hpp"
#include "measures.hpp"

namespace flss {

// Eigenvalues of the two-sample ratio matrix, descending. Eigenvalues whose
// magnitude falls below a rank threshold are recorded as zeros and excluded
// from all statistics.
struct FisherSpectrum {
  std::vector<double> eigenvalues;  // descending, length p
  int p = 0;
  int n1 = 0;
  int n2 = 0;
  int zero_count = 0;
};

// Sample covariance pair. centered = true subtracts column means and divides
// by n - 1; otherwise divides by n.
template <typename Mat>
inline std::pair<Mat, Mat> sample_covariances(const Mat& X, const Mat& Y, bool centered) {
  if (X.rows() != Y.rows()) throw config_error("X and Y must have the same row count");
  if (X.cols() < 2 || Y.cols() < 2) throw config_error("need at least two observations");
  auto one = [&](const Mat& A) {
    const auto n = A.cols();
    if (!centered) return Mat((A * A.adjoint()) / double(n));
    Mat centered_A = A.colwise() - A.rowwise().mean();
    return Mat((centered_A * centered_A.adjoint()) / double(n - 1));
  };
  return {one(X), one(Y)};
}

namespace detail {

template <typename Mat>
inline FisherSpectrum fisher_eigenvalues_impl(const Mat& B1, const Mat& B2, int n1, int n2) {
  if (B1.rows() != B1.cols() || B2.rows() != B2.cols() || B1.rows() != B2.rows())
    throw config_error("covariance matrices must be square with equal size");
  const int p = int(B1.rows());

  // cheap conditioning estimate from the Cholesky diagonal of B2
  Eigen::LLT<Mat> llt(B2);
  if (llt.info() != Eigen::Success)
    throw numeric_error("fisher", "second covariance matrix is not positive definite");
  Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs();
  double dmax = d.maxCoeff(), dmin = d.minCoeff();
  double cond_est = (dmax / dmin) * (dmax / dmin);
  if (!(dmin > 0.0) || cond_est > 1e12) {
    std::ostringstream os;
    os << "second covariance matrix ill conditioned (estimate " << cond_est << ")";
    throw numeric_error("fisher", os.str());
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(B1, B2, Eigen::EigenvaluesOnly);
  if (ges.info() != Eigen::Success)
    throw numeric_error("fisher", "generalized eigenvalue iteration failed");
  Eigen::VectorXd ev = ges.eigenvalues();

  FisherSpectrum sp;
  sp.p = p;
  sp.n1 = n1;
  sp.n2 = n2;
  sp.eigenvalues.assign(ev.data(), ev.data() + p);
  std::sort(sp.eigenvalues.begin(), sp.eigenvalues.end(), std::greater<double>());
  double scale = std::max(1.0, std::abs(sp.eigenvalues.front()));
  for (double& lam : sp.eigenvalues) {
    if (std::abs(lam) <= 1e-11 * scale) {
      lam = 0.0;
      ++sp.zero_count;
    }
  }
  return sp;
}

}  // namespace detail

// Generalized symmetric eigenvalues of (B1, B2) without forming B2^{-1}.
inline FisherSpectrum fisher_eigenvalues(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2,
                                         int n1 = 0, int n2 = 0) {
  return detail::fisher_eigenvalues_impl(B1, B2, n1, n2);
}

inline FisherSpectrum fisher_eigenvalues(const Eigen::MatrixXcd& B1, const Eigen::MatrixXcd& B2,
                                         int n1 = 0, int n2 = 0) {
  return detail::fisher_eigenvalues_impl(B1, B2, n1, n2);
}

// Sum of f over the strictly positive eigenvalues.
inline double lss(const SpectralFunctional& f, const FisherSpectrum& sp) {
  kahan_sum s;
  for (double lam : sp.eigenvalues)
    if (lam > 0.0) s.add(f(lam));
  return s.value();
}

// lss minus p times the mesh integral of f against the limiting curve.
inline double centered_lss(const SpectralFunctional& f, const FisherSpectrum& sp,
                           const DensityCurve& curve, QuadRule rule = QuadRule::LeftEndpoint) {
  return lss(f, sp) - double(sp.p) * integrate_functional(f, curve, rule);
}

// Two-sample log ratio statistic at finite-sample ratios:
//   Sum log(yn1 + yn2 * lam_i) - yn2/(yn1+yn2) * Sum log(lam_i) - log(yn1 + yn2),
// sums over strictly positive eigenvalues.
inline double lrt_statistic(const FisherSpectrum& sp, double yn1, double yn2) {
  if (!(yn1 > 0.0) || !(yn2 > 0.0)) throw config_error("ratios must be positive");
  SpectralFunctional f = SpectralFunctional::lrt(yn1, yn2);
  return lss(f, sp) - std::log(yn1 + yn2);
}

}  // namespace flss
