#pragma once

// Two-sample covariance equality testing and ratio-spectrum confidence
// intervals built on the limiting law of the log-ratio statistic.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "contour.hpp"
#include "density.hpp"
#include "fisher.hpp"
#include "measures.hpp"

namespace flss {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// one-sided 5% normal quantile used by the reject decision
inline constexpr double kRejectThreshold = 1.6449;
// cutoff used by the power prediction and interval scan defaults
inline constexpr double kCiThreshold = 1.64;

// Data-independent pieces of the standardized statistic for a given
// population ratio spectrum: the statistic centering and spread come from
// the limit pipeline run once, after which any number of spectra can be
// scored cheaply.
struct TestParams {
  int p = 0, n1 = 0, n2 = 0;
  double yn1 = 0.0, yn2 = 0.0;      // functional parameters p/n_i
  double yN1 = 0.0, yN2 = 0.0;      // pipeline ratios p/(n_i - 1)
  double limit_integral = 0.0;      // per-dimension integral of f against the limit density
  double mean_correction = 0.0;     // asymptotic mean of the centered statistic
  double variance = 0.0;            // asymptotic variance
  double log_shift = 0.0;           // additive constant folded into the statistic
  double null_centering = 0.0;      // p * limit_integral + mean_correction + log_shift

  double sd() const { return std::sqrt(variance); }
};

inline TestParams make_test_params(int p, int n1, int n2,
                                   const SpectralMeasure& H = SpectralMeasure::point_mass(1.0),
                                   const MomentParams& mom = {}, const CLTConfig& cfg = {}) {
  if (p < 1) throw config_error("p must be >= 1");
  if (n1 < 3 || n2 < 3) throw config_error("need n_i >= 3");
  if (n2 - 1 <= p) throw config_error("need n2 - 1 > p");
  TestParams tp;
  tp.p = p;
  tp.n1 = n1;
  tp.n2 = n2;
  tp.yn1 = double(p) / n1;
  tp.yn2 = double(p) / n2;
  tp.yN1 = double(p) / (n1 - 1);
  tp.yN2 = double(p) / (n2 - 1);
  AspectRatios r(tp.yN1, tp.yN2);
  SpectralFunctional f = SpectralFunctional::lrt(tp.yn1, tp.yn2);
  CLTSummary s = clt_summary(H, r, mom, {f}, cfg);
  tp.limit_integral = s.centering[0];
  tp.mean_correction = s.mean[0];
  tp.variance = s.cov(0, 0);
  tp.log_shift = -std::log(tp.yn1 + tp.yn2);
  tp.null_centering = double(p) * tp.limit_integral + tp.mean_correction + tp.log_shift;
  return tp;
}

struct TestReport {
  double t_stat = 0.0;  // raw log-ratio statistic
  double z = 0.0;       // standardized statistic, asymptotically standard normal
  double p_value = 1.0;
  bool reject_at_5pct = false;
  double threshold = kRejectThreshold;
  double null_centering = 0.0;
  double sd = 0.0;
  int p = 0, n1 = 0, n2 = 0;
  int zero_eigenvalues = 0;
};

inline TestReport test_from_spectrum(const FisherSpectrum& sp, const TestParams& tp) {
  TestReport r;
  r.p = tp.p;
  r.n1 = tp.n1;
  r.n2 = tp.n2;
  r.t_stat = lrt_statistic(sp, tp.yn1, tp.yn2);
  r.null_centering = tp.null_centering;
  r.sd = tp.sd();
  if (!(r.sd > 0.0)) throw numeric_error("test", "nonpositive variance in the null parameters");
  r.z = (r.t_stat - tp.null_centering) / r.sd;
  r.p_value = 1.0 - normal_cdf(r.z);
  r.reject_at_5pct = r.z > kRejectThreshold;
  r.zero_eigenvalues = sp.zero_count;
  return r;
}

// One-sided equality test from raw data arrays (rows = variables, columns =
// observations). Both samples are mean-centered with divisor n - 1. The
// alternative loads on the statistic's right tail.
template <typename Mat>
inline TestReport equality_test(const Mat& X, const Mat& Y, const MomentParams& mom = {},
                                const CLTConfig& cfg = {}) {
  if (mom.beta_x != 0.0)
    throw config_error(
        "equality_test supports beta_x = 0 only; the kernel estimator needs the "
        "simulation-frame data attachment");
  const int p = int(X.rows());
  const int n1 = int(X.cols()), n2 = int(Y.cols());
  TestParams tp = make_test_params(p, n1, n2, SpectralMeasure::point_mass(1.0), mom, cfg);
  auto [B1, B2] = sample_covariances(X, Y, true);
  FisherSpectrum sp = fisher_eigenvalues(B1, B2, n1, n2);
  return test_from_spectrum(sp, tp);
}

// Predicted asymptotic rejection probability of the level-alpha one-sided
// test when the population ratio spectrum is H_alt instead of the identity.
struct PowerResult {
  double power = 0.0;
  double shift = 0.0;  // standardized argument fed to the normal tail
  double z_alpha = kCiThreshold;
};

inline PowerResult power_function(const SpectralMeasure& H_alt, int p, int n1, int n2,
                                  const MomentParams& mom = {}, const CLTConfig& cfg = {},
                                  double z_alpha = kCiThreshold,
                                  const TestParams* null_params = nullptr) {
  TestParams tp0 = null_params ? *null_params : make_test_params(p, n1, n2, SpectralMeasure::point_mass(1.0), mom, cfg);
  TestParams tp1 = make_test_params(p, n1, n2, H_alt, mom, cfg);
  PowerResult pr;
  pr.z_alpha = z_alpha;
  pr.shift = (z_alpha * tp0.sd() + (tp0.null_centering - tp1.null_centering)) / tp1.sd();
  pr.power = 1.0 - normal_cdf(pr.shift);
  return pr;
}

// ---------------------------------------------------------------------------
// One-parameter families of population ratio spectra and interval estimation.
// ---------------------------------------------------------------------------

class ThetaFamily {
 public:
  enum class Kind { Scale, TwoAtom, Table };

  // H(theta) = point mass at theta (uniform scaling of the first population)
  static ThetaFamily scale() { return ThetaFamily(Kind::Scale, {}, 0.5); }

  // H(theta) = w1 at 1 plus (1 - w1) at theta
  static ThetaFamily two_atom(double w1 = 0.5) {
    if (!(w1 > 0.0) || !(w1 < 1.0)) throw config_error("two-atom weight must be in (0, 1)");
    return ThetaFamily(Kind::TwoAtom, {}, w1);
  }

  // H(theta) = user-supplied atoms with all values scaled by theta
  static ThetaFamily table(std::vector<Atom> base) {
    SpectralMeasure probe(base);  // validates weights and values
    (void)probe;
    return ThetaFamily(Kind::Table, std::move(base), 0.5);
  }

  SpectralMeasure at(double theta) const {
    if (!(theta > 0.0) || !std::isfinite(theta))
      throw config_error("theta must be finite and > 0");
    switch (kind_) {
      case Kind::Scale:
        return SpectralMeasure::point_mass(theta);
      case Kind::TwoAtom:
        return SpectralMeasure(std::vector<Atom>{{1.0, w1_}, {theta, 1.0 - w1_}});
      case Kind::Table: {
        std::vector<Atom> a = base_;
        for (auto& at : a) at.value *= theta;
        return SpectralMeasure(std::move(a));
      }
    }
    throw config_error("unknown family kind");
  }

  Kind kind() const { return kind_; }

  std::string name() const {
    switch (kind_) {
      case Kind::Scale:
        return "scale";
      case Kind::TwoAtom:
        return "two-atom";
      case Kind::Table:
        return "table";
    }
    return "?";
  }

 private:
  ThetaFamily(Kind k, std::vector<Atom> b, double w) : kind_(k), base_(std::move(b)), w1_(w) {}
  Kind kind_;
  std::vector<Atom> base_;
  double w1_;
};

// Per-theta null parameters along a grid; data-independent, so one table
// serves any number of observed statistics.
struct ThetaGridEntry {
  double theta = 0.0;
  bool ok = false;
  double null_centering = 0.0;
  double sd = 0.0;
  std::string error;
};

struct ThetaGridTable {
  std::vector<ThetaGridEntry> entries;
  int p = 0, n1 = 0, n2 = 0;
  double yn1 = 0.0, yn2 = 0.0;
};

inline ThetaGridTable theta_grid_table(const ThetaFamily& fam, double a, double b, int m,
                                       int p, int n1, int n2, const MomentParams& mom = {},
                                       const CLTConfig& cfg = {}) {
  if (!(a > 0.0) || !(b > a)) throw config_error("theta range must satisfy 0 < a < b");
  if (m < 1) throw config_error("theta grid needs m >= 1");
  ThetaGridTable tab;
  tab.p = p;
  tab.n1 = n1;
  tab.n2 = n2;
  tab.yn1 = double(p) / n1;
  tab.yn2 = double(p) / n2;
  tab.entries.reserve(std::size_t(m) + 1);
  int okc = 0;
  for (int j = 0; j <= m; ++j) {
    ThetaGridEntry e;
    e.theta = a + (b - a) * double(j) / m;
    try {
      TestParams tp = make_test_params(p, n1, n2, fam.at(e.theta), mom, cfg);
      e.null_centering = tp.null_centering;
      e.sd = tp.sd();
      e.ok = true;
      ++okc;
    } catch (const numeric_error& err) {
      e.error = err.what();
    }
    tab.entries.push_back(std::move(e));
  }
  if (okc == 0) throw numeric_error("ci", "pipeline failed at every theta grid point");
  return tab;
}

struct ThetaInterval {
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  bool empty = true;
  bool contiguous = true;  // no rejected or failed point strictly inside [lo, hi]
  int accepted = 0;
  double threshold = kCiThreshold;
  bool two_sided = false;
  double t_stat = 0.0;
  std::vector<double> theta;
  std::vector<double> z;
  std::vector<char> accept;
  std::vector<char> ok;
};

inline ThetaInterval interval_from_table(double t_stat, const ThetaGridTable& tab,
                                         double threshold = kCiThreshold,
                                         bool two_sided = false) {
  ThetaInterval ci;
  ci.threshold = threshold;
  ci.two_sided = two_sided;
  ci.t_stat = t_stat;
  const std::size_t n = tab.entries.size();
  ci.theta.resize(n);
  ci.z.assign(n, std::numeric_limits<double>::quiet_NaN());
  ci.accept.assign(n, 0);
  ci.ok.assign(n, 0);
  std::ptrdiff_t first = -1, last = -1;
  for (std::size_t j = 0; j < n; ++j) {
    const ThetaGridEntry& e = tab.entries[j];
    ci.theta[j] = e.theta;
    if (!e.ok) continue;
    ci.ok[j] = 1;
    double z = (t_stat - e.null_centering) / e.sd;
    ci.z[j] = z;
    bool acc = two_sided ? std::abs(z) <= threshold : z <= threshold;
    if (acc) {
      ci.accept[j] = 1;
      ++ci.accepted;
      if (first < 0) first = std::ptrdiff_t(j);
      last = std::ptrdiff_t(j);
    }
  }
  if (ci.accepted > 0) {
    ci.empty = false;
    ci.lo = ci.theta[std::size_t(first)];
    ci.hi = ci.theta[std::size_t(last)];
    for (std::ptrdiff_t j = first; j <= last; ++j)
      if (!ci.accept[std::size_t(j)]) ci.contiguous = false;
  }
  return ci;
}

inline ThetaInterval confidence_interval(double t_stat, const ThetaFamily& fam, double a,
                                         double b, int m, int p, int n1, int n2,
                                         const MomentParams& mom = {}, const CLTConfig& cfg = {},
                                         double threshold = kCiThreshold,
                                         bool two_sided = false) {
  ThetaGridTable tab = theta_grid_table(fam, a, b, m, p, n1, n2, mom, cfg);
  return interval_from_table(t_stat, tab, threshold, two_sided);
}

// Raw-data convenience: centered covariances, then the grid scan above.
template <typename Mat>
inline ThetaInterval confidence_interval(const Mat& X, const Mat& Y, const ThetaFamily& fam,
                                         double a, double b, int m,
                                         const MomentParams& mom = {}, const CLTConfig& cfg = {},
                                         double threshold = kCiThreshold,
                                         bool two_sided = false) {
  if (mom.beta_x != 0.0)
    throw config_error(
        "confidence_interval supports beta_x = 0 only; the kernel estimator needs the "
        "simulation-frame data attachment");
  const int p = int(X.rows());
  const int n1 = int(X.cols()), n2 = int(Y.cols());
  auto [B1, B2] = sample_covariances(X, Y, true);
  FisherSpectrum sp = fisher_eigenvalues(B1, B2, n1, n2);
  double t_stat = lrt_statistic(sp, double(p) / n1, double(p) / n2);
  return confidence_interval(t_stat, fam, a, b, m, p, n1, n2, mom, cfg, threshold, two_sided);
}

}  // namespace flss
