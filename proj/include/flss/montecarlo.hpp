#pragma once

// Counter-based simulation of two-sample ratio-matrix ensembles and Monte
// Carlo harnesses that check the limiting-law predictions. Every entry is a
// pure function of (seed, linear index, replication, stream tag), so results
// are identical for any thread count.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "contour.hpp"
#include "fisher.hpp"
#include "inference.hpp"
#include "measures.hpp"

namespace flss {
namespace rng {

// Philox4x32-10 block function: 128-bit counter, 64-bit key.
inline std::array<std::uint32_t, 4> philox(std::uint64_t seed, std::uint32_t c0,
                                           std::uint32_t c1, std::uint32_t c2,
                                           std::uint32_t c3) {
  std::uint32_t k0 = std::uint32_t(seed), k1 = std::uint32_t(seed >> 32);
  std::uint32_t x0 = c0, x1 = c1, x2 = c2, x3 = c3;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t p0 = std::uint64_t(0xD2511F53u) * x0;
    std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * x2;
    std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    x0 = hi1 ^ x1 ^ k0;
    x1 = lo1;
    x2 = hi0 ^ x3 ^ k1;
    x3 = lo0;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return {x0, x1, x2, x3};
}

// two uniforms in (0,1), never exactly 0 or 1, from one counter block
inline std::pair<double, double> uniform2(std::uint64_t seed, std::uint64_t linear,
                                          std::uint32_t rep, std::uint32_t word3) {
  auto w = philox(seed, std::uint32_t(linear), std::uint32_t(linear >> 32), rep, word3);
  auto tod = [](std::uint32_t a, std::uint32_t b) {
    std::uint64_t x = (std::uint64_t(a) << 32) | b;
    return double(x >> 11) * 0x1p-53 + 0x1p-54;
  };
  return {tod(w[0], w[1]), tod(w[2], w[3])};
}

// standard normal pair from one block
inline std::pair<double, double> normal2(std::uint64_t seed, std::uint64_t linear,
                                         std::uint32_t rep, std::uint32_t word3) {
  auto [u1, u2] = uniform2(seed, linear, rep, word3);
  double rad = std::sqrt(-2.0 * std::log(u1));
  return {rad * std::cos(2.0 * std::numbers::pi * u2),
          rad * std::sin(2.0 * std::numbers::pi * u2)};
}

}  // namespace rng

// Entry distributions, all standardized to mean 0 and E|X|^2 = 1.
enum class EntryLaw { GaussianReal, GaussianComplex, TwoPoint, ScaledStudent };

struct LawSpec {
  EntryLaw law = EntryLaw::GaussianReal;
  double beta = 0.0;  // TwoPoint target excess kurtosis
  int df = 12;        // ScaledStudent degrees of freedom

  void validate() const {
    if (law == EntryLaw::TwoPoint && !(std::isfinite(beta) && beta >= -2.0))
      throw config_error("two-point law needs finite beta >= -2");
    if (law == EntryLaw::ScaledStudent && (df < 9 || df > 120))
      throw config_error("scaled-t law supports 9 <= df <= 120");
  }

  bool complex_entries() const { return law == EntryLaw::GaussianComplex; }

  MomentParams moments() const {
    validate();
    switch (law) {
      case EntryLaw::GaussianReal:
        return MomentParams(2.0, 0.0, 0.0);
      case EntryLaw::GaussianComplex:
        return MomentParams(1.0, 0.0, 0.0);
      case EntryLaw::TwoPoint:
        return MomentParams(2.0, beta, beta);
      case EntryLaw::ScaledStudent: {
        double b = 6.0 / (df - 4.0);
        return MomentParams(2.0, b, b);
      }
    }
    throw config_error("unknown entry law");
  }

  std::string name() const {
    switch (law) {
      case EntryLaw::GaussianReal:
        return "gaussian";
      case EntryLaw::GaussianComplex:
        return "gaussian-complex";
      case EntryLaw::TwoPoint:
        return "two-point(" + std::to_string(beta) + ")";
      case EntryLaw::ScaledStudent:
        return "scaled-t(" + std::to_string(df) + ")";
    }
    return "?";
  }
};

namespace detail {

inline constexpr std::uint32_t stream_word(std::uint32_t tag, std::uint32_t subslot) {
  return tag | (subslot << 8);
}

}  // namespace detail

inline double real_entry(const LawSpec& spec, std::uint64_t seed, std::uint64_t linear,
                         std::uint32_t rep, std::uint32_t tag) {
  switch (spec.law) {
    case EntryLaw::GaussianReal:
      return rng::normal2(seed, linear, rep, detail::stream_word(tag, 0)).first;
    case EntryLaw::TwoPoint: {
      double q = 0.5 * (1.0 - std::sqrt(1.0 - 4.0 / (6.0 + spec.beta)));
      double u = rng::uniform2(seed, linear, rep, detail::stream_word(tag, 0)).first;
      return u < q ? std::sqrt((1.0 - q) / q) : -std::sqrt(q / (1.0 - q));
    }
    case EntryLaw::ScaledStudent: {
      const int need = spec.df + 1;  // one numerator plus df chi-square normals
      const int blocks = (need + 1) / 2;
      double z0 = 0.0, w = 0.0;
      int got = 0;
      for (int s = 0; s < blocks; ++s) {
        auto nb = rng::normal2(seed, linear, rep, detail::stream_word(tag, std::uint32_t(s)));
        for (double zv : {nb.first, nb.second}) {
          if (got >= need) break;
          if (got == 0)
            z0 = zv;
          else
            w += zv * zv;
          ++got;
        }
      }
      return z0 * std::sqrt((spec.df - 2.0) / w);
    }
    case EntryLaw::GaussianComplex:
      throw config_error("complex law used in a real-entry draw");
  }
  throw config_error("unknown entry law");
}

inline cplx complex_entry(const LawSpec& spec, std::uint64_t seed, std::uint64_t linear,
                          std::uint32_t rep, std::uint32_t tag) {
  if (spec.law != EntryLaw::GaussianComplex)
    throw config_error("real law used in a complex-entry draw");
  auto [a, b] = rng::normal2(seed, linear, rep, detail::stream_word(tag, 0));
  return cplx(a, b) / std::numbers::sqrt2;
}

// Entries are indexed column-major, matching the storage order.
inline Eigen::MatrixXd sim_matrix(const LawSpec& spec, int rows, int cols, std::uint64_t seed,
                                  std::uint32_t rep, std::uint32_t tag, unsigned threads = 1) {
  spec.validate();
  if (rows < 1 || cols < 1) throw config_error("matrix dimensions must be positive");
  Eigen::MatrixXd M(rows, cols);
  parallel_for(std::size_t(rows) * cols, threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t l = b; l < e; ++l) M.data()[l] = real_entry(spec, seed, l, rep, tag);
  });
  return M;
}

inline Eigen::MatrixXcd sim_matrix_complex(const LawSpec& spec, int rows, int cols,
                                           std::uint64_t seed, std::uint32_t rep,
                                           std::uint32_t tag, unsigned threads = 1) {
  spec.validate();
  if (rows < 1 || cols < 1) throw config_error("matrix dimensions must be positive");
  Eigen::MatrixXcd M(rows, cols);
  parallel_for(std::size_t(rows) * cols, threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t l = b; l < e; ++l) M.data()[l] = complex_entry(spec, seed, l, rep, tag);
  });
  return M;
}

// p population eigenvalues whose empirical distribution matches the atom
// weights by the largest-remainder rule (ties broken toward earlier atoms).
inline Eigen::VectorXd spectrum_to_eigs(const SpectralMeasure& H, int p) {
  if (p < 1) throw config_error("p must be >= 1");
  const auto& atoms = H.atoms();
  std::vector<int> cnt(atoms.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  rem.reserve(atoms.size());
  long used = 0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    double ideal = atoms[k].weight * p;
    cnt[k] = int(std::floor(ideal + 1e-12));
    used += cnt[k];
    rem.push_back({ideal - cnt[k], k});
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; used < p; i = (i + 1) % rem.size(), ++used) ++cnt[rem[i].second];
  for (std::size_t i = rem.size(); used > p;) {
    --i;
    if (cnt[rem[i].second] > 0) {
      --cnt[rem[i].second];
      --used;
    }
    if (i == 0) i = rem.size();
  }
  Eigen::VectorXd out(p);
  int pos = 0;
  for (std::size_t k = 0; k < atoms.size(); ++k)
    for (int c = 0; c < cnt[k]; ++c) out[pos++] = atoms[k].value;
  return out;
}

// A two-sample draw: X (p x n1) and Y (p x n2) standardized entry arrays,
// the first scaled by the square root of the population eigenvalues.
struct SimSpec {
  int p = 0, n1 = 0, n2 = 0;
  LawSpec law{};
  SpectralMeasure population = SpectralMeasure::point_mass(1.0);
  std::uint64_t seed = 1;
  bool centered = false;  // sample-covariance convention for the draws
  // When set, the first population covariance is U diag(t) U^T with U a
  // deterministic random orthogonal frame; the ratio spectrum is unchanged
  // (the second population stays the identity) but entry coupling differs
  // for non-Gaussian laws. Default: diagonal.
  std::optional<std::uint64_t> rotation_seed{};

  void validate() const {
    if (p < 1 || n1 < 2 || n2 < 2) throw config_error("need p >= 1 and n_i >= 2");
    if (n2 <= p) throw config_error("need n2 > p");
    law.validate();
  }
};

struct SimulatedPair {
  Eigen::MatrixXd X, Y;  // standardized arrays before population scaling
  FisherSpectrum spectrum;
};

namespace detail {

template <typename Mat>
inline FisherSpectrum fisher_from_arrays(const SimSpec& s, Mat data1, const Mat& Y) {
  auto [B1, B2] = sample_covariances(data1, Y, s.centered);
  return fisher_eigenvalues(B1, B2, s.n1, s.n2);
}

}  // namespace detail

// Deterministic orthogonal frame: QR of a counter-stream Gaussian matrix with
// the sign convention diag(R) > 0.
inline Eigen::MatrixXd rotation_frame(int p, std::uint64_t seed) {
  Eigen::MatrixXd G = sim_matrix(LawSpec{}, p, p, seed, 0, 3, 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < p; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

inline FisherSpectrum simulate_fisher(const SimSpec& s, std::uint32_t rep,
                                      unsigned threads = 1) {
  s.validate();
  Eigen::VectorXd sq = spectrum_to_eigs(s.population, s.p).cwiseSqrt();
  if (s.law.complex_entries()) {
    if (s.rotation_seed) throw config_error("rotation supports real entry laws only");
    Eigen::MatrixXcd X = sim_matrix_complex(s.law, s.p, s.n1, s.seed, rep, 1, threads);
    Eigen::MatrixXcd Y = sim_matrix_complex(s.law, s.p, s.n2, s.seed, rep, 2, threads);
    Eigen::MatrixXcd data1 = sq.cast<cplx>().asDiagonal() * X;
    return detail::fisher_from_arrays(s, std::move(data1), Y);
  }
  Eigen::MatrixXd X = sim_matrix(s.law, s.p, s.n1, s.seed, rep, 1, threads);
  Eigen::MatrixXd Y = sim_matrix(s.law, s.p, s.n2, s.seed, rep, 2, threads);
  Eigen::MatrixXd data1;
  if (s.rotation_seed) {
    Eigen::MatrixXd U = rotation_frame(s.p, *s.rotation_seed);
    data1 = U * (sq.asDiagonal() * (U.transpose() * X));
  } else {
    data1 = sq.asDiagonal() * X;
  }
  return detail::fisher_from_arrays(s, std::move(data1), Y);
}

inline SimulatedPair simulate_pair_real(const SimSpec& s, std::uint32_t rep,
                                        unsigned threads = 1) {
  s.validate();
  if (s.law.complex_entries()) throw config_error("real-pair draw with a complex law");
  if (s.rotation_seed)
    throw config_error("the estimator data path supports the diagonal population only");
  SimulatedPair out;
  out.X = sim_matrix(s.law, s.p, s.n1, s.seed, rep, 1, threads);
  out.Y = sim_matrix(s.law, s.p, s.n2, s.seed, rep, 2, threads);
  Eigen::VectorXd sq = spectrum_to_eigs(s.population, s.p).cwiseSqrt();
  Eigen::MatrixXd data1 = sq.asDiagonal() * out.X;
  out.spectrum = detail::fisher_from_arrays(s, std::move(data1), out.Y);
  return out;
}

// Kernel-estimator attachment from raw matrices: X must carry iid standardized
// entries (population frame), Y the second sample; the whitening factor is the
// inverse square root of Y's covariance times the population scale.
inline EstimatorData make_estimator_data(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                         const SpectralMeasure& H) {
  if (X.rows() != Y.rows()) throw config_error("sample dimension mismatch");
  int p = int(X.rows());
  Eigen::MatrixXd B2 = (Y * Y.transpose()) / double(Y.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B2);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw numeric_error("estimator", "second sample covariance not positive definite");
  Eigen::VectorXd sq = spectrum_to_eigs(H, p).cwiseSqrt();
  EstimatorData ed;
  ed.X = X;
  ed.Q = es.operatorInverseSqrt() * sq.asDiagonal();
  ed.divisor = double(X.cols());
  return ed;
}

// Pipeline entry taking the raw pair directly; builds the attachment above
// when the fourth-moment correction needs it.
inline CLTSummary clt_summary(const SpectralMeasure& H, const AspectRatios& r,
                              const MomentParams& mom,
                              const std::vector<SpectralFunctional>& fs,
                              const CLTConfig& cfg, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Y) {
  if (mom.beta_x != 0.0) {
    EstimatorData ed = make_estimator_data(X, Y, H);
    return clt_summary(H, r, mom, fs, cfg, &ed);
  }
  return clt_summary(H, r, mom, fs, cfg, nullptr);
}

// ---------------------------------------------------------------------------
// Distribution checks.
// ---------------------------------------------------------------------------

// tail of the Kolmogorov distribution
inline double kolmogorov_q(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * double(k) * k * lambda * lambda);
    sum += (k % 2 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double stat = 0.0;
  double pvalue = 1.0;
};

inline KsResult ks_against_normal(std::vector<double> values, double mu, double sigma) {
  if (values.size() < 8) throw config_error("distribution check needs at least 8 samples");
  if (!(sigma > 0.0)) throw config_error("distribution check needs sigma > 0");
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double c = normal_cdf((values[i] - mu) / sigma);
    d = std::max(d, std::max(double(i + 1) / n - c, c - double(i) / n));
  }
  KsResult r;
  r.stat = d;
  r.pvalue = kolmogorov_q((std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d);
  return r;
}

// ---------------------------------------------------------------------------
// Experiment harnesses.
// ---------------------------------------------------------------------------

struct CLTExperimentConfig {
  int reps = 2000;
  unsigned threads = 1;
  CLTConfig clt{};
  bool keep_samples = true;
};

struct CLTExperimentResult {
  std::vector<std::string> functional_names;
  std::vector<double> predicted_mean;
  Eigen::MatrixXd predicted_cov;
  std::vector<double> empirical_mean, empirical_var, empirical_se;
  std::vector<KsResult> ks;
  std::vector<std::vector<double>> samples;  // per functional, successful reps in order
  int reps = 0, failed_reps = 0;
  double entry_kurtosis = 0.0;  // sample excess kurtosis from replication 0
  CLTSummary summary;
};

// Draws `reps` independent spectra, forms the centered statistics, and
// compares them with the limiting mean/covariance computed once up front.
inline CLTExperimentResult run_clt_experiment(const SimSpec& spec,
                                              const std::vector<SpectralFunctional>& fs,
                                              const CLTExperimentConfig& cfg = {}) {
  spec.validate();
  if (fs.empty()) throw config_error("need at least one functional");
  if (cfg.reps < 16) throw config_error("need at least 16 replications");

  MomentParams mom = spec.law.moments();
  double d1 = spec.centered ? spec.n1 - 1.0 : double(spec.n1);
  double d2 = spec.centered ? spec.n2 - 1.0 : double(spec.n2);
  AspectRatios r(spec.p / d1, spec.p / d2);

  CLTConfig ccfg = cfg.clt;
  ccfg.threads = cfg.threads;

  CLTExperimentResult res;
  if (mom.beta_x != 0.0) {
    if (spec.centered)
      throw config_error("the kernel estimator path supports the uncentered convention only");
    // estimator frame from replication 0
    SimulatedPair rep0 = simulate_pair_real(spec, 0, cfg.threads);
    EstimatorData ed = make_estimator_data(rep0.X, rep0.Y, spec.population);
    res.summary = clt_summary(spec.population, r, mom, fs, ccfg, &ed);
  } else {
    res.summary = clt_summary(spec.population, r, mom, fs, ccfg, nullptr);
  }

  const int F = int(fs.size());
  res.functional_names = res.summary.functional_names;
  res.predicted_mean = res.summary.mean;
  res.predicted_cov = res.summary.cov;
  std::vector<double> cent(F);
  for (int i = 0; i < F; ++i) cent[i] = double(spec.p) * res.summary.centering[i];

  // sample excess kurtosis of the raw entries, replication 0
  if (!spec.law.complex_entries()) {
    Eigen::MatrixXd X0 = sim_matrix(spec.law, spec.p, spec.n1, spec.seed, 0, 1, cfg.threads);
    double m2 = X0.array().square().mean();
    double m4 = X0.array().square().square().mean();
    res.entry_kurtosis = m4 / (m2 * m2) - 3.0;
  } else {
    Eigen::MatrixXcd X0 =
        sim_matrix_complex(spec.law, spec.p, spec.n1, spec.seed, 0, 1, cfg.threads);
    double m2 = X0.array().abs2().mean();
    double m4 = X0.array().abs2().square().mean();
    res.entry_kurtosis = m4 / (m2 * m2) - 2.0;
  }

  Eigen::MatrixXd vals(F, cfg.reps);
  std::vector<char> okr(std::size_t(cfg.reps), 0);
  parallel_for(std::size_t(cfg.reps), cfg.threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t rep = b; rep < e; ++rep) {
      try {
        FisherSpectrum sp = simulate_fisher(spec, std::uint32_t(rep), 1);
        for (int i = 0; i < F; ++i) vals(i, int(rep)) = lss(fs[i], sp) - cent[i];
        okr[rep] = 1;
      } catch (const numeric_error&) {
        okr[rep] = 0;
      }
    }
  });

  int ok_count = 0;
  for (char c : okr) ok_count += c;
  res.reps = cfg.reps;
  res.failed_reps = cfg.reps - ok_count;
  if (res.failed_reps * 100 > cfg.reps)
    throw numeric_error("montecarlo", "more than 1% of replications failed");
  if (ok_count < 8) throw numeric_error("montecarlo", "too few successful replications");

  res.empirical_mean.assign(F, 0.0);
  res.empirical_var.assign(F, 0.0);
  res.empirical_se.assign(F, 0.0);
  res.samples.assign(F, {});
  for (int i = 0; i < F; ++i) {
    kahan_sum s;
    std::vector<double>& keep = res.samples[i];
    keep.reserve(ok_count);
    for (int rep = 0; rep < cfg.reps; ++rep)
      if (okr[rep]) {
        s.add(vals(i, rep));
        keep.push_back(vals(i, rep));
      }
    res.empirical_mean[i] = s.value() / ok_count;
  }
  Eigen::MatrixXd ecov = Eigen::MatrixXd::Zero(F, F);
  for (int i = 0; i < F; ++i) {
    for (int j = i; j < F; ++j) {
      kahan_sum s;
      for (int rep = 0; rep < cfg.reps; ++rep)
        if (okr[rep])
          s.add((vals(i, rep) - res.empirical_mean[i]) * (vals(j, rep) - res.empirical_mean[j]));
      ecov(i, j) = ecov(j, i) = s.value() / (ok_count - 1);
    }
  }
  for (int i = 0; i < F; ++i) {
    res.empirical_var[i] = ecov(i, i);
    res.empirical_se[i] = std::sqrt(ecov(i, i) / ok_count);
  }
  res.ks.reserve(F);
  for (int i = 0; i < F; ++i)
    res.ks.push_back(ks_against_normal(res.samples[i], res.predicted_mean[i],
                                       std::sqrt(res.predicted_cov(i, i))));
  if (!cfg.keep_samples) res.samples.clear();
  res.predicted_cov = res.summary.cov;
  return res;
}

struct SizePowerConfig {
  int reps = 2000;
  unsigned threads = 1;
  CLTConfig clt{};
};

struct SizePowerResult {
  double reject_rate = 0.0;      // empirical frequency of z > threshold
  double predicted_power = 0.0;  // limit prediction at the same threshold
  double threshold = kRejectThreshold;
  int reps = 0, failed_reps = 0;
  TestParams null_params;
};

// Repeated equality tests on data drawn with population ratio spectrum
// spec.population (identity spectrum gives the empirical size). Samples are
// mean-centered, matching the test's convention.
inline SizePowerResult run_size_power_experiment(const SimSpec& spec,
                                                 const SizePowerConfig& cfg = {}) {
  spec.validate();
  if (cfg.reps < 16) throw config_error("need at least 16 replications");
  MomentParams mom = spec.law.moments();
  if (mom.beta_x != 0.0)
    throw config_error("test experiments support beta_x = 0 laws only");

  SizePowerResult res;
  res.null_params = make_test_params(spec.p, spec.n1, spec.n2,
                                     SpectralMeasure::point_mass(1.0), mom, cfg.clt);
  res.predicted_power =
      power_function(spec.population, spec.p, spec.n1, spec.n2, mom, cfg.clt,
                     kRejectThreshold, &res.null_params)
          .power;

  SimSpec s = spec;
  s.centered = true;
  std::vector<char> okr(std::size_t(cfg.reps), 0), rej(std::size_t(cfg.reps), 0);
  parallel_for(std::size_t(cfg.reps), cfg.threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t rep = b; rep < e; ++rep) {
      try {
        FisherSpectrum sp = simulate_fisher(s, std::uint32_t(rep), 1);
        TestReport tr = test_from_spectrum(sp, res.null_params);
        okr[rep] = 1;
        rej[rep] = tr.reject_at_5pct ? 1 : 0;
      } catch (const numeric_error&) {
        okr[rep] = 0;
      }
    }
  });
  int ok_count = 0, rej_count = 0;
  for (std::size_t i = 0; i < okr.size(); ++i) {
    ok_count += okr[i];
    rej_count += rej[i];
  }
  res.reps = cfg.reps;
  res.failed_reps = cfg.reps - ok_count;
  if (res.failed_reps * 100 > cfg.reps)
    throw numeric_error("montecarlo", "more than 1% of replications failed");
  if (ok_count < 16) throw numeric_error("montecarlo", "too few successful replications");
  res.reject_rate = double(rej_count) / ok_count;
  return res;
}

struct SizePowerPair {
  double size = 0.0;             // rejection rate under the null spec
  double power = 0.0;            // rejection rate under the alternative spec
  double predicted_power = 0.0;  // limit prediction for the alternative
  SizePowerResult null_run, alt_run;
};

// Paired experiment: empirical size under spec_null, empirical and predicted
// power under spec_alt. The two specs must share dimensions.
inline SizePowerPair run_size_power_experiment(const SimSpec& spec_null,
                                               const SimSpec& spec_alt,
                                               const SizePowerConfig& cfg = {}) {
  if (spec_null.p != spec_alt.p || spec_null.n1 != spec_alt.n1 ||
      spec_null.n2 != spec_alt.n2)
    throw config_error("null and alternative specs must share dimensions");
  SizePowerPair out;
  out.null_run = run_size_power_experiment(spec_null, cfg);
  out.alt_run = run_size_power_experiment(spec_alt, cfg);
  out.size = out.null_run.reject_rate;
  out.power = out.alt_run.reject_rate;
  out.predicted_power = out.alt_run.predicted_power;
  return out;
}

}  // namespace flss
