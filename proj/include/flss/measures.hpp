#pragma once

// Discrete spectral measures, dimension ratios, entry-moment parameters and
// the test functions applied to eigenvalues.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace flss {

struct Atom {
  double value = 0.0;
  double weight = 0.0;
};

// A finite mixture of point masses on [0, inf), total mass 1.
class SpectralMeasure {
 public:
  explicit SpectralMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw config_error("spectral measure needs at least one atom");
    double wsum = 0.0;
    for (const auto& a : atoms_) {
      if (!(a.value >= 0.0) || !std::isfinite(a.value))
        throw config_error("spectral measure atom value must be finite and >= 0");
      if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
        throw config_error("spectral measure atom weight must be finite and >= 0");
      wsum += a.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
      throw config_error("spectral measure weights must sum to 1 (got " +
                         std::to_string(wsum) + ")");
    std::sort(atoms_.begin(), atoms_.end(),
              [](const Atom& a, const Atom& b) { return a.value < b.value; });
    // merge exactly repeated support points
    std::vector<Atom> merged;
    for (const auto& a : atoms_) {
      if (!merged.empty() && merged.back().value == a.value)
        merged.back().weight += a.weight;
      else
        merged.push_back(a);
    }
    atoms_ = std::move(merged);
  }

  static SpectralMeasure point_mass(double value) {
    return SpectralMeasure({Atom{value, 1.0}});
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double min_value() const { return atoms_.front().value; }
  double max_value() const { return atoms_.back().value; }

  template <class F>
  auto integrate(F&& g) const -> decltype(g(1.0)) {
    decltype(g(1.0)) acc{};
    for (const auto& a : atoms_) acc += a.weight * g(a.value);
    return acc;
  }

  bool operator==(const SpectralMeasure& o) const {
    if (atoms_.size() != o.atoms_.size()) return false;
    for (std::size_t i = 0; i < atoms_.size(); ++i)
      if (atoms_[i].value != o.atoms_[i].value || atoms_[i].weight != o.atoms_[i].weight)
        return false;
    return true;
  }

 private:
  std::vector<Atom> atoms_;
};

// Canonicalizes a raw atom list: rescales weights to total 1, merges
// duplicate support points, sorts ascending. Weights may arrive unnormalized
// (e.g. raw eigenvalue multiplicities).
inline SpectralMeasure normalize_measure(std::vector<Atom> raw) {
  if (raw.empty()) throw config_error("spectral measure needs at least one atom");
  double wsum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Atom& a = raw[i];
    if (!(a.value >= 0.0) || !std::isfinite(a.value))
      throw config_error("atom " + std::to_string(i) + ": value " +
                         std::to_string(a.value) + " must be finite and >= 0");
    if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
      throw config_error("atom " + std::to_string(i) + ": weight " +
                         std::to_string(a.weight) + " must be finite and >= 0");
    wsum += a.weight;
  }
  if (!(wsum > 0.0)) throw config_error("spectral measure needs positive total weight");
  if (std::abs(wsum - 1.0) > 1e-12) {
    for (auto& a : raw) a.weight /= wsum;
    // the division can leave the total a few ulps off; settle it on one atom
    double post = 0.0;
    for (const auto& a : raw) post += a.weight;
    raw.back().weight += 1.0 - post;
  }
  return SpectralMeasure(std::move(raw));
}

// Dimension-to-sample-size ratios. The (y1, y2) slots feed the asymptotic
// formulas (contours, mean, covariance); the (yn1, yn2) slots feed the
// finite-sample centering term. Most callers keep the two pairs equal.
struct AspectRatios {
  double y1 = 0.0, y2 = 0.0;
  double yn1 = 0.0, yn2 = 0.0;

  AspectRatios(double y1_, double y2_) : AspectRatios(y1_, y2_, y1_, y2_) {}
  AspectRatios(double y1_, double y2_, double yn1_, double yn2_)
      : y1(y1_), y2(y2_), yn1(yn1_), yn2(yn2_) {
    auto check = [](double a, double b, const char* tag) {
      if (!(a > 0.0) || !std::isfinite(a))
        throw config_error(std::string(tag) + ": first ratio must be finite and > 0");
      if (!(b > 0.0) || !(b < 1.0))
        throw config_error(std::string(tag) + ": second ratio must lie in (0, 1)");
    };
    check(y1, y2, "ratios");
    check(yn1, yn2, "finite-sample ratios");
  }

  static AspectRatios from_dims(int p, int n1, int n2) {
    if (p <= 0 || n1 <= 0 || n2 <= 0) throw config_error("dimensions must be positive");
    if (n2 <= p) throw config_error("n2 must exceed p (second ratio below 1)");
    double a = double(p) / n1, b = double(p) / n2;
    return AspectRatios(a, b);
  }

  double h_sq() const { return y1 + y2 - y1 * y2; }

  AspectRatios asymptotic_view() const { return AspectRatios(y1, y2); }
  AspectRatios finite_sample_view() const { return AspectRatios(yn1, yn2); }
};

// Standardized entry-moment parameters: kappa = 2 for real entries, 1 for
// complex entries with EX^2 = 0; beta is the fourth-cumulant excess
// E|X|^4 - 1 - kappa. Separate values for the two data arrays.
struct MomentParams {
  double kappa = 2.0;
  double beta_x = 0.0;
  double beta_y = 0.0;

  MomentParams() = default;
  MomentParams(double kappa_, double bx, double by)
      : kappa(kappa_), beta_x(bx), beta_y(by) {
    if (kappa != 1.0 && kappa != 2.0) throw config_error("kappa must be 1 or 2");
    if (!(beta_x >= -kappa) || !(beta_y >= -kappa))
      throw config_error("beta must be >= -kappa");
  }
};

// Test function f applied to eigenvalues. Complex evaluation uses the
// principal branch; logarithmic kinds are undefined on (-inf, 0].
class SpectralFunctional {
 public:
  enum class Kind { Log, Power, LogLinear, LRT, Combo };

  static SpectralFunctional log_f() { return SpectralFunctional(Kind::Log); }

  static SpectralFunctional power(int k) {
    if (k < 0) throw config_error("power exponent must be >= 0");
    SpectralFunctional f(Kind::Power);
    f.k_ = k;
    return f;
  }

  static SpectralFunctional log_linear(double a, double b) {
    if (!(b > 0.0)) throw config_error("log_linear needs slope > 0");
    SpectralFunctional f(Kind::LogLinear);
    f.a_ = a;
    f.b_ = b;
    return f;
  }

  // f(x) = log(y1 + y2 x) - y2/(y1+y2) * log(x), the two-sample likelihood
  // ratio integrand at ratios (y1, y2).
  static SpectralFunctional lrt(double y1, double y2) {
    if (!(y1 > 0.0) || !(y2 > 0.0)) throw config_error("lrt ratios must be > 0");
    SpectralFunctional f(Kind::LRT);
    f.a_ = y1;
    f.b_ = y2;
    return f;
  }

  static SpectralFunctional combo(std::vector<std::pair<double, SpectralFunctional>> terms) {
    if (terms.empty()) throw config_error("linear combination needs at least one term");
    SpectralFunctional f(Kind::Combo);
    f.terms_ = std::make_shared<std::vector<std::pair<double, SpectralFunctional>>>(std::move(terms));
    return f;
  }

  Kind kind() const { return kind_; }
  int power_exponent() const { return k_; }

  double operator()(double x) const {
    switch (kind_) {
      case Kind::Log:
        require_positive(x);
        return std::log(x);
      case Kind::Power:
        return ipow(x, k_);
      case Kind::LogLinear: {
        double w = a_ + b_ * x;
        require_positive(w);
        return std::log(w);
      }
      case Kind::LRT: {
        require_positive(x);
        return std::log(a_ + b_ * x) - b_ / (a_ + b_) * std::log(x);
      }
      case Kind::Combo: {
        double s = 0.0;
        for (const auto& [c, g] : *terms_) s += c * g(x);
        return s;
      }
    }
    return 0.0;
  }

  cplx operator()(cplx z) const {
    switch (kind_) {
      case Kind::Log:
        require_off_cut(z);
        return std::log(z);
      case Kind::Power:
        return ipow(z, k_);
      case Kind::LogLinear: {
        cplx w = a_ + b_ * z;
        require_off_cut(w);
        return std::log(w);
      }
      case Kind::LRT: {
        require_off_cut(z);
        cplx w = a_ + b_ * z;
        require_off_cut(w);
        return std::log(w) - b_ / (a_ + b_) * std::log(z);
      }
      case Kind::Combo: {
        cplx s = 0.0;
        for (const auto& [c, g] : *terms_) s += c * g(z);
        return s;
      }
    }
    return 0.0;
  }

  cplx deriv(cplx z) const {
    switch (kind_) {
      case Kind::Log:
        require_nonzero(z);
        return 1.0 / z;
      case Kind::Power:
        return k_ == 0 ? cplx(0.0) : cplx(double(k_)) * ipow(z, k_ - 1);
      case Kind::LogLinear:
        require_nonzero(a_ + b_ * z);
        return b_ / (a_ + b_ * z);
      case Kind::LRT:
        require_nonzero(z);
        require_nonzero(a_ + b_ * z);
        return b_ / (a_ + b_ * z) - b_ / (a_ + b_) / z;
      case Kind::Combo: {
        cplx s = 0.0;
        for (const auto& [c, g] : *terms_) s += c * g.deriv(z);
        return s;
      }
    }
    return 0.0;
  }

  double deriv(double x) const {
    switch (kind_) {
      case Kind::Log:
        require_positive(x);
        return 1.0 / x;
      case Kind::Power:
        return k_ == 0 ? 0.0 : double(k_) * ipow(x, k_ - 1);
      case Kind::LogLinear:
        require_positive(a_ + b_ * x);
        return b_ / (a_ + b_ * x);
      case Kind::LRT:
        require_positive(x);
        return b_ / (a_ + b_ * x) - b_ / (a_ + b_) / x;
      case Kind::Combo: {
        double s = 0.0;
        for (const auto& [c, g] : *terms_) s += c * g.deriv(x);
        return s;
      }
    }
    return 0.0;
  }

  // Infimum of admissible real arguments (branch cut right end).
  double real_domain_min() const {
    switch (kind_) {
      case Kind::Log:
      case Kind::LRT:
        return 0.0;
      case Kind::LogLinear:
        return -a_ / b_;
      case Kind::Power:
        return -std::numeric_limits<double>::infinity();
      case Kind::Combo: {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& [c, g] : *terms_) {
          (void)c;
          m = std::max(m, g.real_domain_min());
        }
        return m;
      }
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::Log:
        return "log";
      case Kind::Power:
        return "power" + std::to_string(k_);
      case Kind::LogLinear: {
        std::ostringstream os;
        os << "log_linear(" << a_ << "," << b_ << ")";
        return os.str();
      }
      case Kind::LRT: {
        std::ostringstream os;
        os << "lrt(" << a_ << "," << b_ << ")";
        return os.str();
      }
      case Kind::Combo: {
        std::string s = "combo[";
        bool first = true;
        for (const auto& [c, g] : *terms_) {
          if (!first) s += "+";
          first = false;
          std::ostringstream os;
          os << c << "*" << g.name();
          s += os.str();
        }
        return s + "]";
      }
    }
    return "?";
  }

 private:
  explicit SpectralFunctional(Kind k) : kind_(k) {}

  static void require_positive(double x) {
    if (!(x > 0.0)) throw numeric_error("functional", "log argument not positive");
  }
  static void require_off_cut(cplx z) {
    if (z.imag() == 0.0 && z.real() <= 0.0)
      throw numeric_error("functional", "evaluation on the log branch cut");
  }
  static void require_nonzero(cplx z) {
    if (z == cplx(0.0)) throw numeric_error("functional", "derivative pole");
  }

  static double ipow(double x, int k) {
    double r = 1.0, b = x;
    for (int e = k; e > 0; e >>= 1) {
      if (e & 1) r *= b;
      b *= b;
    }
    return r;
  }
  static cplx ipow(cplx x, int k) {
    cplx r = 1.0, b = x;
    for (int e = k; e > 0; e >>= 1) {
      if (e & 1) r *= b;
      b *= b;
    }
    return r;
  }

  Kind kind_;
  int k_ = 0;
  double a_ = 0.0, b_ = 0.0;
  std::shared_ptr<std::vector<std::pair<double, SpectralFunctional>>> terms_;
};

}  // namespace flss
