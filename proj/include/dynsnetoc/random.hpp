#pragma once

// Random-variate generation and densities for the distributions used by the
// dynamic network model: Gamma (rate parameterization), Poisson, alias-table
// categoricals, the exponentially tilted BFRY law and the epsilon-truncated
// generalized gamma process (GGP).

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "errors.hpp"

namespace dynsnetoc {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  for (;;) {
    double u = static_cast<double>(rng() >> 11) * scale;
    if (u > 0.0) return u;
  }
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  return nd(rng);
}

// Gamma(shape, rate): density proportional to x^(shape-1) exp(-rate x).
// Every Gamma draw in the project goes through this helper.
inline double gamma_sample(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw ParameterDomainError("gamma_sample: shape and rate must be positive and finite (shape=" +
                               std::to_string(shape) + ", rate=" + std::to_string(rate) + ")");
  }
  std::gamma_distribution<double> gd(shape, 1.0 / rate);
  double x = gd(rng);
  // Tiny shapes can underflow to zero; the support is (0, inf).
  if (x <= 0.0) x = std::numeric_limits<double>::min();
  return x;
}

inline std::uint64_t poisson_sample(double mean, Rng& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw ParameterDomainError("poisson_sample: mean must be finite and non-negative");
  }
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::uint64_t> pd(mean);
  return pd(rng);
}

// log density of Gamma(shape, rate) at x.
inline double gamma_log_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

// Walker/Vose alias table over non-negative weights; O(1) draws.
class AliasTable {
public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterDomainError("AliasTable: weights must be finite and >= 0");
      total += w;
    }
    if (n == 0 || !(total > 0.0)) throw ParameterDomainError("AliasTable: total weight must be positive");
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    small.reserve(n);
    large.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      std::size_t s = small.back();
      small.pop_back();
      std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::size_t i : large) prob_[i] = 1.0;
    for (std::size_t i : small) prob_[i] = 1.0;  // numerical leftovers
  }

  std::size_t size() const noexcept { return prob_.size(); }

  std::size_t sample(Rng& rng) const {
    const std::size_t n = prob_.size();
    double u = uniform_open(rng) * static_cast<double>(n);
    auto column = static_cast<std::size_t>(u);
    if (column >= n) column = n - 1;
    return (u - static_cast<double>(column)) < prob_[column] ? column : alias_[column];
  }

private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

// ---------------------------------------------------------------------------
// Generalized gamma process
// ---------------------------------------------------------------------------

// GGP(alpha, sigma, tau) with Levy density
//   rho0(w) = w^(-1-sigma) exp(-tau w) / Gamma(1 - sigma).
// sigma in (0,1) is the infinite-activity (sparse) regime, sigma < 0 finite activity.
struct GgpParams {
  double alpha = 1.0;
  double sigma = 0.5;
  double tau = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterDomainError("GGP: alpha must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterDomainError("GGP: tau must be positive");
    if (!(sigma < 1.0) || !std::isfinite(sigma)) throw ParameterDomainError("GGP: sigma must be < 1");
    if (sigma == 0.0) throw ParameterDomainError("GGP: sigma = 0 (gamma process) is not supported");
  }
};

inline double ggp_log_levy_density(double w, double sigma, double tau) {
  return -(1.0 + sigma) * std::log(w) - tau * w - std::lgamma(1.0 - sigma);
}

namespace detail {

// int_eps^inf w^(-1-sigma) exp(-tau w) dw by quadrature after w = eps * exp(u).
inline double levy_tail_quadrature(double sigma, double tau, double eps) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [&](double u) {
    double w = eps * std::exp(u);
    if (!std::isfinite(w)) return 0.0;
    return std::exp(-sigma * std::log(w) - tau * w);
  };
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

}  // namespace detail

// Tail Levy intensity rho0_bar(eps) = int_eps^inf rho0(w) dw.
//
// Evaluated through the upper incomplete gamma function
//   rho0_bar(eps) = tau^sigma Gamma(-sigma, tau eps) / Gamma(1 - sigma),
// reflecting Gamma(-sigma, x) to a positive first argument by one integration
// by parts when sigma > 0. Adaptive quadrature is used when |sigma| < 1e-2.
inline double ggp_tail_intensity(const GgpParams& p, double eps) {
  p.validate();
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ParameterDomainError("ggp_tail_intensity: epsilon must be >= 0");
  const double sigma = p.sigma, tau = p.tau;
  if (eps == 0.0) {
    if (sigma > 0.0) return std::numeric_limits<double>::infinity();
    return std::pow(tau, sigma) / (-sigma);
  }
  if (std::abs(sigma) < 1e-2) {
    return detail::levy_tail_quadrature(sigma, tau, eps) / std::tgamma(1.0 - sigma);
  }
  const double x = tau * eps;
  double upper;  // Gamma(-sigma, x)
  if (sigma > 0.0) {
    upper = (std::exp(-sigma * std::log(x) - x) - boost::math::tgamma(1.0 - sigma, x)) / sigma;
  } else {
    upper = boost::math::tgamma(-sigma, x);
  }
  return std::pow(tau, sigma) * upper / std::tgamma(1.0 - sigma);
}

// The same tail intensity evaluated purely by quadrature (cross-check path).
inline double ggp_tail_intensity_quadrature(const GgpParams& p, double eps) {
  p.validate();
  if (!(eps > 0.0)) throw ParameterDomainError("ggp_tail_intensity_quadrature: epsilon must be > 0");
  return detail::levy_tail_quadrature(p.sigma, p.tau, eps) / std::tgamma(1.0 - p.sigma);
}

// Laplace exponent of the GGP total mass: -log E[exp(-s W)] = (alpha/sigma)((tau+s)^sigma - tau^sigma).
inline double ggp_laplace_exponent(const GgpParams& p, double s) {
  p.validate();
  return p.alpha / p.sigma * (std::pow(p.tau + s, p.sigma) - std::pow(p.tau, p.sigma));
}

struct GgpAtom {
  double w0;
  double theta;
};

// Maximum proposals per accepted jump before the sampler reports failure.
inline constexpr std::size_t kMaxRejectionAttempts = 10'000'000;

namespace detail {

// One jump from rho0 restricted to (eps, inf), normalized.
inline double ggp_restricted_jump(const GgpParams& p, double eps, Rng& rng) {
  const double sigma = p.sigma, tau = p.tau;
  for (std::size_t attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
    if (sigma > 0.0) {
      // Pareto(sigma, eps) proposal, accept with exp(-tau (w - eps)).
      double w = eps * std::exp(-std::log(uniform_open(rng)) / sigma);
      if (uniform_open(rng) < std::exp(-tau * (w - eps))) return w;
    } else {
      // Finite activity: rho0 restricted to (0, inf) is Gamma(-sigma, tau).
      double w = gamma_sample(-sigma, tau, rng);
      if (w > eps) return w;
    }
  }
  throw NumericError("ggp_truncated_sample: rejection sampler acceptance rate too low");
}

}  // namespace detail

// Atoms of the Poisson process with mean measure rho0(dw) dtheta 1{w > eps, theta in [0, alpha]}.
inline std::vector<GgpAtom> ggp_truncated_sample(const GgpParams& p, double eps, Rng& rng) {
  p.validate();
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ParameterDomainError("ggp_truncated_sample: epsilon must be >= 0");
  if (eps == 0.0 && p.sigma > 0.0) {
    throw ParameterDomainError("ggp_truncated_sample: infinite activity (sigma > 0) requires epsilon > 0");
  }
  const double mean_count = p.alpha * ggp_tail_intensity(p, eps);
  const std::uint64_t count = poisson_sample(mean_count, rng);
  std::vector<GgpAtom> atoms;
  atoms.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    double w = detail::ggp_restricted_jump(p, eps, rng);
    double theta = p.alpha * uniform_open(rng);
    atoms.push_back({w, theta});
  }
  return atoms;
}

// ---------------------------------------------------------------------------
// Exponentially tilted BFRY
// ---------------------------------------------------------------------------

// etBFRY(alpha/L, tau, sigma): finite-dimensional iid approximation to GGP jumps.
struct EtBfryParams {
  double alpha = 1.0;
  std::size_t truncation_level = 1;
  double tau = 1.0;
  double sigma = 0.5;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterDomainError("etBFRY: alpha must be positive");
    if (truncation_level < 1) throw ParameterDomainError("etBFRY: truncation level must be >= 1");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterDomainError("etBFRY: tau must be positive");
    if (!(sigma > 0.0 && sigma < 1.0)) throw ParameterDomainError("etBFRY: sigma must lie in (0, 1)");
  }

  // (sigma L / alpha)^(1/sigma)
  double cutoff_rate() const {
    return std::exp((std::log(sigma) + std::log(static_cast<double>(truncation_level)) - std::log(alpha)) / sigma);
  }

  // log[(tau + c)^sigma - tau^sigma], computed as sigma log tau + log expm1(sigma log1p(c / tau)).
  double log_normalizer_gap() const {
    const double c = cutoff_rate();
    return sigma * std::log(tau) + std::log(std::expm1(sigma * std::log1p(c / tau)));
  }
};

// log g(w) for
//   g(w) = sigma w^(-1-sigma) e^(-tau w) (1 - e^(-c w)) / (Gamma(1-sigma) [(tau+c)^sigma - tau^sigma]),
//   c = (sigma L / alpha)^(1/sigma).
inline double etbfry_log_density(double w, const EtBfryParams& p) {
  if (!(w > 0.0)) throw ParameterDomainError("etbfry_log_density: w must be positive");
  p.validate();
  const double c = p.cutoff_rate();
  return std::log(p.sigma) - (1.0 + p.sigma) * std::log(w) - p.tau * w + std::log(-std::expm1(-c * w)) -
         std::lgamma(1.0 - p.sigma) - p.log_normalizer_gap();
}

// Exact draw. The density is the mixture
//   g(w) = int_0^c q(s) Gamma(w; 1 - sigma, tau + s) ds,  q(s) proportional to (tau + s)^(sigma - 1),
// so s is drawn by inverting its CDF and w from the Gamma conditional.
inline double etbfry_sample(const EtBfryParams& p, Rng& rng) {
  p.validate();
  const double c = p.cutoff_rate();
  const double u = uniform_open(rng);
  // s = (tau^sigma + u [(tau+c)^sigma - tau^sigma])^(1/sigma) - tau, written without cancellation.
  const double ratio = u * std::expm1(p.sigma * std::log1p(c / p.tau));
  const double s = p.tau * std::expm1(std::log1p(ratio) / p.sigma);
  return gamma_sample(1.0 - p.sigma, p.tau + s, rng);
}

}  // namespace dynsnetoc
