#pragma once

// Model core: hyperparameters, latent state, dynamic multigraph, the
// Gamma-Markov score transitions, the Poisson link likelihood and the
// approximate (etBFRY) log-posterior with its analytic gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "errors.hpp"
#include "random.hpp"

namespace dynsnetoc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Hyperparams {
  double alpha = 1.0;
  double sigma = 0.5;
  double tau = 1.0;
  double psi = 1.0;
  std::vector<double> a;  // community score shapes, length p
  std::vector<double> b;  // community score rates, length p
  bool tau_fixed = true;

  std::size_t p() const noexcept { return a.size(); }

  GgpParams ggp() const { return {alpha, sigma, tau}; }

  // Simulation accepts sigma in (-inf, 1) \ {0}; inference needs sigma in (0, 1).
  void validate(bool for_inference = false) const {
    auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!positive(alpha)) throw ParameterDomainError("hyperparams: alpha must be positive");
    if (!positive(tau)) throw ParameterDomainError("hyperparams: tau must be positive");
    if (!positive(psi)) throw ParameterDomainError("hyperparams: psi must be positive");
    if (!(sigma < 1.0) || sigma == 0.0 || !std::isfinite(sigma))
      throw ParameterDomainError("hyperparams: sigma must be in (-inf, 1) \\ {0}");
    if (for_inference && !(sigma > 0.0)) throw ParameterDomainError("hyperparams: inference requires sigma in (0, 1)");
    if (a.empty()) throw ShapeError("hyperparams: p must be >= 1");
    if (a.size() != b.size()) throw ShapeError("hyperparams: a and b must both have length p");
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!positive(a[k]) || !positive(b[k])) throw ParameterDomainError("hyperparams: a_k and b_k must be positive");
    }
  }
};

// Latent variables over T timesteps, p communities and L nodes.
// beta is laid out [t][k][i] and gamma [t][k][i] with T-1 time slices.
// Timestep indices are 0-based in the API.
struct LatentState {
  std::size_t T = 0, p = 0, L = 0;
  std::vector<double> w0;     // L
  std::vector<double> theta;  // L (simulation only; may be empty)
  std::vector<double> beta;   // T * p * L
  std::vector<double> gamma;  // (T - 1) * p * L

  LatentState() = default;
  LatentState(std::size_t T_, std::size_t p_, std::size_t L_)
      : T(T_), p(p_), L(L_), w0(L_, 1.0), theta(L_, 0.0), beta(T_ * p_ * L_, 1.0),
        gamma(T_ > 0 ? (T_ - 1) * p_ * L_ : 0, 1.0) {}

  std::size_t index(std::size_t t, std::size_t k, std::size_t i) const noexcept { return (t * p + k) * L + i; }
  double& beta_at(std::size_t t, std::size_t k, std::size_t i) { return beta[index(t, k, i)]; }
  double beta_at(std::size_t t, std::size_t k, std::size_t i) const { return beta[index(t, k, i)]; }
  double& gamma_at(std::size_t t, std::size_t k, std::size_t i) { return gamma[index(t, k, i)]; }
  double gamma_at(std::size_t t, std::size_t k, std::size_t i) const { return gamma[index(t, k, i)]; }

  std::span<double> beta_slice(std::size_t t) { return {beta.data() + t * p * L, p * L}; }
  std::span<const double> beta_slice(std::size_t t) const { return {beta.data() + t * p * L, p * L}; }
  std::span<double> gamma_slice(std::size_t t) { return {gamma.data() + t * p * L, p * L}; }
  std::span<const double> gamma_slice(std::size_t t) const { return {gamma.data() + t * p * L, p * L}; }

  void check_shape() const {
    if (w0.size() != L) throw ShapeError("latent state: w0 must have length L");
    if (!theta.empty() && theta.size() != L) throw ShapeError("latent state: theta must be empty or length L");
    if (beta.size() != T * p * L) throw ShapeError("latent state: beta must be T*p*L");
    if (gamma.size() != (T > 0 ? (T - 1) * p * L : 0)) throw ShapeError("latent state: gamma must be (T-1)*p*L");
  }

  bool all_positive() const {
    auto ok = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
    };
    return ok(w0) && ok(beta) && ok(gamma);
  }
};

// Unordered node pair with first <= second.
using NodePair = std::pair<std::size_t, std::size_t>;
using GraphSlice = std::map<NodePair, std::uint64_t>;

// T symmetric sparse multigraphs on a shared node universe. Only pairs with
// i <= j are stored; self-loops are allowed; stored counts are >= 1.
class DynamicMultigraph {
public:
  DynamicMultigraph() = default;
  DynamicMultigraph(std::size_t num_timesteps, std::size_t num_nodes)
      : num_nodes_(num_nodes), slices_(num_timesteps) {}

  std::size_t num_timesteps() const noexcept { return slices_.size(); }
  std::size_t num_nodes() const noexcept { return num_nodes_; }

  const GraphSlice& slice(std::size_t t) const { return slices_.at(t); }

  // Adds `count` multiedges between i and j at timestep t (order of i, j irrelevant).
  void add_edges(std::size_t t, std::size_t i, std::size_t j, std::uint64_t count = 1) {
    check_index(t, i, j);
    if (count == 0) return;
    if (i > j) std::swap(i, j);
    slices_[t][{i, j}] += count;
  }

  // Sets n_ij; a zero count removes the pair.
  void set_count(std::size_t t, std::size_t i, std::size_t j, std::uint64_t count) {
    check_index(t, i, j);
    if (i > j) std::swap(i, j);
    if (count == 0) {
      slices_[t].erase({i, j});
    } else {
      slices_[t][{i, j}] = count;
    }
  }

  std::uint64_t count(std::size_t t, std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    const auto& s = slices_.at(t);
    auto it = s.find({i, j});
    return it == s.end() ? 0 : it->second;
  }

  std::size_t num_stored_pairs() const {
    std::size_t n = 0;
    for (const auto& s : slices_) n += s.size();
    return n;
  }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<std::string> labels) {
    if (!labels.empty() && labels.size() != num_nodes_) throw ShapeError("graph: label count must equal num_nodes");
    labels_ = std::move(labels);
  }
  std::string label(std::size_t i) const { return labels_.empty() ? std::to_string(i) : labels_.at(i); }

  bool operator==(const DynamicMultigraph&) const = default;

private:
  void check_index(std::size_t t, std::size_t i, std::size_t j) const {
    if (t >= slices_.size()) throw std::out_of_range("graph: timestep out of range");
    if (i >= num_nodes_ || j >= num_nodes_) throw std::out_of_range("graph: node index out of range");
  }

  std::size_t num_nodes_ = 0;
  std::vector<GraphSlice> slices_;
  std::vector<std::string> labels_;
};

// Binary graph z_ij = 1{n_ij > 0}.
inline DynamicMultigraph binarize(const DynamicMultigraph& g) {
  DynamicMultigraph out(g.num_timesteps(), g.num_nodes());
  for (std::size_t t = 0; t < g.num_timesteps(); ++t) {
    for (const auto& [pair, n] : g.slice(t)) out.set_count(t, pair.first, pair.second, 1);
  }
  out.set_labels(g.labels());
  return out;
}

// ---------------------------------------------------------------------------
// Gamma-Markov score dynamics
// ---------------------------------------------------------------------------

// gamma_ki ~ Gamma(psi, beta_ki) independently.
inline std::vector<double> markov_gamma_given_beta(std::span<const double> beta_t, double psi, Rng& rng) {
  if (!(psi > 0.0) || !std::isfinite(psi)) throw ParameterDomainError("markov_gamma_given_beta: psi must be positive");
  std::vector<double> out(beta_t.size());
  for (std::size_t n = 0; n < beta_t.size(); ++n) {
    if (!std::isfinite(beta_t[n]) || !(beta_t[n] > 0.0))
      throw ParameterDomainError("markov_gamma_given_beta: scores must be positive and finite");
    out[n] = gamma_sample(psi, beta_t[n], rng);
  }
  return out;
}

// beta'_ki ~ Gamma(a_k + psi, gamma_ki + b_k); gamma_t laid out [k][i].
inline std::vector<double> markov_beta_given_gamma(std::span<const double> gamma_t, const Hyperparams& hyper, Rng& rng) {
  const std::size_t p = hyper.p();
  if (p == 0 || gamma_t.size() % p != 0) throw ShapeError("markov_beta_given_gamma: size is not a multiple of p");
  const std::size_t L = gamma_t.size() / p;
  std::vector<double> out(gamma_t.size());
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t i = 0; i < L; ++i) {
      double g = gamma_t[k * L + i];
      if (!(g >= 0.0) || !std::isfinite(g)) throw ParameterDomainError("markov_beta_given_gamma: gamma must be >= 0");
      out[k * L + i] = gamma_sample(hyper.a[k] + hyper.psi, g + hyper.b[k], rng);
    }
  }
  return out;
}

// Where a score sits in its chain; decides which transition variables it conditions on.
enum class ScorePosition { First, Interior, Last, Only };

struct GammaParams {
  double shape;
  double rate;
};

// Full conditional of beta^(t) given its neighbouring transition variables:
//   interior: Gamma(a + 2 psi, gamma_prev + gamma_next + b)
//   first:    Gamma(a + psi, gamma_next + b)
//   last:     Gamma(a + psi, gamma_prev + b)
//   only:     Gamma(a, b)  (T = 1)
inline GammaParams beta_conditional_params(double gamma_prev, double gamma_next, double a, double b, double psi,
                                           ScorePosition pos) {
  if (gamma_prev < 0.0 || gamma_next < 0.0) throw ParameterDomainError("beta conditional: gammas must be >= 0");
  switch (pos) {
    case ScorePosition::Interior:
      return {a + 2.0 * psi, gamma_prev + gamma_next + b};
    case ScorePosition::First:
      return {a + psi, gamma_next + b};
    case ScorePosition::Last:
      return {a + psi, gamma_prev + b};
    case ScorePosition::Only:
      break;
  }
  return {a, b};
}

inline double beta_double_conditional_logdensity(double beta, double gamma_prev, double gamma_next, double a, double b,
                                                 double psi, ScorePosition pos) {
  if (!(beta > 0.0)) throw ParameterDomainError("beta conditional: beta must be positive");
  auto [shape, rate] = beta_conditional_params(gamma_prev, gamma_next, a, b, psi, pos);
  return gamma_log_density(beta, shape, rate);
}

// Per-community weights w[k][i] = w0[i] * beta[t][k][i], flattened row-major.
inline std::vector<double> compose_weights(const LatentState& s, std::size_t t) {
  if (t >= s.T) throw std::out_of_range("compose_weights: timestep out of range");
  std::vector<double> w(s.p * s.L);
  for (std::size_t k = 0; k < s.p; ++k) {
    for (std::size_t i = 0; i < s.L; ++i) w[k * s.L + i] = s.w0[i] * s.beta_at(t, k, i);
  }
  return w;
}

// Exact Poisson log-likelihood of slice t:
//   sum_{i<j} [n_ij log(2 sum_k w_ik w_jk) - log n_ij!] + sum_i [n_ii log(sum_k w_ik^2) - log n_ii!]
//   - sum_k (sum_i w_ik)^2
// The last term is the total rate over all pairs, so non-edges are never visited.
inline double log_likelihood(const DynamicMultigraph& g, const LatentState& s, std::size_t t) {
  if (t >= g.num_timesteps() || t >= s.T) throw std::out_of_range("log_likelihood: timestep out of range");
  if (g.num_nodes() > s.L) throw ShapeError("log_likelihood: graph has more nodes than the latent state");
  const std::vector<double> w = compose_weights(s, t);
  const std::size_t L = s.L, p = s.p;
  double ll = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    double mass = 0.0;
    for (std::size_t i = 0; i < L; ++i) mass += w[k * L + i];
    ll -= mass * mass;
  }
  for (const auto& [pair, n] : g.slice(t)) {
    const auto [i, j] = pair;
    double rate = 0.0;
    for (std::size_t k = 0; k < p; ++k) rate += w[k * L + i] * w[k * L + j];
    if (i != j) rate *= 2.0;
    const double nd = static_cast<double>(n);
    ll += nd * std::log(rate) - std::lgamma(nd + 1.0);
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Hyperpriors and the approximate posterior
// ---------------------------------------------------------------------------

// Half-normal prior scales. sigma's prior is a half-normal truncated to (0, 1).
struct PriorSpec {
  double alpha = 10.0;
  double sigma = 1.0;
  double tau = 10.0;
  double psi = 10.0;
  double a = 10.0;
  double b = 10.0;
};

namespace detail {

inline double half_normal_log_density(double x, double scale) {
  constexpr double log_norm = 0.5 * std::numbers::ln2 - 0.5723649429247001;  // log(sqrt(2/pi))
  return log_norm - std::log(scale) - 0.5 * (x / scale) * (x / scale);
}

// Half-normal(scale) restricted to (0, 1).
inline double unit_half_normal_log_density(double x, double scale) {
  const double mass = std::erf(1.0 / (scale * std::numbers::sqrt2));  // P(|Z| * scale < 1)
  return half_normal_log_density(x, scale) - std::log(mass);
}

}  // namespace detail

inline double log_hyperprior(const Hyperparams& h, const PriorSpec& pr) {
  if (!(h.sigma > 0.0 && h.sigma < 1.0)) return kNegInf;
  double lp = detail::half_normal_log_density(h.alpha, pr.alpha) +
              detail::unit_half_normal_log_density(h.sigma, pr.sigma) + detail::half_normal_log_density(h.psi, pr.psi);
  if (!h.tau_fixed) lp += detail::half_normal_log_density(h.tau, pr.tau);
  for (std::size_t k = 0; k < h.p(); ++k) {
    lp += detail::half_normal_log_density(h.a[k], pr.a) + detail::half_normal_log_density(h.b[k], pr.b);
  }
  return lp;
}

// Log joint prior of the score chains:
//   beta^(1) ~ Gamma(a, b), gamma^(t) | beta^(t) ~ Gamma(psi, beta^(t)),
//   beta^(t+1) | gamma^(t) ~ Gamma(a + psi, gamma^(t) + b).
// Its full conditionals for beta are exactly beta_double_conditional_logdensity.
inline double log_score_prior(const LatentState& s, const Hyperparams& h) {
  double lp = 0.0;
  for (std::size_t k = 0; k < s.p; ++k) {
    for (std::size_t i = 0; i < s.L; ++i) {
      lp += gamma_log_density(s.beta_at(0, k, i), h.a[k], h.b[k]);
      for (std::size_t t = 0; t + 1 < s.T; ++t) {
        const double g = s.gamma_at(t, k, i);
        lp += gamma_log_density(g, h.psi, s.beta_at(t, k, i));
        lp += gamma_log_density(s.beta_at(t + 1, k, i), h.a[k] + h.psi, g + h.b[k]);
      }
    }
  }
  return lp;
}

// Gradient blocks in the unconstrained parameterization: log for every
// positive quantity, logit for sigma. tau is zero when tau_fixed.
struct ParamBlocks {
  double alpha = 0.0, sigma = 0.0, tau = 0.0, psi = 0.0;
  std::vector<double> a, b, w0, beta, gamma;
};

struct PosteriorGradient {
  double log_density = 0.0;  // log posterior + log-Jacobian of the transform
  ParamBlocks grad;
};

// Precomputes the edge lists so repeated evaluations (one per leapfrog step)
// touch only stored pairs. Holds scratch buffers: use one evaluator per thread.
class PosteriorEvaluator {
public:
  PosteriorEvaluator(const DynamicMultigraph& g, PriorSpec priors) : priors_(priors), T_(g.num_timesteps()) {
    num_nodes_ = g.num_nodes();
    edges_.resize(T_);
    for (std::size_t t = 0; t < T_; ++t) {
      for (const auto& [pair, n] : g.slice(t)) {
        const double nd = static_cast<double>(n);
        edges_[t].push_back({pair.first, pair.second, nd, std::lgamma(nd + 1.0)});
      }
    }
  }

  std::size_t num_timesteps() const noexcept { return T_; }

  void check(const LatentState& s, const Hyperparams& h) const {
    s.check_shape();
    if (s.T != T_) throw ShapeError("posterior: state T differs from graph T");
    if (s.L < num_nodes_) throw ShapeError("posterior: truncation level L smaller than the node universe");
    if (s.p != h.p()) throw ShapeError("posterior: state p differs from hyperparameter p");
  }

  // Unnormalized log joint density of (w0, beta, gamma, xi) given the graph,
  // with the etBFRY(alpha/L, tau, sigma) prior on w0. -inf for non-positive latents.
  double log_posterior(const LatentState& s, const Hyperparams& h) const {
    check(s, h);
    if (!s.all_positive() || !hyper_in_support(h)) return kNegInf;
    double lp = 0.0;
    for (std::size_t t = 0; t < T_; ++t) lp += slice_log_likelihood(s, t, nullptr, nullptr);
    const EtBfryParams eb{h.alpha, s.L, h.tau, h.sigma};
    for (std::size_t i = 0; i < s.L; ++i) lp += etbfry_log_density(s.w0[i], eb);
    lp += log_score_prior(s, h);
    lp += log_hyperprior(h, priors_);
    return std::isnan(lp) ? kNegInf : lp;
  }

  // log posterior + log-Jacobian and its gradient w.r.t. the unconstrained coordinates.
  PosteriorGradient gradient(const LatentState& s, const Hyperparams& h) const {
    check(s, h);
    const std::size_t T = s.T, p = s.p, L = s.L;
    PosteriorGradient out;
    ParamBlocks& g = out.grad;
    g.a.assign(p, 0.0);
    g.b.assign(p, 0.0);
    g.w0.assign(L, 0.0);
    g.beta.assign(s.beta.size(), 0.0);
    g.gamma.assign(s.gamma.size(), 0.0);
    if (!s.all_positive() || !hyper_in_support(h)) {
      out.log_density = kNegInf;
      return out;
    }
    double lp = 0.0;

    // Likelihood; natural-scale gradient accumulated into g.w0 and g.beta.
    for (std::size_t t = 0; t < T; ++t) lp += slice_log_likelihood(s, t, &g.w0, &g.beta);

    // etBFRY prior on w0.
    {
      const double sigma = h.sigma, tau = h.tau, alpha = h.alpha;
      const double Ld = static_cast<double>(L);
      const EtBfryParams eb{alpha, L, tau, sigma};
      const double c = eb.cutoff_rate();
      const double log_gap = eb.log_normalizer_gap();
      const double gap = std::exp(log_gap);
      const double tc_pow = std::pow(tau + c, sigma);
      const double t_pow = std::pow(tau, sigma);
      double sum_log_w = 0.0, sum_w = 0.0, dc = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        const double w = s.w0[i];
        const double em1 = std::expm1(c * w);
        sum_log_w += std::log(w);
        sum_w += w;
        dc += std::isfinite(em1) ? w / em1 : 0.0;
        lp += std::log(-std::expm1(-c * w)) - (1.0 + sigma) * std::log(w) - tau * w;
        g.w0[i] += -(1.0 + sigma) / w - tau + (std::isfinite(em1) ? c / em1 : 0.0);
      }
      lp += Ld * (std::log(sigma) - std::lgamma(1.0 - sigma) - log_gap);
      dc -= Ld * sigma * tc_pow / (tau + c) / gap;
      const double dgap_dsigma = tc_pow * std::log(tau + c) - t_pow * std::log(tau);
      double d_sigma = Ld * (1.0 / sigma + boost::math::digamma(1.0 - sigma)) - sum_log_w - Ld * dgap_dsigma / gap;
      double d_tau = -sum_w - Ld * sigma * (tc_pow / (tau + c) - t_pow / tau) / gap;
      double d_alpha = 0.0;
      d_alpha += dc * (-c / (sigma * alpha));
      d_sigma += dc * c * (1.0 - std::log(sigma * Ld / alpha)) / (sigma * sigma);
      g.alpha += d_alpha;
      g.sigma += d_sigma;
      g.tau += d_tau;
    }

    // Score chains.
    {
      const double psi = h.psi;
      const double lg_psi = std::lgamma(psi), dg_psi = boost::math::digamma(psi);
      for (std::size_t k = 0; k < p; ++k) {
        const double a = h.a[k], b = h.b[k];
        const double lg_a = std::lgamma(a), dg_a = boost::math::digamma(a);
        const double shape_next = a + psi;
        const double lg_next = std::lgamma(shape_next), dg_next = boost::math::digamma(shape_next);
        const double log_b = std::log(b);
        for (std::size_t i = 0; i < L; ++i) {
          const std::size_t i0 = s.index(0, k, i);
          const double b0 = s.beta[i0];
          const double log_b0 = std::log(b0);
          lp += a * log_b - lg_a + (a - 1.0) * log_b0 - b * b0;
          g.beta[i0] += (a - 1.0) / b0 - b;
          g.a[k] += log_b - dg_a + log_b0;
          g.b[k] += a / b - b0;
          for (std::size_t t = 0; t + 1 < T; ++t) {
            const std::size_t it = s.index(t, k, i), in = s.index(t + 1, k, i);
            const double bt = s.beta[it], gt = s.gamma[it], bn = s.beta[in];
            const double log_bt = std::log(bt), log_gt = std::log(gt), log_bn = std::log(bn);
            // gamma^(t) | beta^(t) ~ Gamma(psi, beta^(t))
            lp += psi * log_bt - lg_psi + (psi - 1.0) * log_gt - bt * gt;
            g.gamma[it] += (psi - 1.0) / gt - bt;
            g.psi += log_bt - dg_psi + log_gt;
            g.beta[it] += psi / bt - gt;
            // beta^(t+1) | gamma^(t) ~ Gamma(a + psi, gamma^(t) + b)
            const double rate = gt + b;
            const double log_rate = std::log(rate);
            lp += shape_next * log_rate - lg_next + (shape_next - 1.0) * log_bn - rate * bn;
            g.beta[in] += (shape_next - 1.0) / bn - rate;
            const double d_shape = log_rate - dg_next + log_bn;
            g.a[k] += d_shape;
            g.psi += d_shape;
            const double d_rate = shape_next / rate - bn;
            g.gamma[it] += d_rate;
            g.b[k] += d_rate;
          }
        }
      }
    }

    // Hyperpriors.
    lp += log_hyperprior(h, priors_);
    g.alpha += -h.alpha / (priors_.alpha * priors_.alpha);
    g.sigma += -h.sigma / (priors_.sigma * priors_.sigma);
    g.psi += -h.psi / (priors_.psi * priors_.psi);
    if (!h.tau_fixed) g.tau += -h.tau / (priors_.tau * priors_.tau);
    for (std::size_t k = 0; k < p; ++k) {
      g.a[k] += -h.a[k] / (priors_.a * priors_.a);
      g.b[k] += -h.b[k] / (priors_.b * priors_.b);
    }

    // Chain rule to unconstrained coordinates, plus log-Jacobian.
    auto to_log = [&lp](double x, double& grad) {
      grad = grad * x + 1.0;
      lp += std::log(x);
    };
    to_log(h.alpha, g.alpha);
    to_log(h.psi, g.psi);
    if (h.tau_fixed) {
      g.tau = 0.0;
    } else {
      to_log(h.tau, g.tau);
    }
    g.sigma = g.sigma * h.sigma * (1.0 - h.sigma) + (1.0 - 2.0 * h.sigma);
    lp += std::log(h.sigma) + std::log1p(-h.sigma);
    for (std::size_t k = 0; k < p; ++k) {
      to_log(h.a[k], g.a[k]);
      to_log(h.b[k], g.b[k]);
    }
    for (std::size_t i = 0; i < L; ++i) to_log(s.w0[i], g.w0[i]);
    for (std::size_t n = 0; n < s.beta.size(); ++n) to_log(s.beta[n], g.beta[n]);
    for (std::size_t n = 0; n < s.gamma.size(); ++n) to_log(s.gamma[n], g.gamma[n]);

    out.log_density = std::isnan(lp) ? kNegInf : lp;
    return out;
  }

private:
  struct Edge {
    std::size_t i, j;
    double n, log_factorial;
  };

  static bool hyper_in_support(const Hyperparams& h) {
    auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!positive(h.alpha) || !positive(h.tau) || !positive(h.psi)) return false;
    if (!(h.sigma > 0.0 && h.sigma < 1.0)) return false;
    for (std::size_t k = 0; k < h.p(); ++k) {
      if (!positive(h.a[k]) || !positive(h.b[k])) return false;
    }
    return true;
  }

  // Log-likelihood of slice t; optionally accumulates natural-scale derivatives
  // with respect to w0 and beta.
  double slice_log_likelihood(const LatentState& s, std::size_t t, std::vector<double>* grad_w0,
                              std::vector<double>* grad_beta) const {
    const std::size_t p = s.p, L = s.L;
    const bool want_grad = grad_w0 != nullptr;
    weights_.resize(p * L);
    for (std::size_t k = 0; k < p; ++k) {
      for (std::size_t i = 0; i < L; ++i) weights_[k * L + i] = s.w0[i] * s.beta_at(t, k, i);
    }
    double ll = 0.0;
    if (want_grad) dweights_.assign(p * L, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      double mass = 0.0;
      for (std::size_t i = 0; i < L; ++i) mass += weights_[k * L + i];
      ll -= mass * mass;
      if (want_grad) {
        for (std::size_t i = 0; i < L; ++i) dweights_[k * L + i] = -2.0 * mass;
      }
    }
    for (const Edge& e : edges_[t]) {
      double rate = 0.0;
      for (std::size_t k = 0; k < p; ++k) rate += weights_[k * L + e.i] * weights_[k * L + e.j];
      if (e.i != e.j) rate *= 2.0;
      ll += e.n * std::log(rate) - e.log_factorial;
      if (want_grad) {
        const double scale = 2.0 * e.n / rate;
        if (e.i != e.j) {
          for (std::size_t k = 0; k < p; ++k) {
            dweights_[k * L + e.i] += scale * weights_[k * L + e.j];
            dweights_[k * L + e.j] += scale * weights_[k * L + e.i];
          }
        } else {
          for (std::size_t k = 0; k < p; ++k) dweights_[k * L + e.i] += scale * weights_[k * L + e.i];
        }
      }
    }
    if (want_grad) {
      for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t i = 0; i < L; ++i) {
          const double d = dweights_[k * L + i];
          (*grad_w0)[i] += s.beta_at(t, k, i) * d;
          (*grad_beta)[s.index(t, k, i)] += s.w0[i] * d;
        }
      }
    }
    return ll;
  }

  PriorSpec priors_;
  std::size_t T_ = 0;
  std::size_t num_nodes_ = 0;
  std::vector<std::vector<Edge>> edges_;
  mutable std::vector<double> weights_;
  mutable std::vector<double> dweights_;
};

inline double log_posterior(const DynamicMultigraph& g, const LatentState& s, const Hyperparams& h,
                            const PriorSpec& priors = {}) {
  return PosteriorEvaluator(g, priors).log_posterior(s, h);
}

inline PosteriorGradient grad_log_posterior(const DynamicMultigraph& g, const LatentState& s, const Hyperparams& h,
                                            const PriorSpec& priors = {}) {
  return PosteriorEvaluator(g, priors).gradient(s, h);
}

}  // namespace dynsnetoc
