#pragma once

// Posterior inference: unconstrained parameterization, initialization,
// NUTS chains over the approximate posterior, and coverage evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

#include "chain.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "nuts.hpp"
#include "random.hpp"

namespace dynsnetoc {

struct InferenceConfig {
  std::size_t p = 1;
  std::size_t L = 0;  // truncation level; 0 = the graph's node universe
  std::size_t num_warmup = 1000;
  std::size_t num_samples = 1000;
  std::size_t thin = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::size_t chains = 1;
  std::uint64_t seed = 1;
  std::optional<double> tau_fixed_value = 1.0;
  PriorSpec prior_scales;
  double init_jitter = 0.1;  // uniform jitter on the log scale for scores and hyperparameters
  std::size_t progress_every = 0;

  void validate() const {
    if (p < 1) throw ParameterDomainError("inference: p must be >= 1");
    if (num_samples < 1 || thin < 1) throw ParameterDomainError("inference: num_samples and thin must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw ParameterDomainError("inference: target_accept must lie in (0, 1)");
    if (max_tree_depth < 1) throw ParameterDomainError("inference: max_tree_depth must be >= 1");
    if (chains < 1) throw ParameterDomainError("inference: chains must be >= 1");
    if (tau_fixed_value && !(*tau_fixed_value > 0.0)) throw ParameterDomainError("inference: fixed tau must be > 0");
  }
};

// Bijection between (LatentState, Hyperparams) and R^d: log for positives,
// logit for sigma. tau is present only when it is not fixed.
// Vector layout: log alpha, logit sigma, [log tau], log psi, log a[p], log b[p],
// log w0[L], log beta[T p L], log gamma[(T-1) p L].
struct Parameterization {
  std::size_t T = 1, p = 1, L = 0;
  bool tau_free = false;
  double tau_fixed = 1.0;

  std::size_t dimension() const noexcept {
    return 3 + (tau_free ? 1 : 0) + 2 * p + L + T * p * L + (T > 0 ? (T - 1) * p * L : 0);
  }
  std::size_t w0_offset() const noexcept { return 3 + (tau_free ? 1 : 0) + 2 * p; }
  std::size_t beta_offset() const noexcept { return w0_offset() + L; }
  std::size_t gamma_offset() const noexcept { return beta_offset() + T * p * L; }

  std::vector<double> unconstrain(const LatentState& s, const Hyperparams& h) const {
    s.check_shape();
    if (s.T != T || s.p != p || s.L != L || h.p() != p) throw ShapeError("unconstrain: dimensions differ from layout");
    auto log_pos = [](double x) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ParameterDomainError("unconstrain: non-positive input");
      return std::log(x);
    };
    if (!(h.sigma > 0.0 && h.sigma < 1.0)) throw ParameterDomainError("unconstrain: sigma must lie in (0, 1)");
    std::vector<double> q;
    q.reserve(dimension());
    q.push_back(log_pos(h.alpha));
    q.push_back(std::log(h.sigma) - std::log1p(-h.sigma));
    if (tau_free) q.push_back(log_pos(h.tau));
    q.push_back(log_pos(h.psi));
    for (double x : h.a) q.push_back(log_pos(x));
    for (double x : h.b) q.push_back(log_pos(x));
    for (double x : s.w0) q.push_back(log_pos(x));
    for (double x : s.beta) q.push_back(log_pos(x));
    for (double x : s.gamma) q.push_back(log_pos(x));
    return q;
  }

  void constrain(std::span<const double> q, LatentState& s, Hyperparams& h) const {
    if (q.size() != dimension()) throw ShapeError("constrain: vector has wrong dimension");
    if (s.T != T || s.p != p || s.L != L || s.w0.size() != L) s = LatentState(T, p, L);
    s.theta.clear();
    std::size_t c = 0;
    h.alpha = std::exp(q[c++]);
    h.sigma = 1.0 / (1.0 + std::exp(-q[c++]));
    h.tau = tau_free ? std::exp(q[c++]) : tau_fixed;
    h.tau_fixed = !tau_free;
    h.psi = std::exp(q[c++]);
    h.a.resize(p);
    h.b.resize(p);
    for (std::size_t k = 0; k < p; ++k) h.a[k] = std::exp(q[c++]);
    for (std::size_t k = 0; k < p; ++k) h.b[k] = std::exp(q[c++]);
    for (double& x : s.w0) x = std::exp(q[c++]);
    for (double& x : s.beta) x = std::exp(q[c++]);
    for (double& x : s.gamma) x = std::exp(q[c++]);
  }

  // Log-Jacobian of the transform at q: sum of log-mapped coordinates plus log sigma(1 - sigma).
  double log_jacobian(std::span<const double> q) const {
    double j = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) {
      if (c == 1) {
        const double sigma = 1.0 / (1.0 + std::exp(-q[1]));
        j += std::log(sigma) + std::log1p(-sigma);
      } else {
        j += q[c];
      }
    }
    return j;
  }
};

// The approximate posterior as a NUTS target on R^d.
class PosteriorModel {
public:
  PosteriorModel(const DynamicMultigraph& g, Parameterization param, PriorSpec priors)
      : evaluator_(g, priors), param_(param), state_(param.T, param.p, param.L) {}

  std::size_t dimension() const noexcept { return param_.dimension(); }
  const Parameterization& parameterization() const noexcept { return param_; }

  double log_density_gradient(std::span<const double> q, std::span<double> grad) {
    param_.constrain(q, state_, hyper_);
    const PosteriorGradient pg = evaluator_.gradient(state_, hyper_);
    if (!std::isfinite(pg.log_density)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      return pg.log_density;
    }
    const ParamBlocks& g = pg.grad;
    std::size_t c = 0;
    grad[c++] = g.alpha;
    grad[c++] = g.sigma;
    if (param_.tau_free) grad[c++] = g.tau;
    grad[c++] = g.psi;
    for (double x : g.a) grad[c++] = x;
    for (double x : g.b) grad[c++] = x;
    for (double x : g.w0) grad[c++] = x;
    for (double x : g.beta) grad[c++] = x;
    for (double x : g.gamma) grad[c++] = x;
    return pg.log_density;
  }

private:
  PosteriorEvaluator evaluator_;
  Parameterization param_;
  LatentState state_;
  Hyperparams hyper_;
};

// Incident multiedge count per node at timestep t (self-loops counted once).
inline std::vector<double> incident_counts(const DynamicMultigraph& g, std::size_t t) {
  std::vector<double> d(g.num_nodes(), 0.0);
  for (const auto& [pair, n] : g.slice(t)) {
    d[pair.first] += static_cast<double>(n);
    if (pair.second != pair.first) d[pair.second] += static_cast<double>(n);
  }
  return d;
}

inline std::size_t resolve_truncation(const DynamicMultigraph& g, const InferenceConfig& cfg) {
  const std::size_t L = cfg.L == 0 ? g.num_nodes() : cfg.L;
  if (L < g.num_nodes()) throw ShapeError("inference: truncation level L must be >= the number of graph nodes");
  if (L == 0) throw InsufficientDataError("inference: graph has no nodes");
  return L;
}

struct InitialPoint {
  LatentState state;
  Hyperparams hyper;
};

// w0_i = sqrt(mean_t degree_i + 0.1) / sqrt(p T mean(beta)); scores and
// transition variables at their prior means; hyperparameters at prior
// medians (sigma = 0.2). Scores and hyperparameters get a log-scale jitter.
inline InitialPoint initialize_state(const DynamicMultigraph& g, const InferenceConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t T = g.num_timesteps(), p = cfg.p, L = resolve_truncation(g, cfg);
  constexpr double half_normal_median = 0.6744897501960817;
  auto jitter = [&]() { return cfg.init_jitter > 0.0 ? std::exp(cfg.init_jitter * (2.0 * uniform_open(rng) - 1.0)) : 1.0; };

  InitialPoint init;
  Hyperparams& h = init.hyper;
  h.alpha = half_normal_median * cfg.prior_scales.alpha * jitter();
  h.sigma = 0.2;
  h.tau_fixed = cfg.tau_fixed_value.has_value();
  h.tau = h.tau_fixed ? *cfg.tau_fixed_value : half_normal_median * cfg.prior_scales.tau * jitter();
  h.psi = half_normal_median * cfg.prior_scales.psi * jitter();
  h.a.resize(p);
  h.b.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    h.a[k] = half_normal_median * cfg.prior_scales.a * jitter();
    h.b[k] = half_normal_median * cfg.prior_scales.b * jitter();
  }

  LatentState& s = init.state;
  s = LatentState(T, p, L);
  s.theta.clear();
  double mean_beta = 0.0;
  for (std::size_t k = 0; k < p; ++k) mean_beta += h.a[k] / h.b[k];
  mean_beta /= static_cast<double>(p);

  std::vector<double> mean_degree(L, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto d = incident_counts(g, t);
    for (std::size_t i = 0; i < d.size(); ++i) mean_degree[i] += d[i] / static_cast<double>(T);
  }
  const double denom = std::sqrt(static_cast<double>(p * T) * mean_beta);
  for (std::size_t i = 0; i < L; ++i) s.w0[i] = std::sqrt(mean_degree[i] + 0.1) / denom;

  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t i = 0; i < L; ++i) s.beta_at(t, k, i) = h.a[k] / h.b[k] * jitter();
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t i = 0; i < L; ++i) s.gamma_at(t, k, i) = h.psi / s.beta_at(t, k, i) * jitter();
  return init;
}

// Runs one NUTS chain; `chain_index` selects an independent seed sub-stream.
inline Chain run_nuts_chain(const DynamicMultigraph& g, const InferenceConfig& cfg, std::size_t chain_index = 0) {
  cfg.validate();
  const std::uint64_t chain_seed = mix_seed(cfg.seed, chain_index);
  Rng init_rng = make_rng(chain_seed, 1);
  const InitialPoint init = initialize_state(g, cfg, init_rng);

  Parameterization param;
  param.T = g.num_timesteps();
  param.p = cfg.p;
  param.L = init.state.L;
  param.tau_free = !cfg.tau_fixed_value.has_value();
  param.tau_fixed = cfg.tau_fixed_value.value_or(1.0);

  PosteriorModel model(g, param, cfg.prior_scales);
  const DrawLayout layout{param.T, param.p, param.L};
  Chain chain(layout);
  chain.seed = chain_seed;

  nuts::Settings settings;
  settings.num_warmup = cfg.num_warmup;
  settings.num_samples = cfg.num_samples;
  settings.thin = cfg.thin;
  settings.target_accept = cfg.target_accept;
  settings.max_tree_depth = cfg.max_tree_depth;
  settings.seed = chain_seed;
  settings.progress_every = cfg.progress_every;
  settings.chain_id = static_cast<int>(chain_index);

  LatentState s;
  Hyperparams h;
  auto on_draw = [&](std::span<const double> q, const nuts::TransitionStats& st) {
    param.constrain(q, s, h);
    chain.push_back(pack_draw(s, h), st.log_density - param.log_jacobian(q));
  };
  const nuts::RunSummary summary = nuts::run(model, param.unconstrain(init.state, init.hyper), settings, on_draw);

  chain.stats.step_size = summary.step_size;
  chain.stats.inv_metric = summary.inv_metric;
  chain.stats.divergences = summary.divergences;
  chain.stats.warmup_divergences = summary.warmup_divergences;
  chain.stats.mean_accept_stat = summary.mean_accept_stat;
  chain.stats.mean_tree_depth = summary.mean_tree_depth;
  chain.stats.num_iterations = cfg.num_samples;
  chain.stats.total_leapfrog = summary.total_leapfrog;
  chain.stats.warmup_log_posterior = summary.warmup_log_density;
  return chain;
}

// Fraction of post-warmup transitions that diverged.
inline double divergence_rate(const Chain& c) {
  return c.stats.num_iterations ? static_cast<double>(c.stats.divergences) / static_cast<double>(c.stats.num_iterations)
                                : 0.0;
}

// cfg.chains independent chains, one thread each.
inline std::vector<Chain> run_nuts(const DynamicMultigraph& g, const InferenceConfig& cfg) {
  cfg.validate();
  std::vector<Chain> chains(cfg.chains);
  if (cfg.chains == 1) {
    chains[0] = run_nuts_chain(g, cfg, 0);
  } else {
    std::vector<std::exception_ptr> errors(cfg.chains);
    std::vector<std::thread> workers;
    for (std::size_t c = 0; c < cfg.chains; ++c) {
      workers.emplace_back([&, c] {
        try {
          chains[c] = run_nuts_chain(g, cfg, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (divergence_rate(chains[c]) > 0.2) {
      std::fprintf(stderr, "warning: chain %zu divergence rate %.1f%% exceeds 20%%\n", c,
                   100.0 * divergence_rate(chains[c]));
    }
  }
  return chains;
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

// Linear-interpolation quantile of a sample (sorted in place).
inline double quantile(std::vector<double>& x, double q) {
  if (x.empty()) throw InsufficientDataError("quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

struct Coverage {
  double w0 = 0.0;
  double beta = 0.0;
};

inline constexpr std::size_t kMinCoverageDraws = 100;

// Fraction of coordinates whose central credible interval at `level` contains
// the truth, for w0 and beta separately. Labels are aligned within the chain
// and then the chain's communities are matched to the truth's.
inline Coverage coverage_eval(const Chain& chain, const LatentState& truth, double level) {
  if (chain.size() < kMinCoverageDraws) throw InsufficientDataError("coverage_eval: chain has fewer than 100 draws");
  if (!(level > 0.0 && level < 1.0)) throw ParameterDomainError("coverage_eval: level must lie in (0, 1)");
  const DrawLayout lay = chain.layout();
  if (truth.T != lay.T || truth.p != lay.p || truth.L != lay.L) throw ShapeError("coverage_eval: truth dimensions differ");

  Chain aligned = align_labels(chain);
  if (lay.p > 1) {
    std::vector<double> mean_beta(lay.beta_size(), 0.0);
    for (std::size_t n = 0; n < aligned.size(); ++n) {
      auto d = aligned.draw(n);
      for (std::size_t c = 0; c < lay.beta_size(); ++c) mean_beta[c] += d[lay.beta_offset() + c];
    }
    const ScoreMatrix score = community_correlations(truth.beta, mean_beta, lay);
    const auto perm = best_assignment(score);
    for (std::size_t n = 0; n < aligned.size(); ++n) aligned.permute_communities(n, perm);
  }

  const double lo_q = 0.5 * (1.0 - level), hi_q = 1.0 - lo_q;
  auto covered = [&](std::size_t column, double value) {
    std::vector<double> x = aligned.column(column);
    const double lo = quantile(x, lo_q);
    const double hi = quantile(x, hi_q);
    return lo <= value && value <= hi;
  };
  Coverage cov;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < lay.L; ++i) hits += covered(lay.w0_offset() + i, truth.w0[i]) ? 1 : 0;
  cov.w0 = lay.L ? static_cast<double>(hits) / static_cast<double>(lay.L) : 1.0;
  hits = 0;
  for (std::size_t c = 0; c < lay.beta_size(); ++c) hits += covered(lay.beta_offset() + c, truth.beta[c]) ? 1 : 0;
  cov.beta = lay.beta_size() ? static_cast<double>(hits) / static_cast<double>(lay.beta_size()) : 1.0;
  return cov;
}

// Split-R-hat of one scalar across chains (each chain split in halves).
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t n = c.size() / 2;
    if (n < 2) throw InsufficientDataError("split_rhat: chains too short");
    halves.emplace_back(c.begin(), c.begin() + n);
    halves.emplace_back(c.begin() + n, c.begin() + 2 * n);
  }
  const std::size_t m = halves.size(), n = halves[0].size();
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (double x : halves[j]) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : halves[j]) var += (x - mean) * (x - mean);
    means[j] = mean;
    vars[j] = var / static_cast<double>(n - 1);
  }
  double grand = 0.0;
  for (double x : means) grand += x;
  grand /= static_cast<double>(m);
  double between = 0.0;
  for (double x : means) between += (x - grand) * (x - grand);
  between *= static_cast<double>(n) / static_cast<double>(m - 1);
  double within = 0.0;
  for (double v : vars) within += v;
  within /= static_cast<double>(m);
  const double var_plus = (static_cast<double>(n - 1) / static_cast<double>(n)) * within + between / static_cast<double>(n);
  return std::sqrt(var_plus / within);
}

}  // namespace dynsnetoc
