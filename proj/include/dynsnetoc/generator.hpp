#pragma once

// Fast simulation of the dynamic multigraph: draw the latent state once,
// then each timestep by total-count + endpoint-categorical sampling.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "model.hpp"
#include "random.hpp"

namespace dynsnetoc {

struct SimConfig {
  Hyperparams hyper;
  std::size_t T = 1;
  double epsilon = 1e-4;  // GGP truncation level
  std::uint64_t seed = 1;

  void validate() const {
    hyper.validate(false);
    if (T < 1) throw ParameterDomainError("sim config: T must be >= 1");
    if (!(epsilon >= 0.0)) throw ParameterDomainError("sim config: epsilon must be >= 0");
    if (hyper.sigma > 0.0 && !(epsilon > 0.0))
      throw ParameterDomainError("sim config: epsilon must be > 0 when sigma in (0, 1)");
  }
};

// Draws (w0, theta) from the truncated GGP and the score chains
// beta^(1) ~ Gamma(a, b), gamma^(t) | beta^(t), beta^(t+1) | gamma^(t).
// Zero atoms yield a valid empty state.
inline LatentState simulate_latent(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  const Hyperparams& h = cfg.hyper;
  const auto atoms = ggp_truncated_sample(h.ggp(), cfg.epsilon, rng);
  const std::size_t L = atoms.size(), p = h.p(), T = cfg.T;
  LatentState s(T, p, L);
  for (std::size_t i = 0; i < L; ++i) {
    s.w0[i] = atoms[i].w0;
    s.theta[i] = atoms[i].theta;
  }
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t i = 0; i < L; ++i) s.beta_at(0, k, i) = gamma_sample(h.a[k], h.b[k], rng);
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const auto g = markov_gamma_given_beta(s.beta_slice(t), h.psi, rng);
    std::copy(g.begin(), g.end(), s.gamma_slice(t).begin());
    const auto next = markov_beta_given_gamma(s.gamma_slice(t), h, rng);
    std::copy(next.begin(), next.end(), s.beta_slice(t + 1).begin());
  }
  return s;
}

// One multigraph slice from per-community weights laid out [k][i].
// For each community: N*_k ~ Poisson((sum_i w_ik)^2), then each multiedge picks
// both endpoints from w_.k / sum_i w_ik. Pairs are stored unordered, so
// n_ij ~ Poisson(2 sum_k w_ik w_jk) for i != j and n_ii ~ Poisson(sum_k w_ik^2).
inline GraphSlice simulate_slice_from_weights(std::span<const double> weights, std::size_t p, Rng& rng) {
  GraphSlice slice;
  if (p == 0 || weights.empty()) return slice;
  const std::size_t L = weights.size() / p;
  for (std::size_t k = 0; k < p; ++k) {
    auto row = weights.subspan(k * L, L);
    double mass = 0.0;
    for (double w : row) mass += w;
    if (!(mass > 0.0)) continue;
    const std::uint64_t total = poisson_sample(mass * mass, rng);
    if (total == 0) continue;
    const AliasTable table(row);
    for (std::uint64_t e = 0; e < total; ++e) {
      std::size_t i = table.sample(rng);
      std::size_t j = table.sample(rng);
      if (i > j) std::swap(i, j);
      ++slice[{i, j}];
    }
  }
  return slice;
}

inline GraphSlice simulate_graph_slice(const LatentState& s, std::size_t t, Rng& rng) {
  if (t >= s.T) throw std::out_of_range("simulate_graph_slice: timestep out of range");
  const auto w = compose_weights(s, t);
  return simulate_slice_from_weights(w, s.p, rng);
}

struct Simulation {
  LatentState state;
  DynamicMultigraph graph;
};

// Latent state from sub-stream 0 of the seed, slice t from sub-stream t + 1.
// The graph's node universe holds all L atoms, including never-active ones.
inline Simulation simulate(const SimConfig& cfg) {
  cfg.validate();
  Rng latent_rng = make_rng(cfg.seed, 0);
  Simulation out;
  out.state = simulate_latent(cfg, latent_rng);
  out.graph = DynamicMultigraph(cfg.T, out.state.L);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    Rng slice_rng = make_rng(cfg.seed, t + 1);
    for (const auto& [pair, n] : simulate_graph_slice(out.state, t, slice_rng)) {
      out.graph.set_count(t, pair.first, pair.second, n);
    }
  }
  return out;
}

}  // namespace dynsnetoc
