#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dynsnetoc/generator.hpp"
#include "dynsnetoc/inference.hpp"
#include "support.hpp"

using namespace dynsnetoc;

namespace {

Hyperparams make_hyper(std::size_t p, bool tau_fixed = true) {
  Hyperparams h;
  h.alpha = 7.0;
  h.sigma = 0.3;
  h.tau = 1.0;
  h.tau_fixed = tau_fixed;
  h.psi = 4.0;
  h.a.assign(p, 1.5);
  h.b.assign(p, 2.0);
  for (std::size_t k = 0; k < p; ++k) h.a[k] += 0.25 * static_cast<double>(k);
  return h;
}

LatentState random_state(std::size_t T, std::size_t p, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  LatentState s(T, p, L);
  s.theta.clear();
  for (double& x : s.w0) x = u(eng);
  for (double& x : s.beta) x = u(eng);
  for (double& x : s.gamma) x = u(eng);
  return s;
}

DynamicMultigraph small_graph() {
  DynamicMultigraph g(3, 5);
  g.add_edges(0, 0, 1, 2);
  g.add_edges(0, 1, 1, 1);
  g.add_edges(0, 2, 3, 1);
  g.add_edges(1, 0, 1, 1);
  g.add_edges(1, 3, 4, 3);
  g.add_edges(2, 0, 4, 1);
  g.add_edges(2, 2, 2, 2);
  return g;
}

Simulation small_simulation(std::uint64_t seed, std::size_t p = 2) {
  SimConfig cfg;
  cfg.hyper = make_hyper(p);
  cfg.hyper.alpha = 8.0;
  cfg.hyper.sigma = 0.2;
  cfg.hyper.psi = 5.0;
  cfg.hyper.a.assign(p, 1.0);
  cfg.hyper.b.assign(p, 1.0);
  cfg.T = 2;
  cfg.epsilon = 0.05;
  cfg.seed = seed;
  return simulate(cfg);
}

}  // namespace

TEST(Parameterization, RoundTripIsExact) {
  for (bool tau_free : {false, true}) {
    Parameterization param{3, 2, 4, tau_free, 1.0};
    const LatentState s = random_state(3, 2, 4, 11);
    Hyperparams h = make_hyper(2, !tau_free);
    h.tau = tau_free ? 2.5 : 1.0;
    const auto q = param.unconstrain(s, h);
    ASSERT_EQ(q.size(), param.dimension());
    LatentState s2;
    Hyperparams h2;
    param.constrain(q, s2, h2);
    EXPECT_NEAR(h2.alpha, h.alpha, 1e-12 * h.alpha);
    EXPECT_NEAR(h2.sigma, h.sigma, 1e-12);
    EXPECT_NEAR(h2.tau, h.tau, 1e-12 * h.tau);
    EXPECT_EQ(h2.tau_fixed, !tau_free);
    EXPECT_NEAR(h2.psi, h.psi, 1e-12 * h.psi);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_NEAR(h2.a[k], h.a[k], 1e-12 * h.a[k]);
      EXPECT_NEAR(h2.b[k], h.b[k], 1e-12 * h.b[k]);
    }
    for (std::size_t i = 0; i < s.w0.size(); ++i) EXPECT_NEAR(s2.w0[i], s.w0[i], 1e-12 * s.w0[i]);
    for (std::size_t i = 0; i < s.beta.size(); ++i) EXPECT_NEAR(s2.beta[i], s.beta[i], 1e-12 * s.beta[i]);
    for (std::size_t i = 0; i < s.gamma.size(); ++i) EXPECT_NEAR(s2.gamma[i], s.gamma[i], 1e-12 * s.gamma[i]);
  }
}

TEST(Parameterization, OriginMapsToUnitValuesAndHalfSigma) {
  Parameterization param{2, 2, 3, true, 1.0};
  const std::vector<double> q(param.dimension(), 0.0);
  LatentState s;
  Hyperparams h;
  param.constrain(q, s, h);
  EXPECT_DOUBLE_EQ(h.sigma, 0.5);
  for (double x : {h.alpha, h.tau, h.psi}) EXPECT_DOUBLE_EQ(x, 1.0);
  for (double x : h.a) EXPECT_DOUBLE_EQ(x, 1.0);
  for (double x : s.w0) EXPECT_DOUBLE_EQ(x, 1.0);
  for (double x : s.beta) EXPECT_DOUBLE_EQ(x, 1.0);
  for (double x : s.gamma) EXPECT_DOUBLE_EQ(x, 1.0);
  EXPECT_EQ(s.gamma.size(), 1u * 2 * 3);
}

TEST(Parameterization, LogJacobianMatchesNumericalDerivatives) {
  // The transform is coordinate-wise, so the Jacobian is diagonal: sum log |dx_c / dq_c|.
  Parameterization param{2, 2, 3, true, 1.0};
  const LatentState s = random_state(2, 2, 3, 5);
  Hyperparams h = make_hyper(2, false);
  h.tau = 1.7;
  const auto q = param.unconstrain(s, h);
  auto flatten = [&](std::span<const double> qq) {
    LatentState ss;
    Hyperparams hh;
    param.constrain(qq, ss, hh);
    std::vector<double> x{hh.alpha, hh.sigma, hh.tau, hh.psi};
    x.insert(x.end(), hh.a.begin(), hh.a.end());
    x.insert(x.end(), hh.b.begin(), hh.b.end());
    x.insert(x.end(), ss.w0.begin(), ss.w0.end());
    x.insert(x.end(), ss.beta.begin(), ss.beta.end());
    x.insert(x.end(), ss.gamma.begin(), ss.gamma.end());
    return x;
  };
  double numeric = 0.0;
  const double eps = 1e-6;
  for (std::size_t c = 0; c < q.size(); ++c) {
    auto up = q, dn = q;
    up[c] += eps;
    dn[c] -= eps;
    const auto xu = flatten(up), xd = flatten(dn);
    numeric += std::log(std::abs(xu[c] - xd[c]) / (2 * eps));
  }
  EXPECT_NEAR(param.log_jacobian(q), numeric, 1e-6);
}

TEST(Parameterization, RejectsInvalidInput) {
  Parameterization param{2, 1, 2, false, 1.0};
  LatentState s = random_state(2, 1, 2, 1);
  Hyperparams h = make_hyper(1);
  s.w0[0] = 0.0;
  EXPECT_THROW(param.unconstrain(s, h), ParameterDomainError);
  s = random_state(2, 1, 2, 1);
  h.sigma = 1.0;
  EXPECT_THROW(param.unconstrain(s, h), ParameterDomainError);
  h = make_hyper(2);
  EXPECT_THROW(param.unconstrain(s, h), ShapeError);
  LatentState out;
  EXPECT_THROW(param.constrain(std::vector<double>(3, 0.0), out, h), ShapeError);
}

TEST(PosteriorModel, DensityIsPosteriorPlusJacobianWithMatchingGradient) {
  const auto g = small_graph();
  PriorSpec priors;
  for (bool tau_free : {false, true}) {
    Parameterization param{3, 2, 6, tau_free, 1.0};
    PosteriorModel model(g, param, priors);
    const LatentState s = random_state(3, 2, 6, 17);
    Hyperparams h = make_hyper(2, !tau_free);
    const auto q = param.unconstrain(s, h);
    std::vector<double> grad(q.size());
    const double lp = model.log_density_gradient(q, grad);
    PosteriorEvaluator eval(g, priors);
    EXPECT_NEAR(lp, eval.log_posterior(s, h) + param.log_jacobian(q), 1e-9 * std::abs(lp));

    std::vector<double> scratch(q.size());
    for (std::size_t c = 0; c < q.size(); ++c) {
      auto up = q, dn = q;
      up[c] += 1e-6;
      dn[c] -= 1e-6;
      const double fd =
          (model.log_density_gradient(up, scratch) - model.log_density_gradient(dn, scratch)) / 2e-6;
      EXPECT_NEAR(grad[c], fd, 1e-5 * std::max(1.0, std::abs(grad[c]))) << "coordinate " << c;
    }
  }
}

TEST(Initialization, EmptyGraphGivesEqualBaseWeights) {
  DynamicMultigraph g(2, 6);
  InferenceConfig cfg;
  cfg.p = 2;
  Rng rng = make_rng(1, 0);
  const auto init = initialize_state(g, cfg, rng);
  ASSERT_EQ(init.state.L, 6u);
  for (double w : init.state.w0) EXPECT_DOUBLE_EQ(w, init.state.w0[0]);
  EXPECT_TRUE(init.state.all_positive());
  EXPECT_DOUBLE_EQ(init.hyper.sigma, 0.2);
  EXPECT_TRUE(init.hyper.tau_fixed);
  EXPECT_DOUBLE_EQ(init.hyper.tau, 1.0);
}

TEST(Initialization, DeterministicFiniteAndOrderedByDegree) {
  const auto g = small_graph();
  InferenceConfig cfg;
  cfg.p = 2;
  cfg.L = 8;
  Rng r1 = make_rng(3, 0), r2 = make_rng(3, 0);
  const auto a = initialize_state(g, cfg, r1), b = initialize_state(g, cfg, r2);
  EXPECT_EQ(a.state.w0, b.state.w0);
  EXPECT_EQ(a.state.beta, b.state.beta);
  EXPECT_EQ(a.hyper.alpha, b.hyper.alpha);
  ASSERT_EQ(a.state.L, 8u);
  // Busy nodes start heavier than padding nodes, which all share one weight.
  EXPECT_GT(a.state.w0[0], a.state.w0[7]);
  EXPECT_DOUBLE_EQ(a.state.w0[5], a.state.w0[7]);
  PosteriorEvaluator eval(g, cfg.prior_scales);
  EXPECT_TRUE(std::isfinite(eval.log_posterior(a.state, a.hyper)));

  cfg.L = 3;
  EXPECT_THROW(initialize_state(g, cfg, r1), ShapeError);
  DynamicMultigraph none(1, 0);
  cfg.L = 0;
  EXPECT_THROW(initialize_state(none, cfg, r1), InsufficientDataError);
}

TEST(InferenceConfig, RejectsInvalidSettings) {
  InferenceConfig cfg;
  cfg.p = 0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
  cfg = InferenceConfig{};
  cfg.target_accept = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
  cfg = InferenceConfig{};
  cfg.tau_fixed_value = -1.0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
  cfg = InferenceConfig{};
  cfg.chains = 0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
}

TEST(RunNuts, ShortChainsAreDeterministicWithFixedTau) {
  const auto sim = small_simulation(21);
  InferenceConfig cfg;
  cfg.p = 2;
  cfg.num_warmup = 150;
  cfg.num_samples = 100;
  cfg.thin = 2;
  cfg.chains = 2;
  cfg.seed = 9;
  const auto chains = run_nuts(sim.graph, cfg);
  ASSERT_EQ(chains.size(), 2u);
  EXPECT_NE(chains[0].seed, chains[1].seed);
  for (const auto& c : chains) {
    ASSERT_EQ(c.size(), 50u);
    EXPECT_EQ(c.layout().L, sim.graph.num_nodes());
    for (std::size_t n = 0; n < c.size(); ++n) {
      EXPECT_TRUE(std::isfinite(c.log_posterior_trace()[n]));
      EXPECT_EQ(c.draw(n)[2], 1.0);  // tau, bit for bit
      const double sigma = c.draw(n)[1];
      EXPECT_GT(sigma, 0.0);
      EXPECT_LT(sigma, 1.0);
    }
  }
  // Stored log posterior excludes the Jacobian.
  PosteriorEvaluator eval(sim.graph, cfg.prior_scales);
  const auto& c0 = chains[0];
  EXPECT_NEAR(c0.log_posterior_trace()[7], eval.log_posterior(c0.state(7), c0.hyper(7)),
              1e-8 * std::abs(c0.log_posterior_trace()[7]));

  const auto again = run_nuts_chain(sim.graph, cfg, 1);
  EXPECT_EQ(again.log_posterior_trace(), chains[1].log_posterior_trace());
}

TEST(RunNuts, FreeTauIsSampled) {
  const auto sim = small_simulation(22);
  InferenceConfig cfg;
  cfg.p = 2;
  cfg.num_warmup = 100;
  cfg.num_samples = 50;
  cfg.tau_fixed_value.reset();
  const auto chain = run_nuts_chain(sim.graph, cfg);
  const auto tau = chain.column(2);
  EXPECT_GT(*std::max_element(tau.begin(), tau.end()) - *std::min_element(tau.begin(), tau.end()), 0.0);
}

TEST(RunNuts, LongerChainsAgreeOnLogPosterior) {
  // One community: with ~20 nodes a second community can empty out (a_k -> 0),
  // and its log-scores then wander far, which no short run mixes over.
  const auto sim = small_simulation(23, 1);
  InferenceConfig cfg;
  cfg.p = 1;
  cfg.num_warmup = 500;
  cfg.num_samples = 500;
  cfg.chains = 2;
  cfg.seed = 4;
  const auto chains = run_nuts(sim.graph, cfg);
  std::vector<std::vector<double>> lp;
  for (const auto& c : chains) lp.push_back(c.log_posterior_trace());
  EXPECT_LT(split_rhat(lp), 1.1);
  for (const auto& c : chains) EXPECT_LT(divergence_rate(c), 0.05);
}

TEST(SplitRhat, NearOneForIidAndLargeForShiftedChains) {
  std::mt19937_64 eng(2);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> iid(4, std::vector<double>(2000));
  for (auto& c : iid)
    for (double& x : c) x = z(eng);
  EXPECT_NEAR(split_rhat(iid), 1.0, 0.01);
  auto shifted = iid;
  for (double& x : shifted[0]) x += 3.0;
  EXPECT_GT(split_rhat(shifted), 1.3);
  // A drift within one chain is caught by the split.
  std::vector<std::vector<double>> drift{std::vector<double>(2000)};
  for (std::size_t n = 0; n < 2000; ++n) drift[0][n] = z(eng) + (n < 1000 ? 0.0 : 3.0);
  EXPECT_GT(split_rhat(drift), 1.3);
  EXPECT_THROW(split_rhat({{1.0, 2.0, 3.0}}), InsufficientDataError);
}

namespace {

Chain chain_from_states(const std::vector<LatentState>& states, const Hyperparams& h) {
  const auto& s0 = states.front();
  Chain c(DrawLayout{s0.T, s0.p, s0.L});
  for (const auto& s : states) c.push_back(pack_draw(s, h), 0.0);
  return c;
}

}  // namespace

TEST(Coverage, TruthRepeatedIsFullyCoveredAndShiftedIsNot) {
  const LatentState truth = random_state(2, 1, 10, 3);
  const Hyperparams h = make_hyper(1);
  std::vector<LatentState> same(120, truth);
  const auto full = coverage_eval(chain_from_states(same, h), truth, 0.95);
  EXPECT_DOUBLE_EQ(full.w0, 1.0);
  EXPECT_DOUBLE_EQ(full.beta, 1.0);

  LatentState shifted = truth;
  for (double& x : shifted.w0) x += 10.0;
  for (double& x : shifted.beta) x += 10.0;
  std::vector<LatentState> off(120, shifted);
  const auto none = coverage_eval(chain_from_states(off, h), truth, 0.95);
  EXPECT_DOUBLE_EQ(none.w0, 0.0);
  EXPECT_DOUBLE_EQ(none.beta, 0.0);

  std::vector<LatentState> few(99, truth);
  EXPECT_THROW(coverage_eval(chain_from_states(few, h), truth, 0.95), InsufficientDataError);
  EXPECT_THROW(coverage_eval(chain_from_states(same, h), truth, 1.0), ParameterDomainError);
  EXPECT_THROW(coverage_eval(chain_from_states(same, h), random_state(2, 1, 9, 3), 0.95), ShapeError);
}

TEST(Coverage, CalibratedWhenTruthIsExchangeableWithDraws) {
  // Truth and draws come from the same distribution: coverage concentrates at the level.
  std::mt19937_64 eng(8);
  std::lognormal_distribution<double> ln(0.0, 0.7);
  const std::size_t L = 400;
  auto draw_state = [&]() {
    LatentState s(1, 1, L);
    s.theta.clear();
    for (double& x : s.w0) x = ln(eng);
    for (double& x : s.beta) x = ln(eng);
    return s;
  };
  const LatentState truth = draw_state();
  std::vector<LatentState> states;
  for (int n = 0; n < 1000; ++n) states.push_back(draw_state());
  const auto cov = coverage_eval(chain_from_states(states, make_hyper(1)), truth, 0.9);
  // Binomial sd at L = 400 is 0.015.
  EXPECT_NEAR(cov.w0, 0.9, 0.05);
  EXPECT_NEAR(cov.beta, 0.9, 0.05);
}

TEST(Coverage, MatchesCommunitiesToTruthBeforeScoring) {
  // Draws carry the truth with its two communities swapped.
  const LatentState truth = random_state(2, 2, 6, 12);
  LatentState swapped = truth;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 6; ++i) {
      swapped.beta_at(t, 0, i) = truth.beta_at(t, 1, i);
      swapped.beta_at(t, 1, i) = truth.beta_at(t, 0, i);
    }
  for (std::size_t i = 0; i < 6; ++i) {
    swapped.gamma_at(0, 0, i) = truth.gamma_at(0, 1, i);
    swapped.gamma_at(0, 1, i) = truth.gamma_at(0, 0, i);
  }
  std::vector<LatentState> states(150, swapped);
  const auto cov = coverage_eval(chain_from_states(states, make_hyper(2)), truth, 0.95);
  EXPECT_DOUBLE_EQ(cov.beta, 1.0);
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> x{4.0, 1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
  std::vector<double> empty;
  EXPECT_THROW(quantile(empty, 0.5), InsufficientDataError);
}
