#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <gtest/gtest.h>

#include "dynsnetoc/diagnostics.hpp"
#include "dynsnetoc/generator.hpp"
#include "support.hpp"

using namespace dynsnetoc;
namespace ts = testing_support;

namespace {

SimConfig recovery_regime_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.hyper.alpha = 60.0;
  cfg.hyper.sigma = 0.2;
  cfg.hyper.tau = 1.0;
  cfg.hyper.psi = 5.0;
  cfg.hyper.a = {1.0, 1.0};
  cfg.hyper.b = {1.0, 2.0};
  cfg.T = 3;
  cfg.epsilon = 1e-4;
  cfg.seed = seed;
  return cfg;
}

double tail_oracle(double sigma, double tau, double eps) {
  auto f = [&](double w) { return std::exp(-(1.0 + sigma) * std::log(w) - tau * w); };
  return ts::integrate_to_inf(f, eps) / std::tgamma(1.0 - sigma);
}

}  // namespace

TEST(SimulateGraphSlice, EmptyWeightsGiveEmptySlice) {
  Rng rng = make_rng(1);
  EXPECT_TRUE(simulate_slice_from_weights(std::vector<double>{}, 2, rng).empty());
  EXPECT_TRUE(simulate_slice_from_weights(std::vector<double>(6, 0.0), 2, rng).empty());
  const LatentState empty(2, 2, 0);
  EXPECT_TRUE(simulate_graph_slice(empty, 1, rng).empty());
  EXPECT_THROW(simulate_graph_slice(empty, 2, rng), std::out_of_range);
}

TEST(SimulateGraphSlice, SingleNodeProducesOnlySelfLoops) {
  Rng rng = make_rng(2);
  const std::vector<double> w{2.0};
  std::vector<double> counts;
  for (int r = 0; r < 10000; ++r) {
    const auto slice = simulate_slice_from_weights(w, 1, rng);
    std::uint64_t total = 0;
    for (const auto& [pair, n] : slice) {
      EXPECT_EQ(pair, NodePair(0, 0));
      total += n;
    }
    counts.push_back(static_cast<double>(total));
  }
  EXPECT_NEAR(ts::mean(counts), 4.0, 0.07);
}

TEST(SimulateGraphSlice, PairFrequenciesMatchEnumeration) {
  // p = 2, L = 3. A multiedge lands on unordered pair {i, j} with probability
  // sum_k c_ij w_ik w_jk / sum_k W_k^2, c = 2 off the diagonal and 1 on it.
  const std::size_t L = 3, p = 2;
  const std::vector<double> w{0.3, 0.5, 0.2, 0.6, 0.1, 0.4};  // [k][i]
  std::map<NodePair, double> prob;
  double norm = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    double W = 0.0;
    for (std::size_t i = 0; i < L; ++i) W += w[k * L + i];
    norm += W * W;
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) prob[{std::min(i, j), std::max(i, j)}] += w[k * L + i] * w[k * L + j];
  }
  for (auto& [pair, v] : prob) v /= norm;

  Rng rng = make_rng(3);
  std::map<NodePair, double> counts;
  double total = 0.0;
  while (total < 100000.0) {
    for (const auto& [pair, n] : simulate_slice_from_weights(w, p, rng)) {
      EXPECT_LE(pair.first, pair.second);
      counts[pair] += static_cast<double>(n);
      total += static_cast<double>(n);
    }
  }
  for (const auto& [pair, q] : prob) {
    const double se = std::sqrt(q * (1.0 - q) / total);
    EXPECT_NEAR(counts[pair] / total, q, 3.0 * se) << pair.first << ',' << pair.second;
  }
}

TEST(SimulateGraphSlice, TwoStageEqualsDirectPairwisePoisson) {
  // Joint law of (n11, n12, n22) vs independent Poissons (w1^2, 2 w1 w2, w2^2).
  const std::vector<double> w{0.8, 0.5};
  const double r11 = 0.64, r12 = 0.8, r22 = 0.25;
  Rng rng = make_rng(4);
  const int reps = 100000, cap = 6;
  auto cell = [&](std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    auto clip = [&](std::uint64_t x) { return static_cast<int>(std::min<std::uint64_t>(x, cap)); };
    return (clip(a) * (cap + 1) + clip(b)) * (cap + 1) + clip(c);
  };
  const int cells = (cap + 1) * (cap + 1) * (cap + 1);
  std::vector<double> obs(cells, 0.0), expected(cells, 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto s = simulate_slice_from_weights(w, 1, rng);
    auto get = [&](std::size_t i, std::size_t j) {
      auto it = s.find({i, j});
      return it == s.end() ? std::uint64_t{0} : it->second;
    };
    obs[cell(get(0, 0), get(0, 1), get(1, 1))] += 1.0;
  }
  auto pmf = [&](double rate, int n) {
    const boost::math::poisson_distribution<> d(rate);
    return n < cap ? boost::math::pdf(d, n) : boost::math::cdf(boost::math::complement(d, cap - 1));
  };
  for (int a = 0; a <= cap; ++a)
    for (int b = 0; b <= cap; ++b)
      for (int c = 0; c <= cap; ++c) expected[cell(a, b, c)] = reps * pmf(r11, a) * pmf(r12, b) * pmf(r22, c);
  EXPECT_GT(ts::chi_square_pvalue(obs, expected), 0.01);
}

TEST(SimulateLatent, LargePsiGivesSmoothTrajectories) {
  SimConfig cfg = recovery_regime_config(5);
  cfg.hyper.alpha = 10.0;
  cfg.epsilon = 1e-2;
  cfg.hyper.psi = 1e4;
  Rng rng = make_rng(5);
  const auto s = simulate_latent(cfg, rng);
  ASSERT_GT(s.L, 0u);
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < s.T; ++t)
    for (std::size_t k = 0; k < s.p; ++k)
      for (std::size_t i = 0; i < s.L; ++i)
        worst = std::max(worst, std::abs(s.beta_at(t + 1, k, i) - s.beta_at(t, k, i)) / s.beta_at(t, k, i));
  EXPECT_LT(worst, 0.1);
}

TEST(SimulateLatent, ScoreMarginalsAreStationary) {
  // Finite-activity GGP with about 10^4 atoms.
  SimConfig cfg;
  cfg.hyper.alpha = 5000.0;
  cfg.hyper.sigma = -0.5;
  cfg.hyper.tau = 1.0;
  cfg.hyper.psi = 5.0;
  cfg.hyper.a = {1.0, 3.0};
  cfg.hyper.b = {2.0, 1.5};
  cfg.T = 4;
  cfg.epsilon = 0.0;
  Rng rng = make_rng(6);
  const auto s = simulate_latent(cfg, rng);
  ASSERT_GT(s.L, 9000u);
  const double n = static_cast<double>(s.L);
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = cfg.hyper.a[k], b = cfg.hyper.b[k];
    const double var = a / (b * b);
    const double mu4 = 3.0 * a * (a + 2.0) / std::pow(b, 4);  // fourth central moment of Gamma(a, b)
    for (std::size_t t = 0; t < s.T; ++t) {
      std::vector<double> x(s.L);
      for (std::size_t i = 0; i < s.L; ++i) x[i] = s.beta_at(t, k, i);
      EXPECT_NEAR(ts::mean(x), a / b, 4.0 * std::sqrt(var / n)) << "t=" << t << " k=" << k;
      EXPECT_NEAR(ts::variance(x), var, 4.0 * std::sqrt((mu4 - var * var) / n)) << "t=" << t << " k=" << k;
    }
  }
}

TEST(SimulateLatent, AtomCountInsideQuadratureBand) {
  const SimConfig cfg = recovery_regime_config(7);
  const double mean = cfg.hyper.alpha * tail_oracle(0.2, 1.0, 1e-4);
  const boost::math::poisson_distribution<> band(mean);
  const double lo = boost::math::quantile(band, 0.005), hi = boost::math::quantile(band, 0.995);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng = make_rng(seed);
    const auto s = simulate_latent(recovery_regime_config(seed), rng);
    EXPECT_GE(static_cast<double>(s.L), lo);
    EXPECT_LE(static_cast<double>(s.L), hi);
    for (std::size_t i = 0; i < s.L; ++i) EXPECT_LE(s.theta[i], cfg.hyper.alpha);
  }
}

TEST(SimulateLatent, ZeroAtomsGiveValidEmptyState) {
  SimConfig cfg = recovery_regime_config(8);
  cfg.hyper.sigma = -0.5;
  cfg.hyper.alpha = 1e-9;
  cfg.epsilon = 0.0;
  const auto sim = simulate(cfg);
  EXPECT_EQ(sim.state.L, 0u);
  EXPECT_NO_THROW(sim.state.check_shape());
  for (std::size_t t = 0; t < cfg.T; ++t) EXPECT_TRUE(sim.graph.slice(t).empty());
}

TEST(Simulate, ActiveNodesMatchSemiAnalyticExpectation) {
  // Given the latent state, node i is inactive at t with probability
  // exp(-sum_k w_ik (2 W_k - w_ik)); compare the observed active count to the
  // sum of activation probabilities for every seed and timestep.
  double pooled_obs = 0.0, pooled_exp = 0.0, pooled_var = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sim = simulate(recovery_regime_config(seed));
    const auto& s = sim.state;
    for (std::size_t t = 0; t < s.T; ++t) {
      const auto w = compose_weights(s, t);
      std::vector<double> W(s.p, 0.0);
      for (std::size_t k = 0; k < s.p; ++k)
        for (std::size_t i = 0; i < s.L; ++i) W[k] += w[k * s.L + i];
      double expected = 0.0, var = 0.0;
      for (std::size_t i = 0; i < s.L; ++i) {
        double rate = 0.0;
        for (std::size_t k = 0; k < s.p; ++k) rate += w[k * s.L + i] * (2.0 * W[k] - w[k * s.L + i]);
        const double q = -std::expm1(-rate);
        expected += q;
        var += q * (1.0 - q);
      }
      const double observed = static_cast<double>(summary_stats(sim.graph, t).active_count);
      EXPECT_NEAR(observed, expected, 5.0 * std::sqrt(var) + 5.0) << "seed " << seed << " t " << t;
      pooled_obs += observed;
      pooled_exp += expected;
      pooled_var += var;
    }
  }
  EXPECT_NEAR(pooled_obs, pooled_exp, 4.0 * std::sqrt(pooled_var) + 10.0);
}

TEST(Simulate, MeanActivityNondecreasingInAlpha) {
  double previous = 0.0;
  for (double alpha : {10.0, 30.0, 60.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      SimConfig cfg = recovery_regime_config(seed);
      cfg.hyper.alpha = alpha;
      cfg.T = 1;
      total += static_cast<double>(summary_stats(simulate(cfg).graph, 0).active_count);
    }
    EXPECT_GE(total / 20.0, previous) << "alpha " << alpha;
    previous = total / 20.0;
  }
}

TEST(Simulate, DeterministicPerSeedAndCarriesAllAtoms) {
  const auto a = simulate(recovery_regime_config(9));
  const auto b = simulate(recovery_regime_config(9));
  const auto c = simulate(recovery_regime_config(10));
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.state.w0, b.state.w0);
  EXPECT_NE(a.graph, c.graph);
  EXPECT_EQ(a.graph.num_nodes(), a.state.L);
  for (std::size_t t = 0; t < a.graph.num_timesteps(); ++t)
    for (const auto& [pair, n] : a.graph.slice(t)) {
      EXPECT_LE(pair.first, pair.second);
      EXPECT_GE(n, 1u);
    }
}

TEST(SimConfig, Validation) {
  SimConfig cfg = recovery_regime_config(1);
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
  cfg.hyper.sigma = -0.3;
  EXPECT_NO_THROW(cfg.validate());
  cfg.T = 0;
  EXPECT_THROW(cfg.validate(), ParameterDomainError);
}
