// Simulates a small dynamic network, fits the model with NUTS and prints
// posterior summaries and community affiliations of the busiest nodes.

#include <algorithm>
#include <cstdio>
#include <vector>

#include "dynsnetoc/dynsnetoc.hpp"

using namespace dynsnetoc;

int main() {
  SimConfig sim;
  sim.hyper.alpha = 10.0;
  sim.hyper.sigma = 0.2;
  sim.hyper.tau = 1.0;
  sim.hyper.psi = 5.0;
  sim.hyper.a = {1.0, 1.0};
  sim.hyper.b = {1.0, 2.0};
  sim.T = 3;
  sim.epsilon = 1e-2;
  sim.seed = 7;
  const Simulation data = simulate(sim);

  for (std::size_t t = 0; t < data.graph.num_timesteps(); ++t) {
    const SummaryStats s = summary_stats(data.graph, t);
    std::printf("t=%zu: %zu active nodes, %llu edges\n", t + 1, s.active_count,
                static_cast<unsigned long long>(s.edge_count));
  }

  InferenceConfig cfg;
  cfg.p = 2;
  cfg.num_warmup = 300;
  cfg.num_samples = 300;
  cfg.seed = 1;
  const Chain chain = align_labels(run_nuts(data.graph, cfg).front());

  std::vector<double> alpha = chain.column(0), sigma = chain.column(1);
  std::printf("alpha: median %.2f (truth %.2f)\n", quantile(alpha, 0.5), sim.hyper.alpha);
  std::printf("sigma: median %.3f (truth %.3f)\n", quantile(sigma, 0.5), sim.hyper.sigma);

  const AffiliationTable table = affiliations(chain, data.graph);
  const SankeyFlows flows = sankey_flows(table, 10);
  for (const FlowRecord& f : flows.records)
    std::printf("t=%zu community %d -> %d: %zu nodes\n", f.t + 1, f.from, f.to, f.count);
  return 0;
}
