// Command-line front end: simulate, infer, ppc, stats, sparsity-scan,
// tail-fit, export-affiliations, export-sankey, ingest.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 data error,
// 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dynsnetoc/dynsnetoc.hpp"

namespace fs = std::filesystem;
using namespace dynsnetoc;
using io::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Paths {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string graph;
  std::string labels;
  std::vector<std::string> draws;
  std::string corpus;
  long long timestep = 0;  // 0 = every timestep
};

fs::path out_dir(const Paths& paths, const io::RunConfig& cfg) {
  return paths.out.empty() ? cfg.output_directory : fs::path(paths.out);
}

fs::path graph_path(const Paths& paths, const io::RunConfig& cfg) {
  return paths.graph.empty() ? out_dir(paths, cfg) / "edges.tsv" : fs::path(paths.graph);
}

fs::path draws_path(const fs::path& dir, std::size_t chain) {
  return dir / ("draws.chain" + std::to_string(chain + 1) + ".csv");
}

// Graph plus labels, taken from --labels or a labels.txt beside the graph.
DynamicMultigraph load_graph_with_labels(const Paths& paths, const io::RunConfig& cfg) {
  const fs::path gp = graph_path(paths, cfg);
  DynamicMultigraph g = io::load_graph(gp);
  const fs::path lp = paths.labels.empty() ? gp.parent_path() / "labels.txt" : fs::path(paths.labels);
  if (!paths.labels.empty() || fs::exists(lp)) {
    auto labels = io::load_labels(lp);
    if (labels.size() != g.num_nodes()) throw ParseError("label file has " + std::to_string(labels.size()) +
                                                         " lines for " + std::to_string(g.num_nodes()) + " nodes");
    g.set_labels(std::move(labels));
  }
  return g;
}

// Draw files from --draws, or every draws.chainN.csv in the output directory.
std::vector<Chain> load_chains(const Paths& paths, const io::RunConfig& cfg) {
  std::vector<Chain> chains;
  if (!paths.draws.empty()) {
    for (const auto& d : paths.draws) chains.push_back(io::load_draws(d));
  } else {
    const fs::path dir = out_dir(paths, cfg);
    for (std::size_t c = 0; fs::exists(draws_path(dir, c)); ++c) chains.push_back(io::load_draws(draws_path(dir, c)));
  }
  if (chains.empty()) throw InsufficientDataError("no draw files found");
  for (const auto& c : chains)
    if (!(c.layout() == chains[0].layout())) throw ShapeError("draw files have different dimensions");
  return chains;
}

Chain concatenate(const std::vector<Chain>& chains) {
  Chain all(chains[0].layout());
  for (const auto& c : chains)
    for (std::size_t n = 0; n < c.size(); ++n) all.push_back(c.draw(n), c.log_posterior_trace()[n]);
  return all;
}

json stats_json(const DynamicMultigraph& g) {
  json arr = json::array();
  for (std::size_t t = 0; t < g.num_timesteps(); ++t) {
    const SummaryStats s = summary_stats(g, t);
    json freq = json::object();
    for (const auto& [j, c] : s.degree_freq) freq[std::to_string(j)] = c;
    arr.push_back({{"t", t + 1}, {"active_count", s.active_count}, {"edge_count", s.edge_count}, {"degree_freq", freq}});
  }
  return arr;
}

int cmd_simulate(const io::RunConfig& cfg, const Paths& paths) {
  const Simulation sim = simulate(cfg.sim);
  const fs::path dir = out_dir(paths, cfg);
  io::save_graph(sim.graph, dir / "edges.tsv");
  io::save_state(sim.state, cfg.sim.hyper, dir / "truth.csv");
  std::printf("simulated T=%zu L=%zu; wrote %s\n", cfg.sim.T, sim.state.L, (dir / "edges.tsv").c_str());
  return 0;
}

int cmd_infer(const io::RunConfig& cfg, const Paths& paths) {
  const DynamicMultigraph g = load_graph_with_labels(paths, cfg);
  const auto chains = run_nuts(g, cfg.infer);
  const fs::path dir = out_dir(paths, cfg);
  for (std::size_t c = 0; c < chains.size(); ++c) io::save_draws(chains[c], draws_path(dir, c));
  io::save_json(io::diagnostics_json(chains), dir / "diagnostics.json");
  std::printf("wrote %zu chain(s) to %s\n", chains.size(), dir.c_str());
  return 0;
}

int cmd_ppc(const io::RunConfig& cfg, const Paths& paths) {
  const DynamicMultigraph g = load_graph_with_labels(paths, cfg);
  const Chain all = concatenate(load_chains(paths, cfg));
  const auto rows = posterior_predictive(all, g, cfg.ppc_n_rep, cfg.ppc_seed, cfg.ppc_level);
  const fs::path dir = out_dir(paths, cfg);
  io::save_ppc(rows, dir / "ppc.csv");
  const auto cover = ppc_coverage(rows, g.num_timesteps());
  for (std::size_t t = 0; t < cover.size(); ++t)
    std::printf("t=%zu: %.1f%% of populated degrees inside the envelope\n", t + 1, 100.0 * cover[t]);
  return 0;
}

int cmd_stats(const io::RunConfig& cfg, const Paths& paths) {
  const DynamicMultigraph g = load_graph_with_labels(paths, cfg);
  const json doc = stats_json(g);
  io::save_json(doc, out_dir(paths, cfg) / "stats.json");
  for (const auto& s : doc)
    std::printf("t=%d active=%zu edges=%llu\n", s["t"].get<int>(), s["active_count"].get<std::size_t>(),
                s["edge_count"].get<unsigned long long>());
  return 0;
}

int cmd_sparsity_scan(const io::RunConfig& cfg, const Paths& paths) {
  const SparsityFit fit = sparsity_scan(cfg.sim, cfg.scan_alphas, cfg.scan_seeds, cfg.scan_epsilon);
  json points = json::array();
  for (const auto& p : fit.points)
    points.push_back({{"alpha", p.alpha}, {"seed", p.seed}, {"active_nodes", p.active_nodes}, {"edges", p.edges}});
  const json doc = {{"sigma", cfg.sim.hyper.sigma}, {"slope", fit.slope},   {"stderr", fit.stderr_},
                    {"ci_low", fit.ci_low},         {"ci_high", fit.ci_high}, {"points", points}};
  io::save_json(doc, out_dir(paths, cfg) / "sparsity.json");
  std::printf("slope %.4f (95%% CI %.4f .. %.4f)\n", fit.slope, fit.ci_low, fit.ci_high);
  return 0;
}

int cmd_tail_fit(const io::RunConfig& cfg, const Paths& paths) {
  const DynamicMultigraph g = load_graph_with_labels(paths, cfg);
  if (paths.timestep < 0 || static_cast<std::size_t>(paths.timestep) > g.num_timesteps())
    throw ConfigError("--t must lie in [1, T]");
  json arr = json::array();
  for (std::size_t t = 0; t < g.num_timesteps(); ++t) {
    if (paths.timestep != 0 && t + 1 != static_cast<std::size_t>(paths.timestep)) continue;
    const TailFit fit = degree_tail_exponent(summary_stats(g, t));
    arr.push_back({{"t", t + 1},
                   {"exponent", fit.exponent},
                   {"stderr", fit.stderr_},
                   {"mle_exponent", fit.mle_exponent},
                   {"mle_stderr", fit.mle_stderr},
                   {"curvature", fit.curvature},
                   {"curvature_stderr", fit.curvature_stderr},
                   {"power_law_plausible", fit.power_law_plausible},
                   {"window_max_degree", fit.window_max_degree},
                   {"num_bins", fit.num_bins}});
    std::printf("t=%zu exponent %.3f (se %.3f), mle %.3f%s\n", t + 1, fit.exponent, fit.stderr_, fit.mle_exponent,
                fit.power_law_plausible ? "" : " [curved: not power-law]");
  }
  io::save_json(arr, out_dir(paths, cfg) / "tail.json");
  return 0;
}

AffiliationTable build_affiliations(const io::RunConfig& cfg, const Paths& paths) {
  const DynamicMultigraph g = load_graph_with_labels(paths, cfg);
  return affiliations(align_labels(concatenate(load_chains(paths, cfg))), g);
}

int cmd_export_affiliations(const io::RunConfig& cfg, const Paths& paths) {
  const fs::path file = out_dir(paths, cfg) / "affiliations.csv";
  io::save_affiliations(build_affiliations(cfg, paths), file);
  std::printf("wrote %s\n", file.c_str());
  return 0;
}

int cmd_export_sankey(const io::RunConfig& cfg, const Paths& paths) {
  const fs::path dir = out_dir(paths, cfg);
  const AffiliationTable table = build_affiliations(cfg, paths);
  const SankeyFlows flows = sankey_flows(table, cfg.top_k);
  io::save_affiliations(table, dir / "affiliations.csv");
  io::save_json(io::sankey_json(flows.records), dir / "sankey.json");
  std::printf("wrote %zu flow records (%zu argmax ties broken toward the lower index)\n", flows.records.size(),
              flows.argmax_ties);
  return 0;
}

int cmd_ingest(const io::RunConfig& cfg, const Paths& paths) {
  if (paths.corpus.empty()) throw ConfigError("ingest requires --corpus");
  const DynamicMultigraph g = io::ingest_corpus(io::load_corpus(paths.corpus), cfg.vocab_min_count, cfg.dedup);
  const fs::path dir = out_dir(paths, cfg);
  io::save_graph(g, dir / "edges.tsv");
  io::save_labels(g.labels(), dir / "labels.txt");
  std::printf("ingested T=%zu N=%zu\n", g.num_timesteps(), g.num_nodes());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic sparse networks with overlapping communities"};
  app.require_subcommand(1);
  Paths paths;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const io::RunConfig&, const Paths&);
  };
  const Command commands[] = {
      {"simulate", "simulate a dynamic multigraph; writes edges.tsv and truth.csv", cmd_simulate},
      {"infer", "run NUTS chains; writes draws.chainN.csv and diagnostics.json", cmd_infer},
      {"ppc", "posterior predictive degree envelopes; writes ppc.csv", cmd_ppc},
      {"stats", "per-timestep summary statistics; writes stats.json", cmd_stats},
      {"sparsity-scan", "edges vs active nodes slope over an alpha grid; writes sparsity.json", cmd_sparsity_scan},
      {"tail-fit", "degree power-law exponent; writes tail.json", cmd_tail_fit},
      {"export-affiliations", "normalized community affiliations; writes affiliations.csv", cmd_export_affiliations},
      {"export-sankey", "top-k community flows; writes sankey.json and affiliations.csv", cmd_export_sankey},
      {"ingest", "co-occurrence graph from a corpus; writes edges.tsv and labels.txt", cmd_ingest},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", paths.config, "JSON run configuration");
    sub->add_option("--set", paths.overrides, "override a configuration key: section.key=value")->allow_extra_args(false);
    sub->add_option("--out", paths.out, "output directory (default: output.directory)");
    sub->add_option("--graph", paths.graph, "edge-list file (default: <out>/edges.tsv)");
    sub->add_option("--labels", paths.labels, "node label file (default: labels.txt beside the graph)");
    sub->add_option("--draws", paths.draws, "draw CSV files (default: <out>/draws.chainN.csv)");
    sub->add_option("--corpus", paths.corpus, "corpus file with 't<TAB>sentence' lines");
    sub->add_option("--t", paths.timestep, "single 1-based timestep (tail-fit)");
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const io::RunConfig cfg = io::load_config(paths.config, paths.overrides);
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(cfg, paths);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterDomainError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}
