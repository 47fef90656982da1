#pragma once

// Graph summary statistics, empirical checks of the sparsity and power-law
// regimes, posterior predictive degree envelopes, community affiliations and
// Sankey flow records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "chain.hpp"
#include "errors.hpp"
#include "generator.hpp"
#include "inference.hpp"
#include "model.hpp"

namespace dynsnetoc {

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

struct SummaryStats {
  std::vector<double> degree;               // incident multiedges per node, self-loops counted once
  std::vector<std::size_t> simple_degree;   // binarized, self-loops excluded
  std::size_t active_count = 0;             // nodes with degree >= 1
  std::map<std::size_t, std::size_t> degree_freq;  // simple degree j >= 1 -> number of nodes
  std::uint64_t edge_count = 0;             // multiedges over unordered pairs i != j
};

// A node whose only edges are self-loops is active but has simple degree 0,
// so it does not appear in degree_freq.
inline SummaryStats summary_stats(const DynamicMultigraph& g, std::size_t t) {
  if (t >= g.num_timesteps()) throw std::out_of_range("summary_stats: timestep out of range");
  SummaryStats s;
  const std::size_t n = g.num_nodes();
  s.degree.assign(n, 0.0);
  s.simple_degree.assign(n, 0);
  for (const auto& [pair, count] : g.slice(t)) {
    const auto [i, j] = pair;
    s.degree[i] += static_cast<double>(count);
    if (i != j) {
      s.degree[j] += static_cast<double>(count);
      ++s.simple_degree[i];
      ++s.simple_degree[j];
      s.edge_count += count;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.degree[i] >= 1.0) ++s.active_count;
    if (s.simple_degree[i] > 0) ++s.degree_freq[s.simple_degree[i]];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Least squares helpers
// ---------------------------------------------------------------------------

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_stderr = 0.0;
  std::size_t n = 0;
};

inline LinearFit ols(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) throw InsufficientDataError("ols: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InsufficientDataError("ols: predictor has no spread");
  LinearFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_stderr = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return f;
}

// Coefficient of x^2 in a quadratic least-squares fit, with its standard error.
struct QuadraticTerm {
  double coefficient = 0.0;
  double stderr_ = 0.0;
};

inline QuadraticTerm quadratic_curvature(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 4) throw InsufficientDataError("quadratic_curvature: need at least four points");
  // Normal equations for (1, x, x^2), solved by Gaussian elimination.
  double m[3][4] = {};
  for (std::size_t i = 0; i < n; ++i) {
    const double row[3] = {1.0, x[i], x[i] * x[i]};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += row[r] * row[c];
      m[r][3] += row[r] * y[i];
    }
  }
  double inv[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  double a[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[r][c] = m[r][c];
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) throw InsufficientDataError("quadratic_curvature: singular design");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = a[col][col];
    for (int c = 0; c < 3; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int c = 0; c < 3; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  double beta[3] = {};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) beta[r] += inv[r][c] * m[c][3];
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - beta[0] - beta[1] * x[i] - beta[2] * x[i] * x[i];
    rss += r * r;
  }
  QuadraticTerm q;
  q.coefficient = beta[2];
  q.stderr_ = n > 3 ? std::sqrt(rss / static_cast<double>(n - 3) * inv[2][2]) : 0.0;
  return q;
}

// ---------------------------------------------------------------------------
// Sparsity scan
// ---------------------------------------------------------------------------

struct SparsityPoint {
  double alpha;
  std::uint64_t seed;
  std::size_t active_nodes;
  std::uint64_t edges;
};

struct SparsityFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% confidence band on the slope
  std::vector<SparsityPoint> points;
};

// Simulates the first timestep for every (alpha, seed) and regresses
// log E on log N over the pooled points.
inline SparsityFit sparsity_scan(const SimConfig& tmpl, std::span<const double> alphas,
                                 std::span<const std::uint64_t> seeds, double epsilon) {
  if (alphas.size() < 4) throw ParameterDomainError("sparsity_scan: alpha grid needs at least 4 points");
  if (seeds.size() < 5) throw ParameterDomainError("sparsity_scan: need at least 5 seeds");
  SparsityFit fit;
  std::vector<double> x, y;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (std::uint64_t seed : seeds) {
      SimConfig cfg = tmpl;
      cfg.hyper.alpha = alphas[a];
      cfg.epsilon = epsilon;
      cfg.T = 1;
      cfg.seed = mix_seed(seed, a);
      const Simulation sim = simulate(cfg);
      const SummaryStats st = summary_stats(sim.graph, 0);
      fit.points.push_back({alphas[a], seed, st.active_count, st.edge_count});
      if (st.active_count > 0 && st.edge_count > 0) {
        x.push_back(std::log(static_cast<double>(st.active_count)));
        y.push_back(std::log(static_cast<double>(st.edge_count)));
      }
    }
  }
  if (x.size() < 3) throw InsufficientDataError("sparsity_scan: too few non-empty graphs");
  const LinearFit lf = ols(x, y);
  fit.slope = lf.slope;
  fit.stderr_ = lf.slope_stderr;
  const boost::math::students_t dist(static_cast<double>(x.size() - 2));
  const double tq = boost::math::quantile(boost::math::complement(dist, 0.025));
  fit.ci_low = lf.slope - tq * lf.slope_stderr;
  fit.ci_high = lf.slope + tq * lf.slope_stderr;
  return fit;
}

// ---------------------------------------------------------------------------
// Degree tail exponent
// ---------------------------------------------------------------------------

struct TailFit {
  double exponent = 0.0;       // least squares on log2-binned frequencies
  double stderr_ = 0.0;
  double mle_exponent = 0.0;   // discrete power-law MLE on the same window
  double mle_stderr = 0.0;
  double curvature = 0.0;      // x^2 coefficient of a quadratic fit in log-log space
  double curvature_stderr = 0.0;
  bool power_law_plausible = true;
  std::size_t window_max_degree = 0;
  std::size_t num_bins = 0;
};

// Curvature beyond this magnitude (and 3 standard errors) marks the
// log-log degree distribution as not a straight line.
inline constexpr double kCurvatureTolerance = 0.1;

// Estimates the exponent g of N_j / N ~ j^(-g).
//
// Frequencies are pooled into bins [2^m, 2^(m+1)) and divided by bin width.
// The fit window is the bins with lower edge <= sqrt(max degree), extended to
// at least three bins; this keeps the fit below the exponential cutoff that
// the tilting parameter puts on the largest degrees.
inline TailFit degree_tail_exponent(const std::map<std::size_t, std::size_t>& degree_freq) {
  if (degree_freq.size() < 10) throw InsufficientDataError("degree_tail_exponent: need at least 10 distinct degrees");
  std::size_t total = 0;
  for (const auto& [j, c] : degree_freq) total += c;
  const std::size_t j_max = degree_freq.rbegin()->first;

  struct Bin {
    std::size_t lo, hi;  // [lo, hi)
    double count;
  };
  std::vector<Bin> bins;
  for (std::size_t lo = 1; lo <= j_max; lo *= 2) {
    Bin b{lo, 2 * lo, 0.0};
    for (auto it = degree_freq.lower_bound(lo); it != degree_freq.end() && it->first < b.hi; ++it)
      b.count += static_cast<double>(it->second);
    if (b.count > 0.0) bins.push_back(b);
  }
  auto bin_x = [](const Bin& b) { return 0.5 * std::log(static_cast<double>(b.lo) * static_cast<double>(b.hi - 1)); };
  auto bin_y = [&](const Bin& b) {
    return std::log(b.count / static_cast<double>(b.hi - b.lo) / static_cast<double>(total));
  };

  const double limit = std::sqrt(static_cast<double>(j_max));
  std::size_t window = 0;
  while (window < bins.size() && static_cast<double>(bins[window].lo) <= limit) ++window;
  window = std::max<std::size_t>(window, std::min<std::size_t>(3, bins.size()));
  if (window < 3) throw InsufficientDataError("degree_tail_exponent: fewer than three populated degree bins");

  std::vector<double> x, y;
  for (std::size_t b = 0; b < window; ++b) {
    x.push_back(bin_x(bins[b]));
    y.push_back(bin_y(bins[b]));
  }
  TailFit fit;
  const LinearFit lf = ols(x, y);
  fit.exponent = -lf.slope;
  fit.stderr_ = lf.slope_stderr;
  fit.num_bins = window;
  fit.window_max_degree = bins[window - 1].hi - 1;

  // Discrete power law truncated to [1, j_hi]: maximize
  //   -g sum log j - n log Z(g),  Z(g) = sum_{j=1}^{j_hi} j^-g.
  {
    const std::size_t j_hi = fit.window_max_degree;
    double n = 0.0, sum_log = 0.0;
    for (auto it = degree_freq.begin(); it != degree_freq.end() && it->first <= j_hi; ++it) {
      n += static_cast<double>(it->second);
      sum_log += static_cast<double>(it->second) * std::log(static_cast<double>(it->first));
    }
    const double mean_log = sum_log / n;
    // E_g[log j] - mean_log is decreasing in g; bisection on its root.
    auto moments = [&](double g, double& mean, double& var) {
      double z = 0.0, m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 1; j <= j_hi; ++j) {
        const double lj = std::log(static_cast<double>(j));
        const double w = std::exp(-g * lj);
        z += w;
        m1 += w * lj;
        m2 += w * lj * lj;
      }
      mean = m1 / z;
      var = m2 / z - mean * mean;
    };
    double lo = -2.0, hi = 6.0, mean = 0.0, var = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      moments(mid, mean, var);
      (mean > mean_log ? lo : hi) = mid;
    }
    fit.mle_exponent = 0.5 * (lo + hi);
    moments(fit.mle_exponent, mean, var);
    fit.mle_stderr = var > 0.0 ? 1.0 / std::sqrt(n * var) : 0.0;
  }

  // Curvature on the fit window, or on all bins when the window is too short.
  std::vector<double> cx = x, cy = y;
  if (cx.size() < 4) {
    cx.clear();
    cy.clear();
    for (const Bin& b : bins) {
      cx.push_back(bin_x(b));
      cy.push_back(bin_y(b));
    }
  }
  if (cx.size() >= 4) {
    const QuadraticTerm q = quadratic_curvature(cx, cy);
    fit.curvature = q.coefficient;
    fit.curvature_stderr = q.stderr_;
    fit.power_law_plausible =
        !(std::abs(q.coefficient) > kCurvatureTolerance && std::abs(q.coefficient) > 3.0 * q.stderr_);
  }
  return fit;
}

inline TailFit degree_tail_exponent(const SummaryStats& stats) { return degree_tail_exponent(stats.degree_freq); }

// ---------------------------------------------------------------------------
// Posterior predictive degree distribution
// ---------------------------------------------------------------------------

struct PpcRow {
  std::size_t t = 0;  // 0-based timestep
  std::size_t degree = 0;
  double lower = 0.0;
  double upper = 0.0;
  double empirical = 0.0;
};

// Draw indices spread evenly across the chain.
inline std::vector<std::size_t> spread_indices(std::size_t chain_size, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < n; ++r) idx[r] = (r * chain_size) / n;
  return idx;
}

// For each replicate: take a posterior draw, simulate every timestep from its
// weights and tabulate N_j. Returns the pointwise [(1-level)/2, (1+level)/2]
// quantiles of N_j per (t, j), with the observed N_j alongside.
inline std::vector<PpcRow> posterior_predictive(const Chain& chain, const DynamicMultigraph& graph, std::size_t n_rep,
                                                std::uint64_t seed, double level = 0.95) {
  if (n_rep < 1) throw ParameterDomainError("posterior_predictive: n_rep must be >= 1");
  if (chain.size() < n_rep) throw InsufficientDataError("posterior_predictive: chain shorter than n_rep");
  const DrawLayout lay = chain.layout();
  if (lay.T != graph.num_timesteps()) throw ShapeError("posterior_predictive: chain and graph T differ");
  const std::size_t T = lay.T;

  // counts[t][j][r]
  std::vector<std::map<std::size_t, std::vector<double>>> counts(T);
  const auto draws = spread_indices(chain.size(), n_rep);
  for (std::size_t r = 0; r < n_rep; ++r) {
    const LatentState s = chain.state(draws[r]);
    for (std::size_t t = 0; t < T; ++t) {
      Rng rng = make_rng(seed, r * T + t);
      const GraphSlice slice = simulate_graph_slice(s, t, rng);
      std::vector<std::size_t> deg(lay.L, 0);
      for (const auto& [pair, n] : slice) {
        if (pair.first == pair.second) continue;
        ++deg[pair.first];
        ++deg[pair.second];
      }
      std::map<std::size_t, std::size_t> freq;
      for (std::size_t d : deg)
        if (d > 0) ++freq[d];
      for (const auto& [j, c] : freq) {
        auto& v = counts[t][j];
        v.resize(n_rep, 0.0);
        v[r] = static_cast<double>(c);
      }
    }
  }

  const double lo_q = 0.5 * (1.0 - level), hi_q = 1.0 - lo_q;
  std::vector<PpcRow> rows;
  for (std::size_t t = 0; t < T; ++t) {
    const SummaryStats obs = summary_stats(graph, t);
    std::set<std::size_t> degrees;
    for (const auto& [j, v] : counts[t]) degrees.insert(j);
    for (const auto& [j, c] : obs.degree_freq) degrees.insert(j);
    for (std::size_t j : degrees) {
      PpcRow row;
      row.t = t;
      row.degree = j;
      auto it = counts[t].find(j);
      if (it != counts[t].end()) {
        std::vector<double> v = it->second;
        v.resize(n_rep, 0.0);
        row.lower = quantile(v, lo_q);
        row.upper = quantile(v, hi_q);
      }
      auto ot = obs.degree_freq.find(j);
      row.empirical = ot == obs.degree_freq.end() ? 0.0 : static_cast<double>(ot->second);
      rows.push_back(row);
    }
  }
  return rows;
}

// Per timestep: fraction of populated degrees (observed N_j > 0) whose
// observed count lies inside the envelope.
inline std::vector<double> ppc_coverage(const std::vector<PpcRow>& rows, std::size_t T) {
  std::vector<double> inside(T, 0.0), populated(T, 0.0);
  for (const PpcRow& r : rows) {
    if (r.empirical <= 0.0) continue;
    populated[r.t] += 1.0;
    if (r.lower <= r.empirical && r.empirical <= r.upper) inside[r.t] += 1.0;
  }
  std::vector<double> out(T, 1.0);
  for (std::size_t t = 0; t < T; ++t)
    if (populated[t] > 0.0) out[t] = inside[t] / populated[t];
  return out;
}

// Summed envelope width over all rows (band area on the degree axis).
inline double ppc_band_area(const std::vector<PpcRow>& rows) {
  double area = 0.0;
  for (const PpcRow& r : rows) area += r.upper - r.lower;
  return area;
}

// ---------------------------------------------------------------------------
// Affiliations and Sankey flows
// ---------------------------------------------------------------------------

struct AffiliationRow {
  std::size_t t = 0;
  std::size_t node = 0;
  std::vector<double> share;  // simplex over communities
  double degree = 0.0;
  std::string label;
};

struct AffiliationTable {
  std::size_t T = 0, p = 0, num_nodes = 0;
  std::vector<AffiliationRow> rows;  // ordered by (t, node)

  const AffiliationRow& at(std::size_t t, std::size_t node) const { return rows.at(t * num_nodes + node); }
};

// Posterior mean of beta^(t)_ki normalized over k, for every (t, node) of the graph.
inline AffiliationTable affiliations(const Chain& aligned, const DynamicMultigraph& graph) {
  if (aligned.empty()) throw InsufficientDataError("affiliations: empty chain");
  const DrawLayout lay = aligned.layout();
  if (lay.T != graph.num_timesteps() || lay.L < graph.num_nodes())
    throw ShapeError("affiliations: chain and graph dimensions differ");
  std::vector<double> mean(lay.beta_size(), 0.0);
  for (std::size_t n = 0; n < aligned.size(); ++n) {
    auto d = aligned.draw(n);
    for (std::size_t c = 0; c < lay.beta_size(); ++c) mean[c] += d[lay.beta_offset() + c];
  }
  AffiliationTable table;
  table.T = lay.T;
  table.p = lay.p;
  table.num_nodes = graph.num_nodes();
  for (std::size_t t = 0; t < lay.T; ++t) {
    const SummaryStats st = summary_stats(graph, t);
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
      AffiliationRow row;
      row.t = t;
      row.node = i;
      row.degree = st.degree[i];
      row.label = graph.label(i);
      row.share.resize(lay.p);
      double total = 0.0;
      for (std::size_t k = 0; k < lay.p; ++k) total += mean[(t * lay.p + k) * lay.L + i];
      for (std::size_t k = 0; k < lay.p; ++k) row.share[k] = mean[(t * lay.p + k) * lay.L + i] / total;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// One Sankey link between timestep t and t + 1 (0-based t). community -1
// marks a node entering (from) or leaving (to) the top-k set.
struct FlowRecord {
  std::size_t t = 0;
  int from = -1;
  int to = -1;
  std::size_t count = 0;
  std::vector<std::string> labels;

  bool operator==(const FlowRecord&) const = default;
};

struct SankeyFlows {
  std::vector<FlowRecord> records;
  std::size_t argmax_ties = 0;  // hard assignments decided by the lower-index tie-break
};

inline SankeyFlows sankey_flows(const AffiliationTable& table, std::size_t top_k) {
  if (top_k < 1) throw ParameterDomainError("sankey_flows: top_k must be >= 1");
  SankeyFlows out;
  auto hard_assign = [&](const AffiliationRow& row) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.share.size(); ++k) {
      if (row.share[k] > row.share[best]) best = k;
    }
    for (std::size_t k = 0; k < row.share.size(); ++k) {
      if (k != best && row.share[k] == row.share[best]) {
        ++out.argmax_ties;
        break;
      }
    }
    return static_cast<int>(best);
  };
  auto top_nodes = [&](std::size_t t) {
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < table.num_nodes; ++i)
      if (table.at(t, i).degree > 0.0) nodes.push_back(i);
    std::stable_sort(nodes.begin(), nodes.end(),
                     [&](std::size_t x, std::size_t y) { return table.at(t, x).degree > table.at(t, y).degree; });
    if (nodes.size() > top_k) nodes.resize(top_k);
    return std::set<std::size_t>(nodes.begin(), nodes.end());
  };

  std::vector<std::set<std::size_t>> top(table.T);
  std::vector<std::map<std::size_t, int>> assignment(table.T);
  for (std::size_t t = 0; t < table.T; ++t) {
    top[t] = top_nodes(t);
    for (std::size_t i : top[t]) assignment[t][i] = hard_assign(table.at(t, i));
  }
  for (std::size_t t = 0; t + 1 < table.T; ++t) {
    std::map<std::pair<int, int>, FlowRecord> links;
    auto add = [&](int from, int to, std::size_t node) {
      FlowRecord& r = links[{from, to}];
      r.t = t;
      r.from = from;
      r.to = to;
      ++r.count;
      r.labels.push_back(table.at(t, node).label);
    };
    for (std::size_t i : top[t]) {
      if (top[t + 1].count(i)) {
        add(assignment[t][i], assignment[t + 1][i], i);
      } else {
        add(assignment[t][i], -1, i);
      }
    }
    for (std::size_t i : top[t + 1])
      if (!top[t].count(i)) add(-1, assignment[t + 1][i], i);
    for (auto& [key, rec] : links) out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace dynsnetoc
