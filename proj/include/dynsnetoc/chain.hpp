#pragma once

// Posterior draws of (Hyperparams, LatentState without theta) and
// community-label alignment across draws.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "model.hpp"

namespace dynsnetoc {

// Dimensions of one draw. Column order of a draw:
//   alpha, sigma, tau, psi, a[p], b[p], w0[L], beta[T][p][L], gamma[T-1][p][L]
struct DrawLayout {
  std::size_t T = 1, p = 1, L = 0;

  std::size_t num_hyper() const noexcept { return 4 + 2 * p; }
  std::size_t beta_size() const noexcept { return T * p * L; }
  std::size_t gamma_size() const noexcept { return T > 0 ? (T - 1) * p * L : 0; }
  std::size_t num_columns() const noexcept { return num_hyper() + L + beta_size() + gamma_size(); }

  std::size_t a_offset() const noexcept { return 4; }
  std::size_t b_offset() const noexcept { return 4 + p; }
  std::size_t w0_offset() const noexcept { return num_hyper(); }
  std::size_t beta_offset() const noexcept { return num_hyper() + L; }
  std::size_t gamma_offset() const noexcept { return beta_offset() + beta_size(); }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names = {"alpha", "sigma", "tau", "psi"};
    for (std::size_t k = 0; k < p; ++k) names.push_back("a." + std::to_string(k + 1));
    for (std::size_t k = 0; k < p; ++k) names.push_back("b." + std::to_string(k + 1));
    for (std::size_t i = 0; i < L; ++i) names.push_back("w0." + std::to_string(i));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i = 0; i < L; ++i)
          names.push_back("beta." + std::to_string(t + 1) + "." + std::to_string(k + 1) + "." + std::to_string(i));
    for (std::size_t t = 0; t + 1 < T; ++t)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i = 0; i < L; ++i)
          names.push_back("gamma." + std::to_string(t + 1) + "." + std::to_string(k + 1) + "." + std::to_string(i));
    return names;
  }

  bool operator==(const DrawLayout&) const = default;
};

inline std::vector<double> pack_draw(const LatentState& s, const Hyperparams& h) {
  DrawLayout lay{s.T, s.p, s.L};
  std::vector<double> v;
  v.reserve(lay.num_columns());
  v.insert(v.end(), {h.alpha, h.sigma, h.tau, h.psi});
  v.insert(v.end(), h.a.begin(), h.a.end());
  v.insert(v.end(), h.b.begin(), h.b.end());
  v.insert(v.end(), s.w0.begin(), s.w0.end());
  v.insert(v.end(), s.beta.begin(), s.beta.end());
  v.insert(v.end(), s.gamma.begin(), s.gamma.end());
  return v;
}

struct ChainStats {
  double step_size = 0.0;
  std::vector<double> inv_metric;
  std::size_t divergences = 0;
  std::size_t warmup_divergences = 0;
  double mean_accept_stat = 0.0;
  double mean_tree_depth = 0.0;
  std::size_t num_iterations = 0;  // post-warmup iterations run (before thinning)
  std::size_t total_leapfrog = 0;
  std::vector<double> warmup_log_posterior;
};

class Chain {
public:
  Chain() = default;
  explicit Chain(DrawLayout layout) : layout_(layout) {}

  const DrawLayout& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return log_posterior_.size(); }
  bool empty() const noexcept { return log_posterior_.empty(); }

  void push_back(std::span<const double> draw, double log_posterior) {
    if (draw.size() != layout_.num_columns()) throw ShapeError("chain: draw has wrong number of columns");
    values_.insert(values_.end(), draw.begin(), draw.end());
    log_posterior_.push_back(log_posterior);
  }

  std::span<const double> draw(std::size_t n) const {
    return {values_.data() + n * layout_.num_columns(), layout_.num_columns()};
  }
  std::span<double> draw(std::size_t n) { return {values_.data() + n * layout_.num_columns(), layout_.num_columns()}; }

  const std::vector<double>& log_posterior_trace() const noexcept { return log_posterior_; }

  Hyperparams hyper(std::size_t n, bool tau_fixed = true) const {
    auto d = draw(n);
    Hyperparams h;
    h.alpha = d[0];
    h.sigma = d[1];
    h.tau = d[2];
    h.psi = d[3];
    h.a.assign(d.begin() + layout_.a_offset(), d.begin() + layout_.a_offset() + layout_.p);
    h.b.assign(d.begin() + layout_.b_offset(), d.begin() + layout_.b_offset() + layout_.p);
    h.tau_fixed = tau_fixed;
    return h;
  }

  LatentState state(std::size_t n) const {
    auto d = draw(n);
    LatentState s(layout_.T, layout_.p, layout_.L);
    s.theta.clear();
    std::copy_n(d.begin() + layout_.w0_offset(), layout_.L, s.w0.begin());
    std::copy_n(d.begin() + layout_.beta_offset(), layout_.beta_size(), s.beta.begin());
    std::copy_n(d.begin() + layout_.gamma_offset(), layout_.gamma_size(), s.gamma.begin());
    return s;
  }

  // Values of one column across draws.
  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(size());
    for (std::size_t n = 0; n < size(); ++n) out[n] = values_[n * layout_.num_columns() + c];
    return out;
  }

  std::size_t argmax_log_posterior() const {
    if (empty()) throw InsufficientDataError("chain: no draws");
    return static_cast<std::size_t>(std::max_element(log_posterior_.begin(), log_posterior_.end()) -
                                    log_posterior_.begin());
  }

  // Relabels communities of draw n: new community k takes old community perm[k].
  void permute_communities(std::size_t n, std::span<const std::size_t> perm) {
    auto d = draw(n);
    const std::size_t p = layout_.p, L = layout_.L;
    std::vector<double> old(d.begin(), d.end());
    for (std::size_t k = 0; k < p; ++k) {
      d[layout_.a_offset() + k] = old[layout_.a_offset() + perm[k]];
      d[layout_.b_offset() + k] = old[layout_.b_offset() + perm[k]];
    }
    for (std::size_t t = 0; t < layout_.T; ++t)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i = 0; i < L; ++i)
          d[layout_.beta_offset() + (t * p + k) * L + i] = old[layout_.beta_offset() + (t * p + perm[k]) * L + i];
    for (std::size_t t = 0; t + 1 < layout_.T; ++t)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i = 0; i < L; ++i)
          d[layout_.gamma_offset() + (t * p + k) * L + i] = old[layout_.gamma_offset() + (t * p + perm[k]) * L + i];
  }

  ChainStats stats;
  std::uint64_t seed = 0;

private:
  DrawLayout layout_;
  std::vector<double> values_;
  std::vector<double> log_posterior_;
};

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------

// Pearson correlation of two equal-length vectors; 0 when either is constant.
inline double correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// score[k][m]: similarity of candidate community m to reference community k.
using ScoreMatrix = std::vector<std::vector<double>>;

// Greedy assignment: repeatedly takes the best remaining (reference, candidate) pair.
inline std::vector<std::size_t> greedy_assignment(const ScoreMatrix& score) {
  const std::size_t p = score.size();
  std::vector<std::size_t> perm(p, 0);
  std::vector<bool> ref_used(p, false), cand_used(p, false);
  for (std::size_t step = 0; step < p; ++step) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bk = 0, bm = 0;
    for (std::size_t k = 0; k < p; ++k) {
      if (ref_used[k]) continue;
      for (std::size_t m = 0; m < p; ++m) {
        if (cand_used[m]) continue;
        if (score[k][m] > best) {
          best = score[k][m];
          bk = k;
          bm = m;
        }
      }
    }
    perm[bk] = bm;
    ref_used[bk] = true;
    cand_used[bm] = true;
  }
  return perm;
}

// Exhaustive search over all p! permutations (maximizes the summed score).
inline std::vector<std::size_t> exhaustive_assignment(const ScoreMatrix& score) {
  const std::size_t p = score.size();
  std::vector<std::size_t> perm(p), best_perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t k = 0; k < p; ++k) total += score[k][perm[k]];
    if (total > best) {
      best = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_perm;
}

// Largest p for which alignment searches all permutations.
inline constexpr std::size_t kExhaustiveAlignmentMaxP = 7;

inline std::vector<std::size_t> best_assignment(const ScoreMatrix& score) {
  return score.size() <= kExhaustiveAlignmentMaxP ? exhaustive_assignment(score) : greedy_assignment(score);
}

// Correlation of each candidate community's scores (all t, i) with each reference community's.
inline ScoreMatrix community_correlations(std::span<const double> ref_beta, std::span<const double> cand_beta,
                                          const DrawLayout& lay) {
  const std::size_t p = lay.p, L = lay.L;
  auto gather = [&](std::span<const double> beta, std::size_t k) {
    std::vector<double> v;
    v.reserve(lay.T * L);
    for (std::size_t t = 0; t < lay.T; ++t)
      for (std::size_t i = 0; i < L; ++i) v.push_back(std::log(beta[(t * p + k) * L + i]));
    return v;
  };
  std::vector<std::vector<double>> ref(p), cand(p);
  for (std::size_t k = 0; k < p; ++k) {
    ref[k] = gather(ref_beta, k);
    cand[k] = gather(cand_beta, k);
  }
  ScoreMatrix score(p, std::vector<double>(p));
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t m = 0; m < p; ++m) score[k][m] = correlation(ref[k], cand[m]);
  return score;
}

// Permutes each draw's communities to best match the highest-log-posterior
// draw (correlation of log-scores). p = 1 is a no-op.
inline Chain align_labels(Chain chain) {
  const DrawLayout lay = chain.layout();
  if (lay.p < 2 || chain.empty()) return chain;
  const std::size_t ref_index = chain.argmax_log_posterior();
  const auto ref_draw = chain.draw(ref_index);
  const std::vector<double> ref_beta(ref_draw.begin() + lay.beta_offset(),
                                     ref_draw.begin() + lay.beta_offset() + lay.beta_size());
  for (std::size_t n = 0; n < chain.size(); ++n) {
    auto d = chain.draw(n);
    const ScoreMatrix score =
        community_correlations(ref_beta, d.subspan(lay.beta_offset(), lay.beta_size()), lay);
    const auto perm = best_assignment(score);
    bool identity = true;
    for (std::size_t k = 0; k < lay.p; ++k) identity = identity && perm[k] == k;
    if (!identity) chain.permute_communities(n, perm);
  }
  return chain;
}

}  // namespace dynsnetoc
