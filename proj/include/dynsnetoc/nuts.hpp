#pragma once

// No-U-Turn sampler with multinomial trajectory sampling, the generalized
// no-U-turn criterion, dual-averaging step-size adaptation and windowed
// diagonal mass-matrix adaptation.
//
// REFERENCE: Hoffman, M.D. and Gelman, A., 2014. The No-U-Turn sampler:
// adaptively setting path lengths in Hamiltonian Monte Carlo. JMLR 15.
// Betancourt, M., 2017. A conceptual introduction to Hamiltonian Monte Carlo.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace dynsnetoc::nuts {

// A differentiable unnormalized log density on R^d.
template <typename M>
concept LogDensityModel = requires(M& m, std::span<const double> q, std::span<double> grad) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.log_density_gradient(q, grad) } -> std::convertible_to<double>;
};

struct Settings {
  std::size_t num_warmup = 1000;
  std::size_t num_samples = 1000;
  std::size_t thin = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double init_step_size = 0.1;
  bool adapt_metric = true;
  std::size_t progress_every = 0;  // stderr progress line every n iterations; 0 = silent
  int chain_id = 0;
};

struct TransitionStats {
  double accept_stat = 0.0;
  int tree_depth = 0;
  std::size_t n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
  double log_density = 0.0;
};

struct RunSummary {
  double step_size = 0.0;
  std::vector<double> inv_metric;
  std::size_t divergences = 0;           // post-warmup
  std::size_t warmup_divergences = 0;
  double mean_accept_stat = 0.0;         // post-warmup
  double mean_tree_depth = 0.0;          // post-warmup
  std::size_t num_draws_kept = 0;
  std::size_t total_leapfrog = 0;
  std::vector<double> warmup_log_density;
};

// Dual averaging of log step size towards a target acceptance statistic.
class DualAveraging {
public:
  explicit DualAveraging(double delta = 0.8, double gamma = 0.05, double kappa = 0.75, double t0 = 10.0)
      : delta_(delta), gamma_(gamma), kappa_(kappa), t0_(t0) {}

  void restart(double step_size) {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
    mu_ = std::log(10.0 * step_size);
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double n = static_cast<double>(counter_);
    const double eta = 1.0 / (n + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(n) / gamma_;
    const double x_eta = std::pow(n, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

private:
  double delta_, gamma_, kappa_, t0_;
  std::size_t counter_ = 0;
  double s_bar_ = 0.0, x_bar_ = 0.0, mu_ = 0.0;
};

// Welford running mean/variance per coordinate.
class WelfordVariance {
public:
  explicit WelfordVariance(std::size_t d) : mean_(d, 0.0), m2_(d, 0.0) {}
  void restart() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }
  void add(std::span<const double> q) {
    ++n_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double delta = q[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (q[i] - mean_[i]);
    }
  }
  std::size_t count() const { return n_; }
  void variance(std::vector<double>& out) const {
    for (std::size_t i = 0; i < m2_.size(); ++i) out[i] = n_ > 1 ? m2_[i] / static_cast<double>(n_ - 1) : 1.0;
  }

private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

// Warmup schedule: initial fast interval, doubling slow windows for the
// metric, terminal fast interval.
class WindowedAdaptation {
public:
  explicit WindowedAdaptation(std::size_t num_warmup) : num_warmup_(num_warmup) {
    if (num_warmup < 20) {
      init_buffer_ = num_warmup;
      term_buffer_ = 0;
      base_window_ = 0;
      enabled_ = false;
    } else if (num_warmup < init_buffer_ + term_buffer_ + base_window_) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(num_warmup));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(num_warmup));
      base_window_ = num_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const {
    return enabled_ && counter_ >= init_buffer_ && counter_ + term_buffer_ < num_warmup_ && counter_ != num_warmup_;
  }
  bool end_of_window() const { return enabled_ && counter_ == next_window_ && counter_ != num_warmup_; }

  // Returns true when a metric update happened at this iteration.
  bool learn(std::span<const double> q, WelfordVariance& est, std::vector<double>& inv_metric) {
    if (in_window()) est.add(q);
    if (end_of_window()) {
      compute_next_window();
      est.variance(inv_metric);
      const double n = static_cast<double>(est.count());
      for (double& v : inv_metric) v = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
      est.restart();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

private:
  void compute_next_window() {
    if (next_window_ + term_buffer_ + 1 == num_warmup_) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ + term_buffer_ + 1 != num_warmup_) {
      const std::size_t boundary = next_window_ + 2 * window_size_;
      if (boundary + term_buffer_ >= num_warmup_) next_window_ = num_warmup_ - term_buffer_ - 1;
    }
  }

  std::size_t num_warmup_;
  std::size_t init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  std::size_t window_size_ = 25, next_window_ = 0, counter_ = 0;
  bool enabled_ = true;
};

template <LogDensityModel Model>
class Sampler {
public:
  Sampler(Model& model, std::vector<double> q0, const Settings& settings)
      : model_(model), settings_(settings), rng_(make_rng(settings.seed, 0x6e757473)), dim_(model.dimension()),
        inv_metric_(dim_, 1.0), step_size_(settings.init_step_size), max_delta_h_(1000.0) {
    if (q0.size() != dim_) throw ShapeError("nuts: initial point has wrong dimension");
    z_.q = std::move(q0);
    z_.p.assign(dim_, 0.0);
    z_.grad.assign(dim_, 0.0);
    update_gradient(z_);
    if (!std::isfinite(z_.lp)) throw NumericError("nuts: initial point has non-finite log density");
  }

  double step_size() const noexcept { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  const std::vector<double>& inv_metric() const noexcept { return inv_metric_; }
  void set_inv_metric(std::vector<double> m) { inv_metric_ = std::move(m); }
  std::span<const double> position() const noexcept { return z_.q; }
  double log_density() const noexcept { return z_.lp; }

  // Doubles or halves the step size until a single leapfrog step crosses an
  // acceptance probability of 0.8.
  void init_step_size() {
    PhasePoint z = z_;
    sample_momentum(z);
    double h0 = hamiltonian(z);
    leapfrog(z, step_size_);
    double delta_h = h0 - hamiltonian(z);
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int iter = 0; iter < 100; ++iter) {
      z = z_;
      sample_momentum(z);
      h0 = hamiltonian(z);
      leapfrog(z, step_size_);
      double h = hamiltonian(z);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
      if (step_size_ > 1e7) throw NumericError("nuts: step size diverged during initialization (improper target?)");
      if (step_size_ == 0.0) throw NumericError("nuts: step size collapsed to zero during initialization");
    }
  }

  TransitionStats transition() {
    sample_momentum(z_);
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    std::vector<double> p_fwd_fwd = z_.p, p_sharp_fwd_fwd = sharp(z_.p);
    std::vector<double> p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    std::vector<double> p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    std::vector<double> p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp_fwd_fwd;
    std::vector<double> rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    std::size_t n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;
    divergent_ = false;

    std::vector<double> rho_fwd(dim_), rho_bck(dim_);
    while (depth < settings_.max_tree_depth) {
      std::fill(rho_fwd.begin(), rho_fwd.end(), 0.0);
      std::fill(rho_bck.begin(), rho_bck.end(), 0.0);
      bool valid_subtree = false;
      double log_sum_weight_subtree = kNegInfinity;

      if (uniform_open(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                                   h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                                   h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform_open(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      for (std::size_t i = 0; i < dim_; ++i) rho[i] = rho_bck[i] + rho_fwd[i];
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      std::vector<double> rho_ext(dim_);
      for (std::size_t i = 0; i < dim_; ++i) rho_ext[i] = rho_bck[i] + p_fwd_bck[i];
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
      for (std::size_t i = 0; i < dim_; ++i) rho_ext[i] = rho_fwd[i] + p_bck_fwd[i];
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    z_ = std::move(z_sample);
    TransitionStats st;
    st.accept_stat = n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(n_leapfrog) : 0.0;
    st.tree_depth = depth;
    st.n_leapfrog = n_leapfrog;
    st.divergent = divergent_;
    st.log_density = z_.lp;
    st.energy = hamiltonian(z_);
    return st;
  }

private:
  static constexpr double kNegInfinity = -std::numeric_limits<double>::infinity();

  struct PhasePoint {
    std::vector<double> q, p, grad;
    double lp = 0.0;
  };

  static double log_sum_exp(double a, double b) {
    if (a == kNegInfinity) return b;
    if (b == kNegInfinity) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  void update_gradient(PhasePoint& z) {
    z.lp = model_.log_density_gradient(z.q, z.grad);
    if (std::isnan(z.lp)) z.lp = kNegInfinity;
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] = standard_normal(rng_) / std::sqrt(inv_metric_[i]);
  }

  std::vector<double> sharp(const std::vector<double>& p) const {
    std::vector<double> out(dim_);
    sharp_into(p, out);
    return out;
  }

  void sharp_into(const std::vector<double>& p, std::vector<double>& out) const {
    out.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = inv_metric_[i] * p[i];
  }

  double hamiltonian(const PhasePoint& z) const {
    double kinetic = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) kinetic += inv_metric_[i] * z.p[i] * z.p[i];
    return -z.lp + 0.5 * kinetic;
  }

  void leapfrog(PhasePoint& z, double eps) {
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < dim_; ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    update_gradient(z);
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }

  static bool criterion(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
                        const std::vector<double>& rho) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      a += p_sharp_plus[i] * rho[i];
      b += p_sharp_minus[i] * rho[i];
    }
    return a > 0.0 && b > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, std::vector<double>& p_sharp_beg, std::vector<double>& p_sharp_end,
                  std::vector<double>& rho, std::vector<double>& p_beg, std::vector<double>& p_end, double h0,
                  double sign, std::size_t& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, sign * step_size_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > max_delta_h_) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      sharp_into(z_.p, p_sharp_beg);
      p_sharp_end = p_sharp_beg;
      for (std::size_t i = 0; i < dim_; ++i) rho[i] += z_.p[i];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    // Initial subtree.
    double log_sum_weight_init = kNegInfinity;
    std::vector<double> p_init_end(dim_), p_sharp_init_end(dim_), rho_init(dim_, 0.0);
    const bool valid_init = build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                                       p_init_end, h0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob);
    if (!valid_init) return false;

    // Final subtree.
    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = kNegInfinity;
    std::vector<double> p_final_beg(dim_), p_sharp_final_beg(dim_), rho_final(dim_, 0.0);
    const bool valid_final = build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                                        p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob);
    if (!valid_final) return false;

    // Multinomial sample between the two subtrees.
    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (uniform_open(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    std::vector<double> rho_subtree(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      rho_subtree[i] = rho_init[i] + rho_final[i];
      rho[i] += rho_subtree[i];
    }
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    std::vector<double> rho_ext(dim_);
    for (std::size_t i = 0; i < dim_; ++i) rho_ext[i] = rho_init[i] + p_final_beg[i];
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    for (std::size_t i = 0; i < dim_; ++i) rho_ext[i] = rho_final[i] + p_init_end[i];
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

  Model& model_;
  Settings settings_;
  Rng rng_;
  std::size_t dim_;
  std::vector<double> inv_metric_;
  double step_size_;
  double max_delta_h_;
  bool divergent_ = false;
  PhasePoint z_;
};

// Runs warmup (with adaptation) then sampling. `on_draw(q, stats)` is called
// for every kept post-warmup draw (every `thin`-th iteration).
template <LogDensityModel Model, typename OnDraw>
RunSummary run(Model& model, std::vector<double> q0, const Settings& settings, OnDraw&& on_draw) {
  if (settings.thin < 1) throw ParameterDomainError("nuts: thin must be >= 1");
  if (!(settings.target_accept > 0.0 && settings.target_accept < 1.0))
    throw ParameterDomainError("nuts: target_accept must lie in (0, 1)");
  if (settings.max_tree_depth < 1) throw ParameterDomainError("nuts: max_tree_depth must be >= 1");

  Sampler<Model> sampler(model, std::move(q0), settings);
  const std::size_t dim = model.dimension();
  RunSummary summary;

  sampler.init_step_size();
  DualAveraging dual(settings.target_accept);
  dual.restart(sampler.step_size());
  WindowedAdaptation windows(settings.num_warmup);
  WelfordVariance estimator(dim);
  std::vector<double> inv_metric(dim, 1.0);

  auto progress = [&](std::size_t iter, const TransitionStats& st, bool warmup) {
    if (settings.progress_every == 0 || (iter + 1) % settings.progress_every != 0) return;
    std::fprintf(stderr, "chain %d %s iter %zu lp %.6g step %.4g divergent %d\n", settings.chain_id,
                 warmup ? "warmup" : "sample", iter + 1, st.log_density, sampler.step_size(), st.divergent ? 1 : 0);
  };

  for (std::size_t iter = 0; iter < settings.num_warmup; ++iter) {
    const TransitionStats st = sampler.transition();
    summary.total_leapfrog += st.n_leapfrog;
    if (st.divergent) ++summary.warmup_divergences;
    summary.warmup_log_density.push_back(st.log_density);
    sampler.set_step_size(dual.learn(st.accept_stat));
    if (settings.adapt_metric && windows.learn(sampler.position(), estimator, inv_metric)) {
      sampler.set_inv_metric(inv_metric);
      sampler.init_step_size();
      dual.restart(sampler.step_size());
    }
    progress(iter, st, true);
  }
  if (settings.num_warmup > 0) sampler.set_step_size(dual.final_step_size());

  double accept_sum = 0.0, depth_sum = 0.0;
  for (std::size_t iter = 0; iter < settings.num_samples; ++iter) {
    const TransitionStats st = sampler.transition();
    summary.total_leapfrog += st.n_leapfrog;
    if (st.divergent) ++summary.divergences;
    accept_sum += st.accept_stat;
    depth_sum += st.tree_depth;
    if (iter % settings.thin == 0) {
      on_draw(sampler.position(), st);
      ++summary.num_draws_kept;
    }
    progress(iter, st, false);
  }
  if (settings.num_samples > 0) {
    summary.mean_accept_stat = accept_sum / static_cast<double>(settings.num_samples);
    summary.mean_tree_depth = depth_sum / static_cast<double>(settings.num_samples);
  }
  summary.step_size = sampler.step_size();
  summary.inv_metric = sampler.inv_metric();
  return summary;
}

}  // namespace dynsnetoc::nuts
