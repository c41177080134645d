#pragma once

// Adaptive random-walk Metropolis-within-Gibbs sampler for the joint
// posterior, plus convergence diagnostics (Gelman-Rubin R-hat) and
// posterior summaries (EAP means, type-7 quantiles).
//
// Update blocks: per-individual (alpha, beta) pairs, per-pair gamma
// pairs, per-item step vectors, hyperparameters on transformed scales
// (log for SDs, atanh for correlations, with Jacobian corrections),
// cluster intercepts, mean-structure coefficients and distal
// coefficients. Proposal scales adapt toward a 0.25-0.45 acceptance
// window during burn-in only and are frozen afterwards.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "dirt/core.hpp"
#include "dirt/csv.hpp"
#include "dirt/density.hpp"
#include "dirt/rng.hpp"

namespace dirt {

struct McmcConfig {
  int chains = 4;
  int iterations = 2000;
  int burn_in = 1000;
  int thinning = 1;
  std::uint64_t seed = 0;
  double target_accept_low = 0.25;
  double target_accept_high = 0.45;
  int adapt_window = 50;
  double rhat_threshold = 1.05;
  bool force_unidentified = false;
  int threads = 1;

  void validate() const {
    require(chains >= 1, "need at least 1 chain");
    require(iterations >= 1, "need at least 1 iteration");
    require(burn_in >= 0 && burn_in < iterations,
            "burn_in must be < iterations");
    require(thinning >= 1, "thinning must be >= 1");
    require(adapt_window >= 1, "adapt_window must be >= 1");
  }

  int retained_per_chain() const { return (iterations - burn_in) / thinning; }
};

/// Welford running moments for one scalar.
struct RunningMoments {
  long long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  void merge(const RunningMoments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    double d = o.mean - mean;
    long long nt = n + o.n;
    m2 += o.m2 + d * d * (static_cast<double>(n) * o.n / nt);
    mean += d * o.n / nt;
    n = nt;
  }
  double sd() const { return n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0; }
};

/// Running EAP moments of the effective latent traits.
struct LatentMoments {
  std::vector<RunningMoments> alpha, beta, gamma, u;
  bool empty() const { return alpha.empty(); }
};

/// One retained latent draw (effective traits), for multiple imputation.
struct LatentDraw {
  std::vector<double> alpha, beta, gamma;
};

struct PosteriorDraws {
  std::vector<std::string> names;  // reported parameters
  // draws[chain][iter][param], post burn-in, thinned
  std::vector<std::vector<std::vector<double>>> draws;
  std::vector<double> rhat;  // per reported parameter; NaN = indeterminate
  std::map<std::string, double> acceptance;  // mean rate per block family
  LatentMoments latent_moments;
  std::vector<LatentDraw> latent_draws;  // optional full retention

  int n_chains() const { return static_cast<int>(draws.size()); }
  int n_retained() const {
    return draws.empty() ? 0 : static_cast<int>(draws[0].size());
  }

  std::vector<double> pooled(int param) const {
    std::vector<double> v;
    for (const auto& ch : draws)
      for (const auto& it : ch) v.push_back(it[param]);
    return v;
  }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

// ---------------------------------------------------------------------------
// Diagnostics and summaries

/// Gelman-Rubin potential scale reduction factor over the retained draws
/// of one parameter. Returns NaN when the within-chain variance is zero
/// (indeterminate).
inline double rhat(const PosteriorDraws& d, int param, bool split = false) {
  require(d.n_chains() >= 2, "R-hat needs at least 2 chains");
  require(d.n_retained() >= 2, "R-hat needs at least 2 retained iterations");
  std::vector<std::vector<double>> chains;
  for (const auto& ch : d.draws) {
    std::vector<double> v;
    for (const auto& it : ch) v.push_back(it[param]);
    if (split) {
      std::size_t h = v.size() / 2;
      chains.emplace_back(v.begin(), v.begin() + h);
      chains.emplace_back(v.begin() + h, v.end());
    } else {
      chains.push_back(std::move(v));
    }
  }
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mu = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / n;
    double s2 = 0.0;
    for (double x : chains[c]) s2 += (x - mu) * (x - mu);
    means[c] = mu;
    vars[c] = s2 / (n - 1);
  }
  double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / (m - 1);
  if (w <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), "quantile of empty sample");
  const double h = (sorted.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
}

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double q2_5 = 0.0;
  double q97_5 = 0.0;
  double rhat = 0.0;
};

struct PosteriorSummary {
  std::vector<SummaryRow> rows;

  const SummaryRow& operator[](const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw std::invalid_argument("no such parameter: " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return true;
    return false;
  }
};

/// EAP means and 2.5/97.5% type-7 quantiles per reported parameter.
/// Pooled draws are sorted first, so the result is invariant to chain
/// order.
inline PosteriorSummary summarize(const PosteriorDraws& d) {
  require(!d.draws.empty() && d.n_retained() > 0, "no retained draws");
  PosteriorSummary s;
  for (std::size_t p = 0; p < d.names.size(); ++p) {
    auto v = d.pooled(static_cast<int>(p));
    std::sort(v.begin(), v.end());
    SummaryRow row;
    row.name = d.names[p];
    row.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    row.q2_5 = quantile_sorted(v, 0.025);
    row.q97_5 = quantile_sorted(v, 0.975);
    row.rhat = p < d.rhat.size() ? d.rhat[p] : 0.0;
    s.rows.push_back(row);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sampler internals

namespace detail {

/// Solves A x = rhs for symmetric positive-definite A, leaving the lower
/// Cholesky factor in `a`. Returns false if A is not PD.
inline bool chol_factor_solve(std::vector<std::vector<double>>& a,
                              std::vector<double>& rhs) {
  const std::size_t n = a.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (d <= 0.0 || !std::isfinite(d)) return false;
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i][k] * rhs[k];
    rhs[i] = s / a[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k][i] * rhs[k];
    rhs[i] = s / a[i][i];
  }
  return true;
}

/// Per-block adaptive proposal scale; frozen after burn-in.
struct AdaptiveScale {
  double scale = 0.3;
  double max_scale = 8.0;
  int proposed = 0;
  int accepted = 0;
  long long total_proposed = 0;
  long long total_accepted = 0;

  void record(bool accept, bool adapting, double lo, double hi, int window) {
    ++proposed;
    ++total_proposed;
    if (accept) {
      ++accepted;
      ++total_accepted;
    }
    if (adapting && proposed >= window) {
      double rate = static_cast<double>(accepted) / proposed;
      if (rate < lo)
        scale *= 0.7;
      else if (rate > hi)
        scale = std::min(scale * 1.4, max_scale);
      proposed = accepted = 0;
    }
  }
  double rate() const {
    return total_proposed ? static_cast<double>(total_accepted) / total_proposed
                          : 0.0;
  }
};

class ChainRunner {
 public:
  ChainRunner(const Dataset& ds, const ModelSpec& spec, const McmcConfig& cfg,
              int chain_id)
      : ds_(ds),
        spec_(spec),
        cfg_(cfg),
        rng_(cfg.seed, static_cast<std::uint64_t>(chain_id) + 1),
        st_(init_state(ds, spec)) {
    build_indexes();
    jitter_start();
    refresh_all();
  }

  void run(std::vector<std::vector<double>>& out_draws, LatentMoments& moments,
           std::vector<LatentDraw>& latent_draws,
           std::map<std::string, AdaptiveScale*>& families) {
    init_moments(moments);
    for (int iter = 0; iter < cfg_.iterations; ++iter) {
      adapting_ = iter < cfg_.burn_in;
      update_individuals();
      update_pairs();
      update_items();
      update_translations();
      if (spec_.cluster_intercept) {
        update_clusters();
        update_scalar_transformed(st_.sigma_u, sc_sigma_u_, Transform::log_sd,
                                  [&] { return u_prior(); });
      }
      // The hyperparameter conditionals cost only the latent prior, so a
      // few extra scans per sweep are nearly free and shorten their
      // autocorrelation times.
      for (int r = 0; r < 3; ++r) update_hyperparameters();
      update_scale_moves();
      if (spec_.gender_mean && !spec_.fix_mu_male) update_mean_scalar(st_.hyper.mu_male, sc_mu_);
      if (spec_.use_covariates) update_covariate_coefficients();
      if (spec_.distal == DistalMode::joint) {
        update_distal_coefficients();
        if (iter == cfg_.burn_in / 2 || iter == (3 * cfg_.burn_in) / 4 ||
            iter == cfg_.burn_in - 1)
          recenter_distal();
      }

      if (iter >= cfg_.burn_in &&
          (iter - cfg_.burn_in) % cfg_.thinning == 0) {
        record_draw(out_draws);
        record_latents(moments, latent_draws,
                       (iter - cfg_.burn_in) / cfg_.thinning);
      }
    }
    families["individual"] = &sc_ind_family_;
    families["pair"] = &sc_pair_family_;
    families["item"] = &sc_item_family_;
    families["hyper"] = &sc_hyper_family_;
    families["distal"] = &sc_b_family_;
    families["shift_alpha"] = &sc_shift_alpha_;
    families["shift_beta"] = &sc_shift_beta_;
    families["shift_gender"] = &sc_shift_mu_;
    families["scale_alpha"] = &sc_scale_[0];
    families["scale_beta"] = &sc_scale_[1];
    families["scale_gamma"] = &sc_scale_[2];
  }

  const ModelState& state() const { return st_; }

 private:
  enum class Transform { none, log_sd, atanh_rho };

  void build_indexes() {
    const int ni = ds_.design.n_individuals();
    resp_of_ind_.assign(ni, {});
    distal_of_ind_.assign(ni, {});
    resp_of_dyad_.assign(ds_.design.n_directed(), {});
    resp_of_item_.assign(ds_.items.size(), {});
    distal_of_dyad_.assign(ds_.design.n_directed(), {});
    for (std::size_t r = 0; r < ds_.responses.size(); ++r) {
      const auto& rec = ds_.responses[r];
      const auto& dd = ds_.design.dyad(rec.dyad);
      resp_of_ind_[dd.actor].push_back(static_cast<int>(r));
      resp_of_ind_[dd.partner].push_back(static_cast<int>(r));
      resp_of_dyad_[rec.dyad].push_back(static_cast<int>(r));
      resp_of_item_[rec.item].push_back(static_cast<int>(r));
    }
    for (std::size_t k = 0; k < ds_.distal.size(); ++k) {
      const auto& rec = ds_.distal[k];
      const auto& dd = ds_.design.dyad(rec.dyad);
      distal_of_ind_[dd.actor].push_back(static_cast<int>(k));
      distal_of_ind_[dd.partner].push_back(static_cast<int>(k));
      distal_of_dyad_[rec.dyad].push_back(static_cast<int>(k));
    }
    // undirected pair -> directed dyads
    pair_dyads_.assign(ds_.design.n_undirected(), {});
    for (int d = 0; d < ds_.design.n_directed(); ++d)
      pair_dyads_[ds_.design.dyad(d).undirected].push_back(d);
    if (spec_.cluster_intercept) {
      resp_of_cluster_.assign(ds_.design.n_clusters(), {});
      for (std::size_t r = 0; r < ds_.responses.size(); ++r) {
        int cl = ds_.design
                     .individual(ds_.design.dyad(ds_.responses[r].dyad).actor)
                     .cluster;
        if (cl >= 0) resp_of_cluster_[cl].push_back(static_cast<int>(r));
      }
    }
    sc_ind_.resize(ni);
    sc_pair_.resize(ds_.design.n_undirected());
    sc_item_.resize(ds_.items.size());
    sc_b_.resize(10);
    // With diffuse priors the distal-coefficient direction flattens far
    // from the mode (each outcome's gamma pair can sign-align); a tight
    // proposal cap keeps chains in the data-supported region instead of
    // random-walking down that ridge.
    for (auto& sc : sc_b_) {
      sc.scale = 0.12;
      sc.max_scale = 0.2;
    }
    sc_bprec_.scale = 0.8;     // whitened units; ~2.38/sqrt(dim)
    sc_bprec_.max_scale = 1.5;
    sc_shift_alpha_.scale = sc_shift_beta_.scale = 0.1;
    sc_shift_alpha_.max_scale = sc_shift_beta_.max_scale = 0.6;
    sc_shift_mu_.scale = 0.15;
    sc_shift_mu_.max_scale = 1.0;
    for (auto& sc : sc_scale_) {
      sc.scale = 0.05;
      sc.max_scale = 0.3;
    }
    sc_c_.resize(st_.c_alpha.size() + st_.c_beta.size() + st_.c_gamma.size());
    sc_u_.resize(spec_.cluster_intercept ? ds_.design.n_clusters() : 0);
  }

  void jitter_start() {
    // Overdispersed starts: multiplicative noise on SDs, additive on the
    // rest. Fixed parameters are left untouched and consume no draws.
    if (!spec_.fix_sigma_alpha)
      st_.hyper.sigma_alpha = std::exp(rng_.normal(0.0, 0.4));
    if (!spec_.fix_sigma_beta)
      st_.hyper.sigma_beta = std::exp(rng_.normal(0.0, 0.4));
    if (!spec_.fix_sigma_gamma)
      st_.hyper.sigma_gamma = std::exp(rng_.normal(0.0, 0.4));
    if (!spec_.fix_rho_alpha_beta)
      st_.hyper.rho_alpha_beta = std::tanh(rng_.normal(0.0, 0.3));
    if (!spec_.fix_rho_gamma)
      st_.hyper.rho_gamma = std::tanh(rng_.normal(0.0, 0.3));
    if (spec_.gender_mean && !spec_.fix_mu_male)
      st_.hyper.mu_male = rng_.normal(0.0, 0.3);
    if (spec_.cluster_intercept) st_.sigma_u = std::exp(rng_.normal(0.0, 0.4));
    for (auto& item : st_.delta)
      for (auto& dv : item) dv = rng_.normal(0.0, 0.5);
    if (spec_.distal != DistalMode::none) {
      int nb = spec_.n_distal_coefficients();
      for (int i = 0; i < nb; ++i) st_.distal.b[i] = rng_.normal(0.0, 0.3);
      st_.distal.enforce_constraints();
    }
    if (!alpha_pinned())
      for (auto& a : st_.lat.alpha) a = rng_.normal(0.0, 0.3);
    if (!beta_pinned())
      for (auto& v : st_.lat.beta) v = rng_.normal(0.0, 0.3);
    if (!gamma_pinned())
      for (auto& v : st_.lat.gamma) v = rng_.normal(0.0, 0.3);
    for (auto& v : st_.lat.u) v = rng_.normal(0.0, 0.3);
  }

  bool alpha_pinned() const {
    return spec_.fix_sigma_alpha && *spec_.fix_sigma_alpha == 0.0;
  }
  bool beta_pinned() const {
    return spec_.fix_sigma_beta && *spec_.fix_sigma_beta == 0.0;
  }
  bool gamma_pinned() const {
    return spec_.fix_sigma_gamma && *spec_.fix_sigma_gamma == 0.0;
  }

  // Rebuilds effective latents, thetas and all cached log-likelihoods.
  void refresh_all() {
    const int ni = ds_.design.n_individuals();
    eff_alpha_.resize(ni);
    eff_beta_.resize(ni);
    eff_gamma_.resize(ds_.design.n_directed());
    for (int i = 0; i < ni; ++i) {
      eff_alpha_[i] = effective_alpha(st_, ds_, spec_, i);
      eff_beta_[i] = effective_beta(st_, ds_, spec_, i);
    }
    for (int d = 0; d < ds_.design.n_directed(); ++d)
      eff_gamma_[d] = effective_gamma(st_, ds_, spec_, d);
    theta_.resize(ds_.design.n_directed());
    for (int d = 0; d < ds_.design.n_directed(); ++d) theta_[d] = theta(d);
    resp_ll_.resize(ds_.responses.size());
    for (std::size_t r = 0; r < ds_.responses.size(); ++r)
      resp_ll_[r] = resp_loglik(static_cast<int>(r), theta_[ds_.responses[r].dyad]);
    distal_ll_.resize(ds_.distal.size());
    for (std::size_t k = 0; k < ds_.distal.size(); ++k)
      distal_ll_[k] = distal_loglik(static_cast<int>(k));
  }

  double theta(int d) const {
    const auto& dd = ds_.design.dyad(d);
    double th = eff_alpha_[dd.actor] + eff_beta_[dd.partner] + eff_gamma_[d];
    if (spec_.cluster_intercept) {
      int cl = ds_.design.individual(dd.actor).cluster;
      if (cl >= 0) th += st_.lat.u[cl];
    }
    return th;
  }

  double resp_loglik(int r, double th) const {
    const auto& rec = ds_.responses[r];
    return pcm_log_likelihood(rec.category, th, st_.delta[rec.item]);
  }

  double distal_loglik(int k) const {
    const auto& rec = ds_.distal[k];
    const auto& dd = ds_.design.dyad(rec.dyad);
    int rev = ds_.design.reverse_dyad(rec.dyad);
    double eta = distal_linear_predictor(
        st_.distal, eff_alpha_[dd.actor], eff_alpha_[dd.partner],
        eff_beta_[dd.actor], eff_beta_[dd.partner], eff_gamma_[rec.dyad],
        rev >= 0 ? eff_gamma_[rev] : 0.0);
    return rec.outcome * eta - log1p_exp(eta);
  }

  bool use_distal() const { return spec_.distal == DistalMode::joint; }

  // --- block updates ------------------------------------------------------

  void update_individuals() {
    if (alpha_pinned() && beta_pinned()) return;
    const auto& h = st_.hyper;
    for (int i = 0; i < ds_.design.n_individuals(); ++i) {
      auto& sc = sc_ind_[i];
      double da = alpha_pinned() ? 0.0 : sc.scale * rng_.normal();
      double db = beta_pinned() ? 0.0 : sc.scale * rng_.normal();
      double a_new = st_.lat.alpha[i] + da;
      double b_new = st_.lat.beta[i] + db;

      double lp_old = 0.0, lp_new = 0.0;
      if (!(alpha_pinned() && beta_pinned())) {
        lp_old = dirt::detail::bivariate_normal_logpdf(
            st_.lat.alpha[i], st_.lat.beta[i], h.sigma_alpha, h.sigma_beta,
            h.rho_alpha_beta);
        lp_new = dirt::detail::bivariate_normal_logpdf(
            a_new, b_new, h.sigma_alpha, h.sigma_beta, h.rho_alpha_beta);
      }
      scratch_.clear();
      for (int r : resp_of_ind_[i]) {
        const auto& dd = ds_.design.dyad(ds_.responses[r].dyad);
        double th = theta_[ds_.responses[r].dyad];
        if (dd.actor == i) th += da;
        if (dd.partner == i) th += db;
        double ll = resp_loglik(r, th);
        lp_new += ll;
        lp_old += resp_ll_[r];
        scratch_.push_back(ll);
      }
      scratch2_.clear();
      if (use_distal()) {
        for (int k : distal_of_ind_[i]) {
          lp_old += distal_ll_[k];
          double ll = distal_loglik_shifted_ind(k, i, da, db);
          lp_new += ll;
          scratch2_.push_back(ll);
        }
      }
      bool accept = std::isfinite(lp_new) &&
                    std::log(rng_.uniform()) < lp_new - lp_old;
      if (accept) {
        st_.lat.alpha[i] = a_new;
        st_.lat.beta[i] = b_new;
        eff_alpha_[i] += da;
        eff_beta_[i] += db;
        for (int d : ds_.design.dyads_as_actor(i)) theta_[d] += da;
        for (int d : ds_.design.dyads_as_partner(i)) theta_[d] += db;
        std::size_t j = 0;
        for (int r : resp_of_ind_[i]) resp_ll_[r] = scratch_[j++];
        if (use_distal()) {
          j = 0;
          for (int k : distal_of_ind_[i]) distal_ll_[k] = scratch2_[j++];
        }
      }
      sc.record(accept, adapting_, cfg_.target_accept_low,
                cfg_.target_accept_high, cfg_.adapt_window);
      sc_ind_family_.record(accept, false, 0, 1, 1);
    }
  }

  double distal_loglik_shifted_ind(int k, int i, double da, double db) const {
    const auto& rec = ds_.distal[k];
    const auto& dd = ds_.design.dyad(rec.dyad);
    int rev = ds_.design.reverse_dyad(rec.dyad);
    double ea = eff_alpha_[dd.actor] + (dd.actor == i ? da : 0.0);
    double ep = eff_alpha_[dd.partner] + (dd.partner == i ? da : 0.0);
    double ba = eff_beta_[dd.actor] + (dd.actor == i ? db : 0.0);
    double bp = eff_beta_[dd.partner] + (dd.partner == i ? db : 0.0);
    double eta = distal_linear_predictor(st_.distal, ea, ep, ba, bp,
                                         eff_gamma_[rec.dyad],
                                         rev >= 0 ? eff_gamma_[rev] : 0.0);
    return rec.outcome * eta - log1p_exp(eta);
  }

  void update_pairs() {
    if (gamma_pinned()) return;
    const auto& h = st_.hyper;
    for (int u = 0; u < ds_.design.n_undirected(); ++u) {
      auto& sc = sc_pair_[u];
      const auto& dyads = pair_dyads_[u];
      double d1 = sc.scale * rng_.normal();
      double d2 = dyads.size() > 1 ? sc.scale * rng_.normal() : 0.0;
      double lp_old, lp_new;
      if (dyads.size() > 1) {
        lp_old = dirt::detail::bivariate_normal_logpdf(
            st_.lat.gamma[dyads[0]], st_.lat.gamma[dyads[1]], h.sigma_gamma,
            h.sigma_gamma, h.rho_gamma);
        lp_new = dirt::detail::bivariate_normal_logpdf(
            st_.lat.gamma[dyads[0]] + d1, st_.lat.gamma[dyads[1]] + d2,
            h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
      } else {
        lp_old = dirt::detail::normal_logpdf(st_.lat.gamma[dyads[0]],
                                             h.sigma_gamma);
        lp_new = dirt::detail::normal_logpdf(st_.lat.gamma[dyads[0]] + d1,
                                             h.sigma_gamma);
      }
      scratch_.clear();
      for (std::size_t s = 0; s < dyads.size(); ++s) {
        double shift = s == 0 ? d1 : d2;
        for (int r : resp_of_dyad_[dyads[s]]) {
          double ll = resp_loglik(r, theta_[dyads[s]] + shift);
          lp_new += ll;
          lp_old += resp_ll_[r];
          scratch_.push_back(ll);
        }
      }
      scratch2_.clear();
      if (use_distal()) {
        for (std::size_t s = 0; s < dyads.size(); ++s) {
          for (int k : distal_of_dyad_[dyads[s]]) {
            lp_old += distal_ll_[k];
            double ll = distal_loglik_shifted_pair(k, dyads, d1, d2);
            lp_new += ll;
            scratch2_.push_back(ll);
          }
        }
      }
      bool accept = std::isfinite(lp_new) &&
                    std::log(rng_.uniform()) < lp_new - lp_old;
      if (accept) {
        std::size_t j = 0, j2 = 0;
        for (std::size_t s = 0; s < dyads.size(); ++s) {
          double shift = s == 0 ? d1 : d2;
          st_.lat.gamma[dyads[s]] += shift;
          eff_gamma_[dyads[s]] += shift;
          theta_[dyads[s]] += shift;
          for (int r : resp_of_dyad_[dyads[s]]) resp_ll_[r] = scratch_[j++];
          if (use_distal())
            for (int k : distal_of_dyad_[dyads[s]])
              distal_ll_[k] = scratch2_[j2++];
        }
      }
      sc.record(accept, adapting_, cfg_.target_accept_low,
                cfg_.target_accept_high, cfg_.adapt_window);
      sc_pair_family_.record(accept, false, 0, 1, 1);
    }
  }

  double distal_loglik_shifted_pair(int k, const std::vector<int>& dyads,
                                    double d1, double d2) const {
    const auto& rec = ds_.distal[k];
    const auto& dd = ds_.design.dyad(rec.dyad);
    int rev = ds_.design.reverse_dyad(rec.dyad);
    auto shift_of = [&](int d) {
      if (d == dyads[0]) return d1;
      if (dyads.size() > 1 && d == dyads[1]) return d2;
      return 0.0;
    };
    double gap = eff_gamma_[rec.dyad] + shift_of(rec.dyad);
    double gpa = rev >= 0 ? eff_gamma_[rev] + shift_of(rev) : 0.0;
    double eta = distal_linear_predictor(
        st_.distal, eff_alpha_[dd.actor], eff_alpha_[dd.partner],
        eff_beta_[dd.actor], eff_beta_[dd.partner], gap, gpa);
    return rec.outcome * eta - log1p_exp(eta);
  }

  void update_items() {
    for (std::size_t i = 0; i < ds_.items.size(); ++i) {
      auto& sc = sc_item_[i];
      auto& delta = st_.delta[i];
      proposal_.assign(delta.begin(), delta.end());
      for (auto& dv : proposal_) dv += sc.scale * rng_.normal();
      double lp_old = 0.0, lp_new = 0.0;
      scratch_.clear();
      for (int r : resp_of_item_[i]) {
        const auto& rec = ds_.responses[r];
        double ll = pcm_log_likelihood(rec.category, theta_[rec.dyad],
                                       proposal_);
        lp_new += ll;
        lp_old += resp_ll_[r];
        scratch_.push_back(ll);
      }
      bool accept = std::isfinite(lp_new) &&
                    std::log(rng_.uniform()) < lp_new - lp_old;
      if (accept) {
        delta = proposal_;
        std::size_t j = 0;
        for (int r : resp_of_item_[i]) resp_ll_[r] = scratch_[j++];
      }
      sc.record(accept, adapting_, cfg_.target_accept_low,
                cfg_.target_accept_high, cfg_.adapt_window);
      sc_item_family_.record(accept, false, 0, 1, 1);
    }
  }

  void update_clusters() {
    for (std::size_t j = 0; j < st_.lat.u.size(); ++j) {
      auto& sc = sc_u_[j];
      double du = sc.scale * rng_.normal();
      double u_new = st_.lat.u[j] + du;
      double lp_old = dirt::detail::normal_logpdf(st_.lat.u[j], st_.sigma_u);
      double lp_new = dirt::detail::normal_logpdf(u_new, st_.sigma_u);
      scratch_.clear();
      for (int r : resp_of_cluster_[j]) {
        double ll = resp_loglik(r, theta_[ds_.responses[r].dyad] + du);
        lp_new += ll;
        lp_old += resp_ll_[r];
        scratch_.push_back(ll);
      }
      bool accept = std::isfinite(lp_new) &&
                    std::log(rng_.uniform()) < lp_new - lp_old;
      if (accept) {
        st_.lat.u[j] = u_new;
        for (int d = 0; d < ds_.design.n_directed(); ++d)
          if (ds_.design.individual(ds_.design.dyad(d).actor).cluster ==
              static_cast<int>(j))
            theta_[d] += du;
        std::size_t s = 0;
        for (int r : resp_of_cluster_[j]) resp_ll_[r] = scratch_[s++];
      }
      sc.record(accept, adapting_, cfg_.target_accept_low,
                cfg_.target_accept_high, cfg_.adapt_window);
    }
  }

  double latent_prior() const { return latent_log_density(st_, ds_, spec_); }

  double u_prior() const {
    double lp = 0.0;
    for (double uj : st_.lat.u)
      lp += dirt::detail::normal_logpdf(uj, st_.sigma_u);
    return lp;
  }

  /// Scalar MH move on a transformed scale. `conditional` evaluates the
  /// terms of the log posterior that depend on the parameter (the flat
  /// prior contributes only its support, handled via the transform).
  template <typename Cond>
  void update_scalar_transformed(double& param, AdaptiveScale& sc,
                                 Transform tr, Cond&& conditional) {
    double old_val = param;
    double t_old, t_new, log_jac = 0.0;
    switch (tr) {
      case Transform::log_sd:
        t_old = std::log(std::max(old_val, 1e-12));
        t_new = t_old + sc.scale * rng_.normal();
        param = std::exp(t_new);
        // uniform prior on sigma: |d sigma / dt| = sigma
        log_jac = t_new - t_old;
        break;
      case Transform::atanh_rho:
        t_old = std::atanh(std::clamp(old_val, -1.0 + 1e-12, 1.0 - 1e-12));
        t_new = t_old + sc.scale * rng_.normal();
        param = std::tanh(t_new);
        // uniform prior on rho: |d rho / dt| = 1 - rho^2
        log_jac = std::log1p(-param * param) -
                  std::log1p(-old_val * old_val);
        break;
      default:
        t_old = old_val;
        t_new = t_old + sc.scale * rng_.normal();
        param = t_new;
        break;
    }
    double lp_new = conditional();
    param = old_val;
    double lp_old = conditional();
    bool in_bound = true;
    if (spec_.sigma_upper_bound && tr == Transform::log_sd &&
        std::exp(t_new) > *spec_.sigma_upper_bound)
      in_bound = false;
    double t_val = tr == Transform::log_sd
                       ? std::exp(t_new)
                       : (tr == Transform::atanh_rho ? std::tanh(t_new) : t_new);
    bool accept = in_bound && std::isfinite(lp_new) &&
                  std::log(rng_.uniform()) < lp_new - lp_old + log_jac;
    if (accept) param = t_val;
    sc.record(accept, adapting_, cfg_.target_accept_low,
              cfg_.target_accept_high, cfg_.adapt_window);
    sc_hyper_family_.record(accept, false, 0, 1, 1);
  }

  void update_hyperparameters() {
    auto cond = [&] { return latent_prior(); };
    if (!spec_.fix_sigma_alpha)
      update_scalar_transformed(st_.hyper.sigma_alpha, sc_hyper_[0],
                                Transform::log_sd, cond);
    if (!spec_.fix_sigma_beta)
      update_scalar_transformed(st_.hyper.sigma_beta, sc_hyper_[1],
                                Transform::log_sd, cond);
    if (!spec_.fix_sigma_gamma)
      update_scalar_transformed(st_.hyper.sigma_gamma, sc_hyper_[2],
                                Transform::log_sd, cond);
    if (!spec_.fix_rho_alpha_beta)
      update_scalar_transformed(st_.hyper.rho_alpha_beta, sc_hyper_[3],
                                Transform::atanh_rho, cond);
    if (!spec_.fix_rho_gamma)
      update_scalar_transformed(st_.hyper.rho_gamma, sc_hyper_[4],
                                Transform::atanh_rho, cond);
  }

  // Collective scale moves: a SD hyperparameter and its latent vector form
  // another slowly mixing direction (the ensemble scale of the latents
  // relaxes only through many single-site moves). Rescale both together;
  // the map (log sigma, v) -> (log sigma + eps, v e^eps) has Jacobian
  // e^{n eps}, and the flat prior on sigma contributes another e^{eps} in
  // the log-sigma parametrization.
  // Counter-scaling the two coefficients that multiply the rescaled
  // latents keeps every distal eta fixed (up to interaction terms), so the
  // move never trades distal fit against the latent prior — without that,
  // the gamma version ratchets the distal block down its ridge (inflate
  // gammas, then grow b to match).
  void update_scale_moves() {
    if (!spec_.fix_sigma_alpha && !alpha_pinned())
      update_scale(st_.hyper.sigma_alpha, st_.lat.alpha, 1, 2, sc_scale_[0]);
    if (!spec_.fix_sigma_beta && !beta_pinned())
      update_scale(st_.hyper.sigma_beta, st_.lat.beta, 3, 4, sc_scale_[1]);
    if (!spec_.fix_sigma_gamma && !gamma_pinned())
      update_scale(st_.hyper.sigma_gamma, st_.lat.gamma, 5, 6, sc_scale_[2]);
  }

  void update_scale(double& sigma, std::vector<double>& lat, int b_lo,
                    int b_hi, AdaptiveScale& sc) {
    double eps = sc.scale * rng_.normal();
    double lp_old = cached_likelihood_total() + latent_prior();
    double sigma_old = sigma;
    scratch2_ = lat;
    double f = std::exp(eps);
    sigma *= f;
    for (auto& v : lat) v *= f;
    bool shear_b = use_distal() && spec_.distal == DistalMode::joint;
    double b_lo_old = st_.distal.b[b_lo], b_hi_old = st_.distal.b[b_hi];
    int n_b = 0;
    if (shear_b) {
      st_.distal.b[b_lo] /= f;
      st_.distal.b[b_hi] /= f;
      n_b = 2;
    }
    refresh_all();
    double lp_new = cached_likelihood_total() + latent_prior();
    bool in_bound =
        !(spec_.sigma_upper_bound && sigma > *spec_.sigma_upper_bound);
    double log_acc =
        lp_new - lp_old +
        (static_cast<double>(lat.size()) + 1.0 - n_b) * eps;
    bool accept = in_bound && std::isfinite(lp_new) &&
                  std::log(rng_.uniform()) < log_acc;
    if (!accept) {
      sigma = sigma_old;
      lat = scratch2_;
      st_.distal.b[b_lo] = b_lo_old;
      st_.distal.b[b_hi] = b_hi_old;
      refresh_all();
    }
    sc.record(accept, adapting_, cfg_.target_accept_low,
              cfg_.target_accept_high, cfg_.adapt_window);
  }

  // mu_male and covariate coefficients shift many thetas at once; these
  // moves recompute the affected caches wholesale.
  void update_mean_scalar(double& param, AdaptiveScale& sc) {
    double old_val = param;
    double prop = old_val + sc.scale * rng_.normal();
    double lp_old = cached_likelihood_total();
    param = prop;
    refresh_all();
    double lp_new = cached_likelihood_total();
    bool accept = std::isfinite(lp_new) &&
                  std::log(rng_.uniform()) < lp_new - lp_old;
    if (!accept) {
      param = old_val;
      refresh_all();
    }
    sc.record(accept, adapting_, cfg_.target_accept_low,
              cfg_.target_accept_high, cfg_.adapt_window);
  }

  double cached_likelihood_total() const {
    double lp = 0.0;
    for (double v : resp_ll_) lp += v;
    if (use_distal())
      for (double v : distal_ll_) lp += v;
    return lp;
  }

  void update_covariate_coefficients() {
    std::size_t idx = 0;
    for (auto* vec : {&st_.c_alpha, &st_.c_beta, &st_.c_gamma})
      for (auto& c : *vec) update_mean_scalar(c, sc_c_[idx++]);
  }

  // Collective location moves. Shifting every step difficulty together
  // with every alpha (or every beta) leaves each theta - delta, and hence
  // every response likelihood, unchanged; coordinate-wise updates mix
  // these directions very slowly. The block move pays only the latent
  // prior and the distal likelihood. Similarly, shifting mu_male against
  // the male alphas leaves all effective latents unchanged and costs only
  // the latent prior.
  void update_translations() {
    if (!alpha_pinned()) update_delta_shift(true, sc_shift_alpha_);
    if (!beta_pinned()) update_delta_shift(false, sc_shift_beta_);
    if (spec_.gender_mean && !spec_.fix_mu_male &&
        ds_.design.has_gender_labels())
      update_gender_shift();
  }

  void update_delta_shift(bool alpha, AdaptiveScale& sc) {
    double c = sc.scale * rng_.normal();
    double lp_old = latent_prior();
    if (use_distal())
      for (double v : distal_ll_) lp_old += v;

    auto& lat = alpha ? st_.lat.alpha : st_.lat.beta;
    auto& eff = alpha ? eff_alpha_ : eff_beta_;
    for (auto& v : lat) v += c;
    scratch2_ = eff;
    for (auto& v : eff) v += c;
    // Shifting all alphas raises every distal eta by (b1+b2)c; the
    // intercept can absorb that exactly (up to interaction terms), so
    // shear it along and leave only the latent prior to pay.
    double b0_old = st_.distal.b[0];
    if (use_distal() && spec_.distal == DistalMode::joint)
      st_.distal.b[0] -= c * (alpha ? st_.distal.b[1] + st_.distal.b[2]
                                    : st_.distal.b[3] + st_.distal.b[4]);

    double lp_new = latent_prior();
    if (use_distal())
      for (std::size_t k = 0; k < ds_.distal.size(); ++k)
        lp_new += distal_loglik(static_cast<int>(k));

    bool accept = std::isfinite(lp_new) &&
                  std::log(rng_.uniform()) < lp_new - lp_old;
    if (accept) {
      for (auto& dv : st_.delta)
        for (auto& v : dv) v += c;
      refresh_all();
    } else {
      for (auto& v : lat) v -= c;
      eff = scratch2_;
      st_.distal.b[0] = b0_old;
    }
    sc.record(accept, adapting_, cfg_.target_accept_low,
              cfg_.target_accept_high, cfg_.adapt_window);
  }

  void update_gender_shift() {
    double c = sc_shift_mu_.scale * rng_.normal();
    double lp_old = latent_prior();
    for (int i = 0; i < ds_.design.n_individuals(); ++i)
      if (ds_.design.individual(i).gender == 1) st_.lat.alpha[i] -= c;
    st_.hyper.mu_male += c;
    double lp_new = latent_prior();
    bool accept = std::isfinite(lp_new) &&
                  std::log(rng_.uniform()) < lp_new - lp_old;
    if (accept) {
      refresh_all();
    } else {
      for (int i = 0; i < ds_.design.n_individuals(); ++i)
        if (ds_.design.individual(i).gender == 1) st_.lat.alpha[i] += c;
      st_.hyper.mu_male -= c;
    }
    sc_shift_mu_.record(accept, adapting_, cfg_.target_accept_low,
                        cfg_.target_accept_high, cfg_.adapt_window);
  }

  // Free coefficient indices into DistalCoefficients::b under the
  // current constraints.
  std::vector<int> free_b_indices() const {
    std::vector<int> idx = {0};
    for (int i = 1; i <= 6; ++i) {
      if (spec_.exchangeable_distal && (i == 2 || i == 4 || i == 6)) continue;
      idx.push_back(i);
    }
    if (spec_.distal_interactions)
      for (int i = 7; i <= 9; ++i) idx.push_back(i);
    return idx;
  }

  // Regression row for one distal record, matching free_b_indices()
  // minus the leading intercept column.
  void distal_row(int k, std::vector<double>& row) const {
    const auto& rec = ds_.distal[k];
    const auto& dd = ds_.design.dyad(rec.dyad);
    int rev = ds_.design.reverse_dyad(rec.dyad);
    double aa = eff_alpha_[dd.actor], ap = eff_alpha_[dd.partner];
    double ba = eff_beta_[dd.actor], bp = eff_beta_[dd.partner];
    double gap = eff_gamma_[rec.dyad], gpa = rev >= 0 ? eff_gamma_[rev] : 0.0;
    row.clear();
    row.push_back(1.0);
    if (spec_.exchangeable_distal) {
      row.push_back(aa + ap);
      row.push_back(ba + bp);
      row.push_back(gap + gpa);
    } else {
      row.push_back(aa);
      row.push_back(ap);
      row.push_back(ba);
      row.push_back(bp);
      row.push_back(gap);
      row.push_back(gpa);
    }
    if (spec_.distal_interactions) {
      row.push_back(aa * ap);
      row.push_back(ba * bp);
      row.push_back(gap * gpa);
    }
  }

  // IRLS fit of the outcomes on the current effective latents: conditional
  // mode in `bhat` and lower Cholesky factor of the information at the
  // mode in `chol`. Returns false on separation or a singular fit.
  bool distal_laplace(const std::vector<int>& idx, std::vector<double>& bhat,
                      std::vector<std::vector<double>>& chol) {
    const std::size_t p = idx.size();
    const std::size_t n = ds_.distal.size();
    std::vector<std::vector<double>> x(n);
    for (std::size_t k = 0; k < n; ++k)
      distal_row(static_cast<int>(k), x[k]);
    bhat.assign(p, 0.0);
    std::vector<double> eta(n), mu(n);
    std::vector<std::vector<double>> info(p, std::vector<double>(p));
    bool fit_ok = false;
    for (int it = 0; it < 40; ++it) {
      for (auto& r : info) std::fill(r.begin(), r.end(), 0.0);
      std::vector<double> score(p, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        double e = 0.0;
        for (std::size_t j = 0; j < p; ++j) e += x[k][j] * bhat[j];
        eta[k] = e;
        mu[k] = inv_logit(e);
        double w = mu[k] * (1.0 - mu[k]);
        double r = ds_.distal[k].outcome - mu[k];
        for (std::size_t j = 0; j < p; ++j) {
          score[j] += x[k][j] * r;
          for (std::size_t l = 0; l <= j; ++l)
            info[j][l] += w * x[k][j] * x[k][l];
        }
      }
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t l = j + 1; l < p; ++l) info[j][l] = info[l][j];
      auto a = info;
      auto step = score;
      if (!chol_factor_solve(a, step)) break;
      double delta = 0.0, big = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        bhat[j] += step[j];
        delta = std::max(delta, std::abs(step[j]));
        big = std::max(big, std::abs(bhat[j]));
      }
      if (big > 30.0) break;  // separation; give up on the approximation
      if (delta < 1e-8) {
        fit_ok = true;
        break;
      }
    }
    if (!fit_ok) return false;
    // refresh the information matrix at the mode and factor it
    for (auto& r : info) std::fill(r.begin(), r.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double e = 0.0;
      for (std::size_t j = 0; j < p; ++j) e += x[k][j] * bhat[j];
      double w = inv_logit(e) * (1.0 - inv_logit(e));
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t l = 0; l <= j; ++l)
          info[j][l] += w * x[k][j] * x[k][l];
    }
    std::vector<double> dummy(p, 0.0);
    chol = info;
    return chol_factor_solve(chol, dummy);  // lower factor L in chol
  }

  // Joint random-walk proposal over the free coefficients, whitened by
  // the observed information of a logistic refit given the current
  // latents. The information depends on the latents but not on the
  // current coefficients, so the step stays a symmetric random walk.
  // Falls back to scalar walks when the inner fit fails (e.g. separated
  // tiny datasets).
  void update_distal_coefficients() {
    auto idx = free_b_indices();
    const std::size_t p = idx.size();
    const std::size_t n = ds_.distal.size();
    if (n == 0) return;

    std::vector<double> bhat;
    std::vector<std::vector<double>> chol;
    if (distal_laplace(idx, bhat, chol)) {
      // The refit (not the cheap likelihood sweeps) dominates the cost, so
      // amortize one factorization over several inner steps.
      constexpr int kInnerSteps = 2;
      constexpr double kMaxCoefStep = 0.35;
      std::vector<double> z(p), step(p), cur(p);
      for (int rep = 0; rep < kInnerSteps; ++rep) {
        // step = s * L^-T z: unit moves in the whitened metric
        for (auto& v : z) v = rng_.normal();
        for (std::size_t i = p; i-- > 0;) {
          double s = z[i];
          for (std::size_t k = i + 1; k < p; ++k) s -= chol[k][i] * step[k];
          step[i] = s / chol[i][i];
        }
        for (std::size_t j = 0; j < p; ++j) cur[j] = st_.distal.b[idx[j]];

        // Escapes down the ridge are rare activated events driven by the
        // occasional long step along the softest direction; clip the step
        // in the infinity norm (the clip is odd in z, so the proposal
        // stays symmetric) to suppress them.
        double mx = 0.0;
        for (std::size_t j = 0; j < p; ++j)
          mx = std::max(mx, std::abs(sc_bprec_.scale * step[j]));
        double shrink = mx > kMaxCoefStep ? kMaxCoefStep / mx : 1.0;

        double lp_old = 0.0, lp_new = 0.0;
        scratch_.clear();
        for (std::size_t j = 0; j < p; ++j)
          st_.distal.b[idx[j]] = cur[j] + shrink * sc_bprec_.scale * step[j];
        st_.distal.enforce_constraints();
        for (std::size_t k = 0; k < n; ++k) {
          lp_old += distal_ll_[k];
          double ll = distal_loglik(static_cast<int>(k));
          lp_new += ll;
          scratch_.push_back(ll);
        }
        bool accept = std::isfinite(lp_new) &&
                      std::log(rng_.uniform()) < lp_new - lp_old;
        if (accept) {
          for (std::size_t k = 0; k < n; ++k) distal_ll_[k] = scratch_[k];
        } else {
          for (std::size_t j = 0; j < p; ++j) st_.distal.b[idx[j]] = cur[j];
          st_.distal.enforce_constraints();
        }
        sc_bprec_.record(accept, adapting_, cfg_.target_accept_low,
                         cfg_.target_accept_high, cfg_.adapt_window);
        sc_b_family_.record(accept, false, 0, 1, 1);
      }
      return;
    }
    update_distal_scalars();
  }

  // During burn-in the latents start far from their posterior mass, the
  // conditional information on the coefficients is weak, and the chain can
  // overshoot along the near-flat large-|b| ridge before the latents
  // settle. Re-centering the block at its conditional mode mid-burn-in
  // discards that transient (pure adaptation: never run after burn-in).
  void recenter_distal() {
    auto idx = free_b_indices();
    if (ds_.distal.empty()) return;
    std::vector<double> bhat;
    std::vector<std::vector<double>> chol;
    if (!distal_laplace(idx, bhat, chol)) return;
    for (std::size_t j = 0; j < idx.size(); ++j)
      st_.distal.b[idx[j]] = bhat[j];
    st_.distal.enforce_constraints();
    for (std::size_t k = 0; k < ds_.distal.size(); ++k)
      distal_ll_[k] = distal_loglik(static_cast<int>(k));
  }

  void update_distal_scalars() {
    int nb = spec_.n_distal_coefficients();
    for (int i = 0; i < nb; ++i) {
      if (spec_.exchangeable_distal && (i == 2 || i == 4 || i == 6)) continue;
      auto& sc = sc_b_[i];
      double old_val = st_.distal.b[i];
      double prop = old_val + sc.scale * rng_.normal();
      double lp_old = 0.0, lp_new = 0.0;
      scratch_.clear();
      st_.distal.b[i] = prop;
      st_.distal.enforce_constraints();
      for (std::size_t k = 0; k < ds_.distal.size(); ++k) {
        lp_old += distal_ll_[k];
        double ll = distal_loglik(static_cast<int>(k));
        lp_new += ll;
        scratch_.push_back(ll);
      }
      bool accept = std::isfinite(lp_new) &&
                    std::log(rng_.uniform()) < lp_new - lp_old;
      if (accept) {
        for (std::size_t k = 0; k < ds_.distal.size(); ++k)
          distal_ll_[k] = scratch_[k];
      } else {
        st_.distal.b[i] = old_val;
        st_.distal.enforce_constraints();
      }
      sc.record(accept, adapting_, cfg_.target_accept_low,
                cfg_.target_accept_high, cfg_.adapt_window);
      sc_b_family_.record(accept, false, 0, 1, 1);
    }
  }

  // --- recording ----------------------------------------------------------

  void record_draw(std::vector<std::vector<double>>& out) {
    out.push_back(pack_state(st_, ds_, spec_, /*include_latents=*/false));
  }

  void init_moments(LatentMoments& m) {
    m.alpha.resize(ds_.design.n_individuals());
    m.beta.resize(ds_.design.n_individuals());
    m.gamma.resize(ds_.design.n_directed());
    m.u.resize(st_.lat.u.size());
  }

  void record_latents(LatentMoments& m, std::vector<LatentDraw>& retained,
                      int retained_index) {
    for (int i = 0; i < ds_.design.n_individuals(); ++i) {
      m.alpha[i].add(eff_alpha_[i]);
      m.beta[i].add(eff_beta_[i]);
    }
    for (int d = 0; d < ds_.design.n_directed(); ++d)
      m.gamma[d].add(eff_gamma_[d]);
    for (std::size_t j = 0; j < st_.lat.u.size(); ++j)
      m.u[j].add(st_.lat.u[j]);
    if (spec_.retain_latent_draws &&
        retained_index % spec_.latent_thin == 0) {
      LatentDraw ld;
      ld.alpha = eff_alpha_;
      ld.beta = eff_beta_;
      ld.gamma = eff_gamma_;
      retained.push_back(std::move(ld));
    }
  }

  const Dataset& ds_;
  const ModelSpec& spec_;
  const McmcConfig& cfg_;
  Rng rng_;
  ModelState st_;
  bool adapting_ = true;

  std::vector<double> eff_alpha_, eff_beta_, eff_gamma_;
  std::vector<double> theta_;
  std::vector<double> resp_ll_, distal_ll_;
  std::vector<double> scratch_, scratch2_, proposal_;

  std::vector<std::vector<int>> resp_of_ind_, resp_of_dyad_, resp_of_item_;
  std::vector<std::vector<int>> distal_of_ind_, distal_of_dyad_;
  std::vector<std::vector<int>> pair_dyads_, resp_of_cluster_;

  std::vector<AdaptiveScale> sc_ind_, sc_pair_, sc_item_, sc_b_, sc_c_, sc_u_;
  AdaptiveScale sc_hyper_[5];
  AdaptiveScale sc_mu_, sc_sigma_u_;
  AdaptiveScale sc_bprec_, sc_shift_alpha_, sc_shift_beta_, sc_shift_mu_;
  AdaptiveScale sc_scale_[3];
  AdaptiveScale sc_ind_family_, sc_pair_family_, sc_item_family_,
      sc_hyper_family_, sc_b_family_;
};

}  // namespace detail

/// Runs the sampler. Errors out when the design leaves freed
/// variance-correlation parameters unidentified, unless
/// cfg.force_unidentified is set.
inline PosteriorDraws fit(const Dataset& ds, const ModelSpec& spec,
                          const McmcConfig& cfg) {
  cfg.validate();
  ds.validate();
  validate_model_spec(spec, ds);
  require(cfg.chains >= 2, "need >= 2 chains for R-hat");

  if (!cfg.force_unidentified) {
    auto rep = check_identification(ds.design);
    auto demand = [&](bool freed, IdStatus s, const char* name) {
      if (freed && s != IdStatus::identified)
        throw std::invalid_argument(
            std::string("parameter ") + name +
            " is not identified by this design (" + to_string(s) +
            "); fix it or pass force");
    };
    demand(!spec.fix_sigma_alpha, rep.sigma_alpha2, "sigma_alpha");
    demand(!spec.fix_sigma_beta, rep.sigma_beta2, "sigma_beta");
    demand(!spec.fix_sigma_gamma, rep.sigma_gamma2, "sigma_gamma");
    demand(!spec.fix_rho_alpha_beta, rep.rho_alpha_beta, "rho_alpha_beta");
    demand(!spec.fix_rho_gamma, rep.rho_gamma, "rho_gamma");
  }

  auto layout = make_layout(ds, spec, /*include_latents=*/false);
  PosteriorDraws out;
  out.names = layout.names;
  out.draws.resize(cfg.chains);
  std::vector<LatentMoments> chain_moments(cfg.chains);
  std::vector<std::vector<LatentDraw>> chain_latents(cfg.chains);
  std::vector<std::map<std::string, double>> chain_accept(cfg.chains);

  auto run_chain = [&](int c) {
    detail::ChainRunner runner(ds, spec, cfg, c);
    std::map<std::string, detail::AdaptiveScale*> fams;
    runner.run(out.draws[c], chain_moments[c], chain_latents[c], fams);
    for (auto& [k, v] : fams)
      if (v->total_proposed > 0) chain_accept[c][k] = v->rate();
  };

  if (cfg.threads > 1) {
    std::vector<std::thread> pool;
    for (int c = 0; c < cfg.chains; ++c) pool.emplace_back(run_chain, c);
    for (auto& t : pool) t.join();
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  }

  // Deterministic merge, ordered by chain id.
  out.latent_moments = chain_moments[0];
  for (int c = 1; c < cfg.chains; ++c) {
    auto merge_vec = [](std::vector<RunningMoments>& a,
                        const std::vector<RunningMoments>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i].merge(b[i]);
    };
    merge_vec(out.latent_moments.alpha, chain_moments[c].alpha);
    merge_vec(out.latent_moments.beta, chain_moments[c].beta);
    merge_vec(out.latent_moments.gamma, chain_moments[c].gamma);
    merge_vec(out.latent_moments.u, chain_moments[c].u);
  }
  for (int c = 0; c < cfg.chains; ++c)
    for (auto& ld : chain_latents[c]) out.latent_draws.push_back(std::move(ld));

  for (const auto& [k, v] : chain_accept[0]) {
    double sum = 0.0;
    for (int c = 0; c < cfg.chains; ++c) sum += chain_accept[c][k];
    out.acceptance[k] = sum / cfg.chains;
  }

  out.rhat.resize(out.names.size());
  for (std::size_t p = 0; p < out.names.size(); ++p)
    out.rhat[p] = rhat(out, static_cast<int>(p));
  return out;
}

// ---------------------------------------------------------------------------
// Latent scores

struct LatentScore {
  std::string id;
  std::string role;  // alpha | beta | gamma | u
  double eap = 0.0;
  double sd = 0.0;
};

/// EAP means and posterior SDs of the effective latent traits.
inline std::vector<LatentScore> eap_latent_scores(const PosteriorDraws& d,
                                                  const DyadDesign& design) {
  if (d.latent_moments.empty())
    throw std::logic_error(
        "latent moments were not retained; rerun the fit with latent "
        "tracking enabled");
  std::vector<LatentScore> out;
  for (int i = 0; i < design.n_individuals(); ++i)
    out.push_back({design.individual(i).id, "alpha",
                   d.latent_moments.alpha[i].mean,
                   d.latent_moments.alpha[i].sd()});
  for (int i = 0; i < design.n_individuals(); ++i)
    out.push_back({design.individual(i).id, "beta",
                   d.latent_moments.beta[i].mean,
                   d.latent_moments.beta[i].sd()});
  for (int k = 0; k < design.n_directed(); ++k) {
    const auto& dd = design.dyad(k);
    out.push_back({design.individual(dd.actor).id + ">" +
                       design.individual(dd.partner).id,
                   "gamma", d.latent_moments.gamma[k].mean,
                   d.latent_moments.gamma[k].sd()});
  }
  for (std::size_t j = 0; j < d.latent_moments.u.size(); ++j)
    out.push_back({"cluster" + std::to_string(j), "u",
                   d.latent_moments.u[j].mean, d.latent_moments.u[j].sd()});
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_draws_csv(const PosteriorDraws& d, const std::string& path) {
  csv::Writer w(path);
  w.row({"chain", "iteration", "parameter", "value"});
  for (int c = 0; c < d.n_chains(); ++c)
    for (int it = 0; it < d.n_retained(); ++it)
      for (std::size_t p = 0; p < d.names.size(); ++p)
        w.row({std::to_string(c + 1), std::to_string(it + 1), d.names[p],
               csv::format_double(d.draws[c][it][p])});
}

inline void write_summary_csv(const PosteriorSummary& s,
                              const std::string& path) {
  csv::Writer w(path);
  w.row({"parameter", "mean", "q2.5", "q97.5", "rhat"});
  for (const auto& r : s.rows)
    w.row({r.name, csv::format_double(r.mean), csv::format_double(r.q2_5),
           csv::format_double(r.q97_5), csv::format_double(r.rhat)});
}

}  // namespace dirt
