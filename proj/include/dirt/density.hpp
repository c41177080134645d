#pragma once

// Joint log posterior density of the dyadic partial credit model with
// optional distal regression and mean-structure extensions, plus its
// analytic gradient and a flat parameter packing used by the sampler,
// summaries and the finite-difference audit.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dirt/core.hpp"
#include "dirt/dataset.hpp"
#include "dirt/model_spec.hpp"
#include "dirt/pcm.hpp"

namespace dirt {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// All unknowns of the model. Latent alpha/beta/gamma are stored
/// centered; the mean structure (gender shift, covariates, cluster
/// intercepts) enters the composite trait and the effective latents used
/// by the distal regression.
struct ModelState {
  Hyperparameters hyper;  // includes mu_male
  std::vector<std::vector<double>> delta;
  DistalCoefficients distal;
  std::vector<double> c_alpha, c_beta, c_gamma;
  double sigma_u = 1.0;
  LatentState lat;
};

inline ModelState init_state(const Dataset& ds, const ModelSpec& spec) {
  ModelState st;
  st.delta.resize(ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    st.delta[i].assign(ds.items[i].categories - 1, 0.0);
  st.distal.interactions = spec.distal_interactions;
  st.distal.exchangeable = spec.exchangeable_distal;
  if (spec.use_covariates) {
    st.c_alpha.assign(ds.covariates.alpha_names.size(), 0.0);
    st.c_beta.assign(ds.covariates.beta_names.size(), 0.0);
    st.c_gamma.assign(ds.covariates.gamma_names.size(), 0.0);
  }
  st.lat.alpha.assign(ds.design.n_individuals(), 0.0);
  st.lat.beta.assign(ds.design.n_individuals(), 0.0);
  st.lat.gamma.assign(ds.design.n_directed(), 0.0);
  if (spec.cluster_intercept) st.lat.u.assign(ds.design.n_clusters(), 0.0);
  if (spec.fix_sigma_alpha) st.hyper.sigma_alpha = *spec.fix_sigma_alpha;
  if (spec.fix_sigma_beta) st.hyper.sigma_beta = *spec.fix_sigma_beta;
  if (spec.fix_sigma_gamma) st.hyper.sigma_gamma = *spec.fix_sigma_gamma;
  if (spec.fix_rho_alpha_beta) st.hyper.rho_alpha_beta = *spec.fix_rho_alpha_beta;
  if (spec.fix_rho_gamma) st.hyper.rho_gamma = *spec.fix_rho_gamma;
  if (spec.fix_mu_male) st.hyper.mu_male = *spec.fix_mu_male;
  return st;
}

namespace detail {

inline double dot(const std::vector<double>& x, const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += x[k] * c[k];
  return s;
}

}  // namespace detail

/// Effective (uncentered) actor trait of individual i: Eq.-of-motion for
/// the distal regression and the trait means.
inline double effective_alpha(const ModelState& st, const Dataset& ds,
                              const ModelSpec& spec, int i) {
  double v = st.lat.alpha[i];
  if (spec.gender_mean && ds.design.individual(i).gender == 1)
    v += st.hyper.mu_male;
  if (spec.use_covariates && !st.c_alpha.empty())
    v += detail::dot(ds.covariates.x_alpha[i], st.c_alpha);
  return v;
}

inline double effective_beta(const ModelState& st, const Dataset& ds,
                             const ModelSpec& spec, int i) {
  double v = st.lat.beta[i];
  if (spec.use_covariates && !st.c_beta.empty())
    v += detail::dot(ds.covariates.x_beta[i], st.c_beta);
  return v;
}

inline double effective_gamma(const ModelState& st, const Dataset& ds,
                              const ModelSpec& spec, int d) {
  double v = st.lat.gamma[d];
  if (spec.use_covariates && !st.c_gamma.empty())
    v += detail::dot(ds.covariates.x_gamma[d], st.c_gamma);
  return v;
}

/// Composite trait for directed dyad d.
inline double theta_for_dyad(const ModelState& st, const Dataset& ds,
                             const ModelSpec& spec, int d) {
  const auto& dd = ds.design.dyad(d);
  double th = effective_alpha(st, ds, spec, dd.actor) +
              effective_beta(st, ds, spec, dd.partner) +
              effective_gamma(st, ds, spec, d);
  if (spec.cluster_intercept) {
    int cl = ds.design.individual(dd.actor).cluster;
    if (cl >= 0) th += st.lat.u[cl];
  }
  return th;
}

/// Linear predictor of the distal regression for record `dr`, using
/// effective latents. The reverse gamma is 0 when the reciprocal dyad is
/// absent from the design.
inline double distal_eta(const ModelState& st, const Dataset& ds,
                         const ModelSpec& spec, const DistalRecord& dr) {
  const auto& dd = ds.design.dyad(dr.dyad);
  int rev = ds.design.reverse_dyad(dr.dyad);
  return distal_linear_predictor(
      st.distal, effective_alpha(st, ds, spec, dd.actor),
      effective_alpha(st, ds, spec, dd.partner),
      effective_beta(st, ds, spec, dd.actor),
      effective_beta(st, ds, spec, dd.partner),
      effective_gamma(st, ds, spec, dr.dyad),
      rev >= 0 ? effective_gamma(st, ds, spec, rev) : 0.0);
}

// ---------------------------------------------------------------------------
// Log-density pieces

namespace detail {

inline bool sigma_pinned_zero(const std::optional<double>& fix) {
  return fix && *fix == 0.0;
}

/// log N2((x1,x2); 0, [[s1^2, r s1 s2],[r s1 s2, s2^2]]). Infinite when
/// the covariance is singular.
inline double bivariate_normal_logpdf(double x1, double x2, double s1,
                                      double s2, double r) {
  const double res = 1.0 - r * r;
  if (s1 <= 0.0 || s2 <= 0.0 || res <= 0.0) return kNegInf;
  const double z1 = x1 / s1, z2 = x2 / s2;
  const double q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / res;
  return -std::log(2.0 * M_PI) - std::log(s1) - std::log(s2) -
         0.5 * std::log(res) - 0.5 * q;
}

inline double normal_logpdf(double x, double s) {
  if (s <= 0.0) return kNegInf;
  const double z = x / s;
  return -0.5 * std::log(2.0 * M_PI) - std::log(s) - 0.5 * z * z;
}

}  // namespace detail

/// True when the hyperparameters lie inside the prior support (uniform
/// priors: [0, inf) or the optional bound for SDs, [-1, 1] for
/// correlations).
inline bool in_prior_support(const ModelState& st, const ModelSpec& spec) {
  const auto& h = st.hyper;
  if (h.sigma_alpha < 0 || h.sigma_beta < 0 || h.sigma_gamma < 0) return false;
  if (std::abs(h.rho_alpha_beta) > 1 || std::abs(h.rho_gamma) > 1) return false;
  if (!std::isfinite(h.mu_male)) return false;
  if (spec.cluster_intercept && st.sigma_u < 0) return false;
  if (spec.sigma_upper_bound) {
    const double ub = *spec.sigma_upper_bound;
    if (h.sigma_alpha > ub || h.sigma_beta > ub || h.sigma_gamma > ub)
      return false;
    if (spec.cluster_intercept && st.sigma_u > ub) return false;
  }
  return true;
}

/// Sum of the latent-trait log-densities under the current
/// hyperparameters. Traits whose sigma is pinned to 0 contribute nothing
/// (they are constants).
inline double latent_log_density(const ModelState& st, const Dataset& ds,
                                 const ModelSpec& spec) {
  double lp = 0.0;
  const auto& h = st.hyper;
  const bool ab_pinned = detail::sigma_pinned_zero(spec.fix_sigma_alpha) &&
                         detail::sigma_pinned_zero(spec.fix_sigma_beta);
  if (!ab_pinned) {
    for (int i = 0; i < ds.design.n_individuals(); ++i)
      lp += detail::bivariate_normal_logpdf(st.lat.alpha[i], st.lat.beta[i],
                                            h.sigma_alpha, h.sigma_beta,
                                            h.rho_alpha_beta);
  }
  if (!detail::sigma_pinned_zero(spec.fix_sigma_gamma)) {
    for (int d = 0; d < ds.design.n_directed(); ++d) {
      const auto& dd = ds.design.dyad(d);
      int rev = ds.design.reverse_dyad(d);
      if (rev >= 0) {
        if (dd.slot != 1) continue;  // count each pair once
        lp += detail::bivariate_normal_logpdf(st.lat.gamma[d],
                                              st.lat.gamma[rev], h.sigma_gamma,
                                              h.sigma_gamma, h.rho_gamma);
      } else {
        lp += detail::normal_logpdf(st.lat.gamma[d], h.sigma_gamma);
      }
    }
  }
  if (spec.cluster_intercept) {
    for (double uj : st.lat.u) lp += detail::normal_logpdf(uj, st.sigma_u);
  }
  return lp;
}

/// Log posterior density (up to a constant): PCM likelihood + optional
/// distal likelihood + latent-trait densities + flat log-priors.
/// Returns -inf outside the prior support.
inline double joint_log_density(const ModelState& st, const Dataset& ds,
                                const ModelSpec& spec) {
  if (!in_prior_support(st, spec)) return kNegInf;
  double lp = latent_log_density(st, ds, spec);
  if (!std::isfinite(lp)) return kNegInf;

  for (const auto& r : ds.responses) {
    require(r.item >= 0 && r.item < static_cast<int>(st.delta.size()),
            "response item index out of range");
    lp += pcm_log_likelihood(r.category, theta_for_dyad(st, ds, spec, r.dyad),
                             st.delta[r.item]);
  }
  if (spec.distal == DistalMode::joint) {
    for (const auto& dr : ds.distal) {
      const double eta = distal_eta(st, ds, spec, dr);
      lp += dr.outcome * eta - log1p_exp(eta);
    }
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Analytic gradient

/// Mirror of ModelState holding partial derivatives.
struct ModelGradient {
  Hyperparameters hyper;  // used as a plain container of partials
  std::vector<std::vector<double>> delta;
  double b[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  std::vector<double> c_alpha, c_beta, c_gamma;
  double sigma_u = 0.0;
  LatentState lat;
};

namespace detail {

inline void bivariate_normal_grad(double x1, double x2, double s1, double s2,
                                  double r, double& dx1, double& dx2,
                                  double& ds1, double& ds2, double& dr) {
  const double res = 1.0 - r * r;
  const double z1 = x1 / s1, z2 = x2 / s2;
  dx1 = -(z1 - r * z2) / (res * s1);
  dx2 = -(z2 - r * z1) / (res * s2);
  ds1 = -1.0 / s1 + z1 * (z1 - r * z2) / (res * s1);
  ds2 = -1.0 / s2 + z2 * (z2 - r * z1) / (res * s2);
  const double q = z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2;
  dr = r / res - 0.5 * (-2.0 * z1 * z2 * res + q * 2.0 * r) / (res * res);
}

}  // namespace detail

/// Gradient of joint_log_density with respect to every continuous
/// unknown. The state must be an interior point of the support.
inline ModelGradient joint_log_density_grad(const ModelState& st,
                                            const Dataset& ds,
                                            const ModelSpec& spec) {
  ModelGradient g;
  g.hyper = Hyperparameters{0, 0, 0, 0, 0, 0};
  g.delta.resize(st.delta.size());
  for (std::size_t i = 0; i < st.delta.size(); ++i)
    g.delta[i].assign(st.delta[i].size(), 0.0);
  g.c_alpha.assign(st.c_alpha.size(), 0.0);
  g.c_beta.assign(st.c_beta.size(), 0.0);
  g.c_gamma.assign(st.c_gamma.size(), 0.0);
  g.lat.alpha.assign(st.lat.alpha.size(), 0.0);
  g.lat.beta.assign(st.lat.beta.size(), 0.0);
  g.lat.gamma.assign(st.lat.gamma.size(), 0.0);
  g.lat.u.assign(st.lat.u.size(), 0.0);

  // Accumulate d logp / d(effective latent) first, then chain-rule into
  // centered latents and mean-structure parameters.
  std::vector<double> ga(st.lat.alpha.size(), 0.0);
  std::vector<double> gb(st.lat.beta.size(), 0.0);
  std::vector<double> gg(st.lat.gamma.size(), 0.0);

  double dtheta;
  double ddelta[kMaxCategories];
  for (const auto& r : ds.responses) {
    const auto& dd = ds.design.dyad(r.dyad);
    pcm_log_likelihood_grad(r.category, theta_for_dyad(st, ds, spec, r.dyad),
                            st.delta[r.item], &dtheta, ddelta);
    ga[dd.actor] += dtheta;
    gb[dd.partner] += dtheta;
    gg[r.dyad] += dtheta;
    if (spec.cluster_intercept) {
      int cl = ds.design.individual(dd.actor).cluster;
      if (cl >= 0) g.lat.u[cl] += dtheta;
    }
    for (std::size_t k = 0; k < st.delta[r.item].size(); ++k)
      g.delta[r.item][k] += ddelta[k];
  }

  if (spec.distal == DistalMode::joint) {
    const auto& b = st.distal.b;
    for (const auto& dr : ds.distal) {
      const auto& dd = ds.design.dyad(dr.dyad);
      int rev = ds.design.reverse_dyad(dr.dyad);
      const double ea = effective_alpha(st, ds, spec, dd.actor);
      const double ep = effective_alpha(st, ds, spec, dd.partner);
      const double ba = effective_beta(st, ds, spec, dd.actor);
      const double bp = effective_beta(st, ds, spec, dd.partner);
      const double gap = effective_gamma(st, ds, spec, dr.dyad);
      const double gpa = rev >= 0 ? effective_gamma(st, ds, spec, rev) : 0.0;
      const double eta = distal_linear_predictor(st.distal, ea, ep, ba, bp,
                                                 gap, gpa);
      const double resid = dr.outcome - inv_logit(eta);
      g.b[0] += resid;
      g.b[1] += resid * ea;
      g.b[2] += resid * ep;
      g.b[3] += resid * ba;
      g.b[4] += resid * bp;
      g.b[5] += resid * gap;
      g.b[6] += resid * gpa;
      g.b[7] += resid * ea * ep;
      g.b[8] += resid * ba * bp;
      g.b[9] += resid * gap * gpa;
      ga[dd.actor] += resid * (b[1] + b[7] * ep);
      ga[dd.partner] += resid * (b[2] + b[7] * ea);
      gb[dd.actor] += resid * (b[3] + b[8] * bp);
      gb[dd.partner] += resid * (b[4] + b[8] * ba);
      gg[dr.dyad] += resid * (b[5] + b[9] * gpa);
      if (rev >= 0) gg[rev] += resid * (b[6] + b[9] * gap);
    }
  }

  // Chain rule from effective latents into centered latents and the
  // mean-structure parameters.
  for (std::size_t i = 0; i < ga.size(); ++i) {
    g.lat.alpha[i] += ga[i];
    g.lat.beta[i] += gb[i];
    if (spec.gender_mean &&
        ds.design.individual(static_cast<int>(i)).gender == 1)
      g.hyper.mu_male += ga[i];
    if (spec.use_covariates) {
      for (std::size_t k = 0; k < st.c_alpha.size(); ++k)
        g.c_alpha[k] += ds.covariates.x_alpha[i][k] * ga[i];
      for (std::size_t k = 0; k < st.c_beta.size(); ++k)
        g.c_beta[k] += ds.covariates.x_beta[i][k] * gb[i];
    }
  }
  for (std::size_t d = 0; d < gg.size(); ++d) {
    g.lat.gamma[d] += gg[d];
    if (spec.use_covariates)
      for (std::size_t k = 0; k < st.c_gamma.size(); ++k)
        g.c_gamma[k] += ds.covariates.x_gamma[d][k] * gg[d];
  }

  // Latent-trait priors.
  const auto& h = st.hyper;
  const bool ab_pinned = detail::sigma_pinned_zero(spec.fix_sigma_alpha) &&
                         detail::sigma_pinned_zero(spec.fix_sigma_beta);
  if (!ab_pinned) {
    for (std::size_t i = 0; i < st.lat.alpha.size(); ++i) {
      double dx1, dx2, ds1, ds2, dr;
      detail::bivariate_normal_grad(st.lat.alpha[i], st.lat.beta[i],
                                    h.sigma_alpha, h.sigma_beta,
                                    h.rho_alpha_beta, dx1, dx2, ds1, ds2, dr);
      g.lat.alpha[i] += dx1;
      g.lat.beta[i] += dx2;
      g.hyper.sigma_alpha += ds1;
      g.hyper.sigma_beta += ds2;
      g.hyper.rho_alpha_beta += dr;
    }
  }
  if (!detail::sigma_pinned_zero(spec.fix_sigma_gamma)) {
    for (int d = 0; d < ds.design.n_directed(); ++d) {
      int rev = ds.design.reverse_dyad(d);
      if (rev >= 0) {
        if (ds.design.dyad(d).slot != 1) continue;
        double dx1, dx2, ds1, ds2, dr;
        detail::bivariate_normal_grad(st.lat.gamma[d], st.lat.gamma[rev],
                                      h.sigma_gamma, h.sigma_gamma,
                                      h.rho_gamma, dx1, dx2, ds1, ds2, dr);
        g.lat.gamma[d] += dx1;
        g.lat.gamma[rev] += dx2;
        g.hyper.sigma_gamma += ds1 + ds2;
        g.hyper.rho_gamma += dr;
      } else {
        const double s = h.sigma_gamma;
        g.lat.gamma[d] += -st.lat.gamma[d] / (s * s);
        g.hyper.sigma_gamma +=
            -1.0 / s + st.lat.gamma[d] * st.lat.gamma[d] / (s * s * s);
      }
    }
  }
  if (spec.cluster_intercept) {
    const double s = st.sigma_u;
    for (std::size_t j = 0; j < st.lat.u.size(); ++j) {
      g.lat.u[j] += -st.lat.u[j] / (s * s);
      g.sigma_u += -1.0 / s + st.lat.u[j] * st.lat.u[j] / (s * s * s);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Flat parameter packing

/// Names and accessors for the free scalar unknowns of a model. The
/// "reported" prefix of the layout (everything before `first_latent`)
/// is what summaries and draw exports cover.
struct ParameterLayout {
  std::vector<std::string> names;
  std::size_t first_latent = 0;  // index of the first latent entry

  std::size_t size() const { return names.size(); }
  std::size_t n_reported() const { return first_latent; }
};

namespace detail {

struct LayoutBuilder {
  ParameterLayout layout;
  void add(const std::string& n) { layout.names.push_back(n); }
};

}  // namespace detail

inline ParameterLayout make_layout(const Dataset& ds, const ModelSpec& spec,
                                   bool include_latents = true) {
  detail::LayoutBuilder b;
  if (!spec.fix_sigma_alpha) b.add("sigma_alpha");
  if (!spec.fix_sigma_beta) b.add("sigma_beta");
  if (!spec.fix_sigma_gamma) b.add("sigma_gamma");
  if (!spec.fix_rho_alpha_beta) b.add("rho_alpha_beta");
  if (!spec.fix_rho_gamma) b.add("rho_gamma");
  if (spec.gender_mean && !spec.fix_mu_male) b.add("mu_male");
  if (spec.cluster_intercept) b.add("sigma_u");
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    for (int k = 1; k < ds.items[i].categories; ++k)
      b.add("delta_" + ds.items[i].id + "_" + std::to_string(k));
  if (spec.distal != DistalMode::none) {
    b.add("b0");
    if (spec.exchangeable_distal) {
      b.add("b12");
      b.add("b34");
      b.add("b56");
    } else {
      for (int i = 1; i <= 6; ++i) b.add("b" + std::to_string(i));
    }
    if (spec.distal_interactions)
      for (int i = 7; i <= 9; ++i) b.add("b" + std::to_string(i));
  }
  for (std::size_t k = 0; k < ds.covariates.alpha_names.size(); ++k)
    if (spec.use_covariates) b.add("c_alpha_" + ds.covariates.alpha_names[k]);
  for (std::size_t k = 0; k < ds.covariates.beta_names.size(); ++k)
    if (spec.use_covariates) b.add("c_beta_" + ds.covariates.beta_names[k]);
  for (std::size_t k = 0; k < ds.covariates.gamma_names.size(); ++k)
    if (spec.use_covariates) b.add("c_gamma_" + ds.covariates.gamma_names[k]);
  b.layout.first_latent = b.layout.names.size();
  if (include_latents) {
    for (int i = 0; i < ds.design.n_individuals(); ++i) {
      if (!detail::sigma_pinned_zero(spec.fix_sigma_alpha))
        b.add("alpha_" + ds.design.individual(i).id);
    }
    for (int i = 0; i < ds.design.n_individuals(); ++i) {
      if (!detail::sigma_pinned_zero(spec.fix_sigma_beta))
        b.add("beta_" + ds.design.individual(i).id);
    }
    if (!detail::sigma_pinned_zero(spec.fix_sigma_gamma))
      for (int d = 0; d < ds.design.n_directed(); ++d) {
        const auto& dd = ds.design.dyad(d);
        b.add("gamma_" + ds.design.individual(dd.actor).id + ">" +
              ds.design.individual(dd.partner).id);
      }
    if (spec.cluster_intercept)
      for (int j = 0; j < ds.design.n_clusters(); ++j)
        b.add("u_" + std::to_string(j));
  }
  return b.layout;
}

namespace detail {

// Applies fn(name, ref) over the free scalars of a state-like object in
// layout order. Works for both ModelState and ModelGradient since the
// fields mirror each other.
template <typename State, typename Fn>
void for_each_free(State& st, const Dataset& ds, const ModelSpec& spec,
                   bool include_latents, Fn&& fn) {
  if (!spec.fix_sigma_alpha) fn(st.hyper.sigma_alpha);
  if (!spec.fix_sigma_beta) fn(st.hyper.sigma_beta);
  if (!spec.fix_sigma_gamma) fn(st.hyper.sigma_gamma);
  if (!spec.fix_rho_alpha_beta) fn(st.hyper.rho_alpha_beta);
  if (!spec.fix_rho_gamma) fn(st.hyper.rho_gamma);
  if (spec.gender_mean && !spec.fix_mu_male) fn(st.hyper.mu_male);
  if (spec.cluster_intercept) fn(st.sigma_u);
  for (auto& item : st.delta)
    for (auto& d : item) fn(d);
  if (spec.distal != DistalMode::none) {
    fn(st.b[0]);
    if (spec.exchangeable_distal) {
      fn(st.b[1]);
      fn(st.b[3]);
      fn(st.b[5]);
    } else {
      for (int i = 1; i <= 6; ++i) fn(st.b[i]);
    }
    if (spec.distal_interactions)
      for (int i = 7; i <= 9; ++i) fn(st.b[i]);
  }
  if (spec.use_covariates) {
    for (auto& c : st.c_alpha) fn(c);
    for (auto& c : st.c_beta) fn(c);
    for (auto& c : st.c_gamma) fn(c);
  }
  if (include_latents) {
    if (!sigma_pinned_zero(spec.fix_sigma_alpha))
      for (auto& a : st.lat.alpha) fn(a);
    if (!sigma_pinned_zero(spec.fix_sigma_beta))
      for (auto& v : st.lat.beta) fn(v);
    if (!sigma_pinned_zero(spec.fix_sigma_gamma))
      for (auto& v : st.lat.gamma) fn(v);
    if (spec.cluster_intercept)
      for (auto& v : st.lat.u) fn(v);
  }
  (void)ds;
}

// ModelState stores b inside DistalCoefficients; adapt field access.
template <typename Fn>
void for_each_free_state(ModelState& st, const Dataset& ds,
                         const ModelSpec& spec, bool include_latents,
                         Fn&& fn) {
  struct View {
    Hyperparameters& hyper;
    std::vector<std::vector<double>>& delta;
    double* b;
    std::vector<double>&c_alpha, &c_beta, &c_gamma;
    double& sigma_u;
    LatentState& lat;
  } view{st.hyper, st.delta, st.distal.b, st.c_alpha, st.c_beta,
         st.c_gamma, st.sigma_u, st.lat};
  for_each_free(view, ds, spec, include_latents, fn);
}

}  // namespace detail

inline std::vector<double> pack_state(const ModelState& st, const Dataset& ds,
                                      const ModelSpec& spec,
                                      bool include_latents = true) {
  std::vector<double> out;
  detail::for_each_free_state(const_cast<ModelState&>(st), ds, spec,
                              include_latents,
                              [&](double& v) { out.push_back(v); });
  return out;
}

inline void unpack_state(ModelState& st, const Dataset& ds,
                         const ModelSpec& spec, const std::vector<double>& v,
                         bool include_latents = true) {
  std::size_t i = 0;
  detail::for_each_free_state(st, ds, spec, include_latents, [&](double& ref) {
    ref = v.at(i++);
  });
  require(i == v.size(), "packed vector length mismatch");
  st.distal.enforce_constraints();
}

/// Packs a gradient, summing the partials of coefficients tied by the
/// exchangeability constraint.
inline std::vector<double> pack_grad(const ModelGradient& g, const Dataset& ds,
                                     const ModelSpec& spec,
                                     bool include_latents = true) {
  ModelGradient tied = g;
  if (spec.exchangeable_distal) {
    tied.b[1] += tied.b[2];
    tied.b[3] += tied.b[4];
    tied.b[5] += tied.b[6];
  }
  std::vector<double> out;
  detail::for_each_free(tied, ds, spec, include_latents,
                        [&](double& v) { out.push_back(v); });
  return out;
}

}  // namespace dirt
