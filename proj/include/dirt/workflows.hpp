#pragma once

// End-to-end estimation workflows:
//  - joint fit: measurement model and distal regression sampled together;
//  - sequential fit: measurement-only fit first, then the distal logistic
//    regression is re-estimated on M retained latent draws (maximum
//    likelihood per draw) and pooled with Rubin's rules.

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dirt/mcmc.hpp"

namespace dirt {

// ---------------------------------------------------------------------------
// Small dense linear algebra (IRLS-sized problems)

namespace detail {

/// Cholesky solve of the SPD system A x = b; returns false when A is not
/// positive definite.
inline bool cholesky_solve(std::vector<std::vector<double>> a,
                           std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = a.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 1e-12)) return false;
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  // forward then back substitution
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i][k] * b[k];
    b[i] /= a[i][i];
  }
  x.assign(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a[k][ii] * x[k];
    x[ii] = s / a[ii][ii];
  }
  return true;
}

inline bool spd_inverse(const std::vector<std::vector<double>>& a,
                        std::vector<std::vector<double>>& inv) {
  const std::size_t n = a.size();
  inv.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> e(n, 0.0), x;
    e[c] = 1.0;
    if (!cholesky_solve(a, e, x)) return false;
    for (std::size_t r = 0; r < n; ++r) inv[r][c] = x[r];
  }
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IRLS logistic regression

struct IrlsResult {
  bool converged = false;
  std::string failure;  // reason when not converged
  std::vector<double> beta;
  std::vector<std::vector<double>> covariance;
};

/// Maximum-likelihood logistic regression via iteratively reweighted
/// least squares with step-halving. Quasi-complete separation is flagged
/// as a failure (coefficients diverge).
inline IrlsResult irls_logistic(const std::vector<std::vector<double>>& x,
                                const std::vector<int>& y, int max_iter = 50,
                                double tol = 1e-8) {
  require(!x.empty() && x.size() == y.size(), "bad logistic regression input");
  const std::size_t n = x.size(), p = x[0].size();
  require(n > p, "more coefficients than observations");
  IrlsResult res;
  res.beta.assign(p, 0.0);

  auto loglik = [&](const std::vector<double>& beta) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += x[i][j] * beta[j];
      ll += y[i] * eta - log1p_exp(eta);
    }
    return ll;
  };

  double ll = loglik(res.beta);
  std::vector<std::vector<double>> xtwx(p, std::vector<double>(p));
  std::vector<double> score(p), step;
  for (int it = 0; it < max_iter; ++it) {
    for (auto& row : xtwx) std::fill(row.begin(), row.end(), 0.0);
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += x[i][j] * res.beta[j];
      double mu = inv_logit(eta);
      double w = mu * (1.0 - mu);
      for (std::size_t j = 0; j < p; ++j) {
        score[j] += (y[i] - mu) * x[i][j];
        for (std::size_t k = j; k < p; ++k)
          xtwx[j][k] += w * x[i][j] * x[i][k];
      }
    }
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < j; ++k) xtwx[j][k] = xtwx[k][j];

    if (!detail::cholesky_solve(xtwx, score, step)) {
      res.failure = "information matrix not positive definite";
      return res;
    }
    // step-halving keeps the log-likelihood non-decreasing
    double scale = 1.0;
    std::vector<double> cand(p);
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 30; ++h) {
      for (std::size_t j = 0; j < p; ++j)
        cand[j] = res.beta[j] + scale * step[j];
      ll_new = loglik(cand);
      if (ll_new >= ll - 1e-12) break;
      scale *= 0.5;
    }
    if (ll_new < ll - 1e-8) {
      res.failure = "step-halving failed to improve the likelihood";
      return res;
    }
    double max_step = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      max_step = std::max(max_step, std::abs(scale * step[j]));
    res.beta = cand;
    ll = ll_new;
    for (double bj : res.beta) {
      if (!std::isfinite(bj) || std::abs(bj) > 30.0) {
        res.failure = "coefficients diverged (separation)";
        return res;
      }
    }
    if (max_step < tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) {
    res.failure = "did not converge";
    return res;
  }
  if (!detail::spd_inverse(xtwx, res.covariance)) {
    res.converged = false;
    res.failure = "singular information matrix at the optimum";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Distal design matrix

/// Coefficient names of the distal regression under a spec: intercept,
/// main effects (possibly collapsed by exchangeability) and optional
/// product terms.
inline std::vector<std::string> distal_coefficient_names(
    const ModelSpec& spec) {
  std::vector<std::string> names = {"b0"};
  if (spec.exchangeable_distal) {
    names.insert(names.end(), {"b12", "b34", "b56"});
  } else {
    for (int i = 1; i <= 6; ++i) names.push_back("b" + std::to_string(i));
  }
  if (spec.distal_interactions)
    for (int i = 7; i <= 9; ++i) names.push_back("b" + std::to_string(i));
  return names;
}

/// One design-matrix row for a distal record given effective latents.
inline std::vector<double> distal_design_row(const ModelSpec& spec, double aa,
                                             double ap, double ba, double bp,
                                             double gap, double gpa) {
  std::vector<double> row = {1.0};
  if (spec.exchangeable_distal) {
    row.push_back(aa + ap);
    row.push_back(ba + bp);
    row.push_back(gap + gpa);
  } else {
    row.insert(row.end(), {aa, ap, ba, bp, gap, gpa});
  }
  if (spec.distal_interactions) {
    row.push_back(aa * ap);
    row.push_back(ba * bp);
    row.push_back(gap * gpa);
  }
  return row;
}

// ---------------------------------------------------------------------------
// Workflows

struct JointFitResult {
  PosteriorDraws draws;
  PosteriorSummary summary;
};

/// Measurement model and distal regression estimated in one posterior.
inline JointFitResult fit_joint(const Dataset& ds, ModelSpec spec,
                                const McmcConfig& cfg) {
  require(spec.distal == DistalMode::joint,
          "fit_joint requires distal mode 'joint'");
  JointFitResult out;
  out.draws = fit(ds, spec, cfg);
  out.summary = summarize(out.draws);
  return out;
}

struct PooledCoefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double df = 0.0;  // infinity when the between-imputation variance is 0
  double q2_5 = 0.0;
  double q97_5 = 0.0;
  double within = 0.0;   // mean sampling variance
  double between = 0.0;  // variance of the per-draw estimates
};

struct SequentialFitResult {
  PosteriorDraws measurement;
  PosteriorSummary measurement_summary;
  std::vector<PooledCoefficient> coefficients;
  int m_requested = 0;
  int m_used = 0;
  std::vector<std::string> warnings;

  const PooledCoefficient& operator[](const std::string& name) const {
    for (const auto& c : coefficients)
      if (c.name == name) return c;
    throw std::invalid_argument("no such coefficient: " + name);
  }
};

struct MiConfig {
  int m_draws = 20;
  int irls_max_iter = 50;
  double irls_tol = 1e-8;
};

/// Rubin pooling of per-imputation estimates q_m with sampling variances
/// u_m: T = W + (1 + 1/M) B, df = (M-1)(1 + W/((1+1/M)B))^2.
inline PooledCoefficient pool_rubin(const std::string& name,
                                    const std::vector<double>& q,
                                    const std::vector<double>& u) {
  require(q.size() == u.size() && q.size() >= 2, "pooling needs >= 2 draws");
  const double m = static_cast<double>(q.size());
  PooledCoefficient c;
  c.name = name;
  c.estimate = std::accumulate(q.begin(), q.end(), 0.0) / m;
  c.within = std::accumulate(u.begin(), u.end(), 0.0) / m;
  double b = 0.0;
  for (double v : q) b += (v - c.estimate) * (v - c.estimate);
  c.between = b / (m - 1.0);
  const double total = c.within + (1.0 + 1.0 / m) * c.between;
  c.se = std::sqrt(total);
  double t975;
  if (c.between <= 0.0) {
    c.df = std::numeric_limits<double>::infinity();
    t975 = boost::math::quantile(boost::math::normal_distribution<>(), 0.975);
  } else {
    const double r = c.within / ((1.0 + 1.0 / m) * c.between);
    c.df = (m - 1.0) * (1.0 + r) * (1.0 + r);
    t975 = boost::math::quantile(
        boost::math::students_t_distribution<>(c.df), 0.975);
  }
  c.q2_5 = c.estimate - t975 * c.se;
  c.q97_5 = c.estimate + t975 * c.se;
  return c;
}

/// Two-stage fit: measurement-only posterior with retained latent draws,
/// then a per-draw ML logistic regression of the outcomes on the drawn
/// latents, pooled across M equally spaced draws. Draws where the
/// regression fails (e.g. separation) are dropped with a warning; at
/// least half must survive.
inline SequentialFitResult fit_sequential_mi(const Dataset& ds, ModelSpec spec,
                                             const McmcConfig& cfg,
                                             const MiConfig& mi = {}) {
  require(spec.distal == DistalMode::sequential,
          "fit_sequential_mi requires distal mode 'sequential'");
  require(mi.m_draws >= 2, "sequential pooling needs at least 2 draws");
  require(!ds.distal.empty(), "no distal outcomes in the dataset");

  ModelSpec meas = spec;
  meas.distal = DistalMode::none;
  meas.retain_latent_draws = true;

  SequentialFitResult out;
  out.m_requested = mi.m_draws;
  out.measurement = fit(ds, meas, cfg);
  out.measurement_summary = summarize(out.measurement);

  const auto& retained = out.measurement.latent_draws;
  require(static_cast<int>(retained.size()) >= mi.m_draws,
          "only " + std::to_string(retained.size()) +
              " latent draws retained; need " + std::to_string(mi.m_draws) +
              " (increase iterations or lower latent thinning)");

  // equally spaced indices over the retained draws
  std::vector<int> picks;
  for (int i = 0; i < mi.m_draws; ++i)
    picks.push_back(static_cast<int>(
        std::llround(static_cast<double>(i) * (retained.size() - 1) /
                     (mi.m_draws - 1))));

  auto names = distal_coefficient_names(spec);
  const std::size_t p = names.size();
  std::vector<std::vector<double>> est(p);  // per-coefficient estimates
  std::vector<std::vector<double>> var(p);  // per-coefficient variances

  std::vector<int> y;
  y.reserve(ds.distal.size());
  for (const auto& dr : ds.distal) y.push_back(dr.outcome);

  for (int pick : picks) {
    const auto& ld = retained[pick];
    std::vector<std::vector<double>> x;
    x.reserve(ds.distal.size());
    for (const auto& dr : ds.distal) {
      const auto& dd = ds.design.dyad(dr.dyad);
      int rev = ds.design.reverse_dyad(dr.dyad);
      x.push_back(distal_design_row(
          spec, ld.alpha[dd.actor], ld.alpha[dd.partner], ld.beta[dd.actor],
          ld.beta[dd.partner], ld.gamma[dr.dyad],
          rev >= 0 ? ld.gamma[rev] : 0.0));
    }
    auto r = irls_logistic(x, y, mi.irls_max_iter, mi.irls_tol);
    if (!r.converged) {
      out.warnings.push_back("draw " + std::to_string(pick) +
                             " dropped: " + r.failure);
      continue;
    }
    for (std::size_t j = 0; j < p; ++j) {
      est[j].push_back(r.beta[j]);
      var[j].push_back(r.covariance[j][j]);
    }
    ++out.m_used;
  }

  if (out.m_used < std::max(2, mi.m_draws / 2))
    throw std::runtime_error(
        "sequential distal regression failed on too many draws (" +
        std::to_string(out.m_used) + "/" + std::to_string(mi.m_draws) +
        " usable)");

  for (std::size_t j = 0; j < p; ++j)
    out.coefficients.push_back(pool_rubin(names[j], est[j], var[j]));
  return out;
}

inline void write_pooled_csv(const std::vector<PooledCoefficient>& cs,
                             const std::string& path) {
  csv::Writer w(path);
  w.row({"parameter", "estimate", "se", "df", "q2.5", "q97.5", "within",
         "between"});
  for (const auto& c : cs)
    w.row({c.name, csv::format_double(c.estimate), csv::format_double(c.se),
           csv::format_double(c.df), csv::format_double(c.q2_5),
           csv::format_double(c.q97_5), csv::format_double(c.within),
           csv::format_double(c.between)});
}

}  // namespace dirt
