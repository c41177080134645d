#pragma once

// Partial credit model evaluation: composite trait, category
// probabilities via max-subtracted softmax of cumulative sums, and the
// response log-likelihood with derivative helpers.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dirt/core.hpp"

namespace dirt {

constexpr int kMaxCategories = 32;

/// theta_{a,p} = alpha_a + beta_p + gamma_{a,p} + mean structure.
inline double composite_theta(double alpha_a, double beta_p, double gamma_ap,
                              double mean_shift = 0.0) {
  require_finite(alpha_a, "alpha");
  require_finite(beta_p, "beta");
  require_finite(gamma_ap, "gamma");
  require_finite(mean_shift, "mean_shift");
  return alpha_a + beta_p + gamma_ap + mean_shift;
}

namespace detail {

// Fills out[0..m-1] with category probabilities for m = delta.size()+1.
// Cumulative sums of (0, theta - delta_1, ..., theta - delta_{m-1}) are
// softmaxed with the max subtracted so large |theta| cannot overflow.
inline void pcm_probs_unchecked(double theta, std::span<const double> delta,
                                double* out) {
  const int m = static_cast<int>(delta.size()) + 1;
  double cum = 0.0;
  double max_cum = 0.0;
  out[0] = 0.0;
  for (int j = 1; j < m; ++j) {
    cum += theta - delta[j - 1];
    out[j] = cum;
    max_cum = std::max(max_cum, cum);
  }
  double z = 0.0;
  for (int j = 0; j < m; ++j) {
    out[j] = std::exp(out[j] - max_cum);
    z += out[j];
  }
  for (int j = 0; j < m; ++j) out[j] /= z;
}

}  // namespace detail

/// Category probabilities P(Y = j | theta, delta), j = 0..m-1.
inline std::vector<double> pcm_category_probs(double theta,
                                              std::span<const double> delta) {
  require(!delta.empty(), "partial credit item needs at least 2 categories");
  require_finite(theta, "theta");
  for (double d : delta) require_finite(d, "delta");
  std::vector<double> p(delta.size() + 1);
  detail::pcm_probs_unchecked(theta, delta, p.data());
  return p;
}

/// log P(Y = response | theta, delta). Computed in log space.
inline double pcm_log_likelihood(int response, double theta,
                                 std::span<const double> delta) {
  const int m = static_cast<int>(delta.size()) + 1;
  require(m >= 2, "partial credit item needs at least 2 categories");
  require(response >= 0 && response < m, "response category out of range");
  require_finite(theta, "theta");

  double buf[kMaxCategories];
  std::vector<double> big;
  double* cum = buf;
  if (m > kMaxCategories) {
    big.resize(m);
    cum = big.data();
  }
  double c = 0.0;
  double max_cum = 0.0;
  cum[0] = 0.0;
  for (int j = 1; j < m; ++j) {
    c += theta - delta[j - 1];
    cum[j] = c;
    max_cum = std::max(max_cum, c);
  }
  double z = 0.0;
  for (int j = 0; j < m; ++j) z += std::exp(cum[j] - max_cum);
  return cum[response] - max_cum - std::log(z);
}

/// log-likelihood plus its derivatives: d/dtheta and d/ddelta_k.
/// dtheta = j - E[J]; ddelta[k-1] = P(J >= k) - 1[k <= j].
inline double pcm_log_likelihood_grad(int response, double theta,
                                      std::span<const double> delta,
                                      double* dtheta, double* ddelta) {
  const int m = static_cast<int>(delta.size()) + 1;
  require(response >= 0 && response < m, "response category out of range");
  double buf[kMaxCategories];
  std::vector<double> big;
  double* p = buf;
  if (m > kMaxCategories) {
    big.resize(m);
    p = big.data();
  }
  detail::pcm_probs_unchecked(theta, delta, p);
  double mean_j = 0.0;
  for (int j = 1; j < m; ++j) mean_j += j * p[j];
  *dtheta = response - mean_j;
  // tail[k] = P(J >= k)
  double tail = 0.0;
  for (int k = m - 1; k >= 1; --k) {
    tail += p[k];
    ddelta[k - 1] = tail - (k <= response ? 1.0 : 0.0);
  }
  return std::log(std::max(p[response], 1e-300));
}

/// Inverse logit, stable for large |x|.
inline double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Linear predictor of the distal logistic regression.
inline double distal_linear_predictor(const DistalCoefficients& cf,
                                      double alpha_a, double alpha_p,
                                      double beta_a, double beta_p,
                                      double gamma_ap, double gamma_pa) {
  return cf.b[0] + cf.b[1] * alpha_a + cf.b[2] * alpha_p + cf.b[3] * beta_a +
         cf.b[4] * beta_p + cf.b[5] * gamma_ap + cf.b[6] * gamma_pa +
         cf.b[7] * alpha_a * alpha_p + cf.b[8] * beta_a * beta_p +
         cf.b[9] * gamma_ap * gamma_pa;
}

/// P(d = 1 | traits) under the distal logistic regression.
inline double distal_success_prob(const DistalCoefficients& cf, double alpha_a,
                                  double alpha_p, double beta_a, double beta_p,
                                  double gamma_ap, double gamma_pa) {
  require_finite(alpha_a, "alpha_a");
  require_finite(alpha_p, "alpha_p");
  require_finite(beta_a, "beta_a");
  require_finite(beta_p, "beta_p");
  require_finite(gamma_ap, "gamma_ap");
  require_finite(gamma_pa, "gamma_pa");
  return inv_logit(distal_linear_predictor(cf, alpha_a, alpha_p, beta_a,
                                           beta_p, gamma_ap, gamma_pa));
}

}  // namespace dirt
