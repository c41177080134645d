#pragma once

// Model specification: which extensions are active, which parameters are
// fixed, and the identification guards on the mean structure.

#include <optional>
#include <string>

#include "dirt/config.hpp"
#include "dirt/core.hpp"
#include "dirt/dataset.hpp"

namespace dirt {

enum class DistalMode { none, joint, sequential };

struct ModelSpec {
  DistalMode distal = DistalMode::none;
  bool distal_interactions = true;
  bool exchangeable_distal = false;
  bool gender_mean = false;
  bool cluster_intercept = false;
  bool use_covariates = false;

  // Optional fixed hyperparameters (skipped by the sampler). A sigma
  // fixed at 0 pins the corresponding latents to their means.
  std::optional<double> fix_sigma_alpha, fix_sigma_beta, fix_sigma_gamma;
  std::optional<double> fix_rho_alpha_beta, fix_rho_gamma;
  std::optional<double> fix_mu_male;

  // Optional finite upper bound on the otherwise improper uniform
  // variance priors; off by default.
  std::optional<double> sigma_upper_bound;

  bool retain_latent_draws = false;  // full retention (multiple imputation)
  int latent_thin = 10;              // thinning for retained latent draws

  int n_distal_coefficients() const { return distal_interactions ? 10 : 7; }

  static ModelSpec from_config(const Config& c) {
    ModelSpec s;
    auto mode = c.get("model.distal", "none");
    if (mode == "none")
      s.distal = DistalMode::none;
    else if (mode == "joint")
      s.distal = DistalMode::joint;
    else if (mode == "sequential")
      s.distal = DistalMode::sequential;
    else
      throw std::invalid_argument("model.distal must be none|joint|sequential");
    s.distal_interactions = c.get_bool("model.distal_interactions", true);
    s.exchangeable_distal = c.get_bool("model.exchangeable_distal", false);
    s.gender_mean = c.get_bool("model.gender_mean", false);
    s.cluster_intercept = c.get_bool("model.cluster_intercept", false);
    s.use_covariates = c.get_bool("model.covariates", false);
    s.retain_latent_draws = c.get_bool("model.retain_latent_draws", false);
    s.latent_thin = static_cast<int>(c.get_long("model.latent_thin", 10));
    auto fix = [&](const char* key) -> std::optional<double> {
      if (!c.has(key)) return std::nullopt;
      return c.get_double(key, 0.0);
    };
    s.fix_sigma_alpha = fix("model.fix_sigma_alpha");
    s.fix_sigma_beta = fix("model.fix_sigma_beta");
    s.fix_sigma_gamma = fix("model.fix_sigma_gamma");
    s.fix_rho_alpha_beta = fix("model.fix_rho_alpha_beta");
    s.fix_rho_gamma = fix("model.fix_rho_gamma");
    s.fix_mu_male = fix("model.fix_mu_male");
    if (c.has("model.sigma_upper_bound"))
      s.sigma_upper_bound = c.get_double("model.sigma_upper_bound", 0.0);
    return s;
  }
};

struct SpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Checks a model spec against a dataset: required labels present and the
/// mean-structure coefficients identified.
inline void validate_model_spec(const ModelSpec& spec, const Dataset& ds) {
  if (spec.gender_mean && !ds.design.has_gender_labels())
    throw SpecError("gender_mean requires gender labels in the design");
  if (spec.cluster_intercept) {
    if (!ds.design.has_cluster_labels())
      throw SpecError("cluster_intercept requires cluster labels");
    // The collapsed cluster intercept applies to within-cluster dyads.
    for (int d = 0; d < ds.design.n_directed(); ++d) {
      const auto& dd = ds.design.dyad(d);
      if (ds.design.individual(dd.actor).cluster !=
          ds.design.individual(dd.partner).cluster)
        throw SpecError(
            "cluster_intercept requires both members of every dyad to share "
            "a cluster");
    }
  }
  if (spec.distal != DistalMode::none && ds.distal.empty())
    throw SpecError("distal model requested but no distal outcomes provided");

  const auto& cov = ds.covariates;
  if (spec.use_covariates) {
    cov.validate(ds.design.n_individuals(), ds.design.n_directed());

    // Gender in both the alpha and beta mean models is unidentified when
    // every dyad pairs the two genders (single-gender-pairing block
    // design): the two columns are then perfectly collinear in the mean
    // of theta.
    auto contains = [](const std::vector<std::string>& v,
                       const std::string& s) {
      for (const auto& x : v)
        if (x == s) return true;
      return false;
    };
    if (contains(cov.alpha_names, "gender") &&
        contains(cov.beta_names, "gender")) {
      bool all_cross_gender = true;
      for (int d = 0; d < ds.design.n_directed(); ++d) {
        const auto& dd = ds.design.dyad(d);
        int ga = ds.design.individual(dd.actor).gender;
        int gp = ds.design.individual(dd.partner).gender;
        if (ga < 0 || gp < 0 || ga == gp) {
          all_cross_gender = false;
          break;
        }
      }
      if (all_cross_gender && ds.design.n_directed() > 0)
        throw SpecError(
            "columns alpha:gender and beta:gender are collinear under a "
            "cross-gender-only pairing design");
    }

    // A dyadic difference column z_a - z_p together with z in both the
    // alpha and beta models is unidentified.
    for (std::size_t k = 0; k < cov.gamma_names.size(); ++k) {
      if (k >= cov.gamma_difference_of.size()) break;
      const auto& base = cov.gamma_difference_of[k];
      if (base.empty()) continue;
      if (contains(cov.alpha_names, base) && contains(cov.beta_names, base))
        throw SpecError("columns gamma:" + cov.gamma_names[k] + ", alpha:" +
                        base + " and beta:" + base +
                        " are jointly unidentified");
    }
  }
  if (spec.gender_mean && spec.use_covariates) {
    for (const auto& n : cov.alpha_names)
      if (n == "gender")
        throw SpecError(
            "gender_mean and an alpha gender covariate are redundant");
  }
}

}  // namespace dirt
