#pragma once

// Generative model: latent trait draws, ordinal responses from the
// partial credit model, and binary distal outcomes. All randomness flows
// through an explicitly seeded Rng; one substream per replication.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dirt/core.hpp"
#include "dirt/csv.hpp"
#include "dirt/dataset.hpp"
#include "dirt/design.hpp"
#include "dirt/pcm.hpp"
#include "dirt/rng.hpp"

namespace dirt {

struct SimulationConfig {
  DyadDesign design;
  ItemBank item_bank;
  Hyperparameters hyper;
  std::optional<DistalCoefficients> distal;
  std::optional<CovariateSpec> covariates;
  std::optional<double> cluster_sd;
  std::uint64_t seed = 0;

  void validate() const {
    hyper.validate();
    item_bank.validate();
    require(design.n_directed() > 0, "design has no dyads");
    if (covariates)
      covariates->validate(design.n_individuals(), design.n_directed());
    if (cluster_sd) require(*cluster_sd >= 0, "cluster_sd must be >= 0");
  }
};

/// Draws n iid (alpha, beta) pairs. With gender labels supplied the alpha
/// mean is m_a * mu_male, otherwise both means are 0.
inline std::vector<std::pair<double, double>> draw_individual_traits(
    const Hyperparameters& h, int n, Rng& rng,
    const std::vector<int>* genders = nullptr) {
  require(n >= 1, "need n >= 1 individuals");
  h.validate();
  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double mean_alpha =
        (genders && (*genders)[i] == 1) ? h.mu_male : 0.0;
    out.push_back(rng.bivariate_normal(mean_alpha, 0.0, h.sigma_alpha,
                                       h.sigma_beta, h.rho_alpha_beta));
  }
  return out;
}

/// Draws (gamma_12, gamma_21) for each of n_pairs undirected pairs; equal
/// marginal variances, within-pair correlation rho_gamma.
inline std::vector<std::pair<double, double>> draw_dyad_traits(
    const Hyperparameters& h, int n_pairs, Rng& rng) {
  h.validate();
  std::vector<std::pair<double, double>> out;
  out.reserve(n_pairs);
  for (int i = 0; i < n_pairs; ++i)
    out.push_back(rng.bivariate_normal(0.0, 0.0, h.sigma_gamma, h.sigma_gamma,
                                       h.rho_gamma));
  return out;
}

/// Draws the full latent state for a design: traits carry their means
/// (gender shift and covariate terms included).
inline LatentState draw_latent_state(const SimulationConfig& cfg, Rng& rng) {
  const auto& d = cfg.design;
  LatentState lat;
  std::vector<int> genders(d.n_individuals());
  for (int i = 0; i < d.n_individuals(); ++i)
    genders[i] = d.individual(i).gender;

  auto ab = draw_individual_traits(cfg.hyper, d.n_individuals(), rng,
                                   d.has_gender_labels() ? &genders : nullptr);
  lat.alpha.resize(d.n_individuals());
  lat.beta.resize(d.n_individuals());
  for (int i = 0; i < d.n_individuals(); ++i) {
    lat.alpha[i] = ab[i].first;
    lat.beta[i] = ab[i].second;
    if (cfg.covariates) {
      const auto& cv = *cfg.covariates;
      for (std::size_t k = 0; k < cv.c_alpha.size(); ++k)
        lat.alpha[i] += cv.x_alpha[i][k] * cv.c_alpha[k];
      for (std::size_t k = 0; k < cv.c_beta.size(); ++k)
        lat.beta[i] += cv.x_beta[i][k] * cv.c_beta[k];
    }
  }

  auto gg = draw_dyad_traits(cfg.hyper, d.n_undirected(), rng);
  lat.gamma.assign(d.n_directed(), 0.0);
  for (int k = 0; k < d.n_directed(); ++k) {
    const auto& dd = d.dyad(k);
    lat.gamma[k] = dd.slot == 1 ? gg[dd.undirected].first
                                : gg[dd.undirected].second;
    if (cfg.covariates) {
      const auto& cv = *cfg.covariates;
      for (std::size_t c = 0; c < cv.c_gamma.size(); ++c)
        lat.gamma[k] += cv.x_gamma[k][c] * cv.c_gamma[c];
    }
  }

  if (cfg.cluster_sd) {
    int nc = d.n_clusters();
    lat.u.resize(nc);
    for (int j = 0; j < nc; ++j) lat.u[j] = rng.normal(0.0, *cfg.cluster_sd);
  }
  return lat;
}

/// Composite theta for a directed dyad given full latents.
inline double simulated_theta(const SimulationConfig& cfg,
                              const LatentState& lat, int dyad) {
  const auto& dd = cfg.design.dyad(dyad);
  double th = lat.alpha[dd.actor] + lat.beta[dd.partner] + lat.gamma[dyad];
  if (!lat.u.empty()) {
    int cl = cfg.design.individual(dd.actor).cluster;
    if (cl >= 0) th += lat.u[cl];
  }
  return th;
}

/// One categorical draw per (directed dyad, item).
inline std::vector<ResponseRecord> simulate_responses(
    const SimulationConfig& cfg, const LatentState& lat, Rng& rng) {
  require(lat.alpha.size() == static_cast<std::size_t>(cfg.design.n_individuals()) &&
              lat.gamma.size() == static_cast<std::size_t>(cfg.design.n_directed()),
          "latent state does not cover the design");
  std::vector<ResponseRecord> out;
  out.reserve(cfg.design.n_directed() * cfg.item_bank.size());
  for (int d = 0; d < cfg.design.n_directed(); ++d) {
    double th = simulated_theta(cfg, lat, d);
    for (std::size_t i = 0; i < cfg.item_bank.size(); ++i) {
      auto p = pcm_category_probs(th, cfg.item_bank[i].steps);
      out.push_back({d, static_cast<int>(i), rng.categorical(p)});
    }
  }
  return out;
}

/// One Bernoulli draw per directed dyad from the distal regression.
inline std::vector<DistalRecord> simulate_distal(const SimulationConfig& cfg,
                                                 const LatentState& lat,
                                                 Rng& rng) {
  require(cfg.distal.has_value(), "no distal coefficients configured");
  std::vector<DistalRecord> out;
  out.reserve(cfg.design.n_directed());
  for (int d = 0; d < cfg.design.n_directed(); ++d) {
    const auto& dd = cfg.design.dyad(d);
    int rev = cfg.design.reverse_dyad(d);
    double p = distal_success_prob(
        *cfg.distal, lat.alpha[dd.actor], lat.alpha[dd.partner],
        lat.beta[dd.actor], lat.beta[dd.partner], lat.gamma[d],
        rev >= 0 ? lat.gamma[rev] : 0.0);
    out.push_back({d, rng.bernoulli(p)});
  }
  return out;
}

struct SimulationResult {
  LatentState latents;
  std::vector<ResponseRecord> responses;
  std::vector<DistalRecord> distal;
};

inline SimulationResult simulate(const SimulationConfig& cfg,
                                 std::uint64_t stream = 0) {
  cfg.validate();
  Rng rng(cfg.seed, stream);
  SimulationResult res;
  res.latents = draw_latent_state(cfg, rng);
  res.responses = simulate_responses(cfg, res.latents, rng);
  if (cfg.distal) res.distal = simulate_distal(cfg, res.latents, rng);
  return res;
}

// ---------------------------------------------------------------------------
// File emission

inline void write_responses_csv(const DyadDesign& d, const ItemBank& items,
                                const std::vector<ResponseRecord>& rs,
                                const std::string& path) {
  csv::Writer w(path);
  w.row({"actor_id", "partner_id", "item_id", "response"});
  for (const auto& r : rs) {
    const auto& dd = d.dyad(r.dyad);
    w.row({d.individual(dd.actor).id, d.individual(dd.partner).id,
           items[r.item].id, std::to_string(r.category)});
  }
}

inline void write_distal_csv(const DyadDesign& d,
                             const std::vector<DistalRecord>& rs,
                             const std::string& path) {
  csv::Writer w(path);
  w.row({"actor_id", "partner_id", "outcome"});
  for (const auto& r : rs) {
    const auto& dd = d.dyad(r.dyad);
    w.row({d.individual(dd.actor).id, d.individual(dd.partner).id,
           std::to_string(r.outcome)});
  }
}

/// Generating parameters (truth) as a two-column CSV.
inline void write_truth_csv(const SimulationConfig& cfg,
                            const std::string& path) {
  csv::Writer w(path);
  w.row({"parameter", "value"});
  auto put = [&](const std::string& n, double v) {
    w.row({n, csv::format_double(v)});
  };
  put("sigma_alpha", cfg.hyper.sigma_alpha);
  put("sigma_beta", cfg.hyper.sigma_beta);
  put("sigma_gamma", cfg.hyper.sigma_gamma);
  put("rho_alpha_beta", cfg.hyper.rho_alpha_beta);
  put("rho_gamma", cfg.hyper.rho_gamma);
  if (cfg.design.has_gender_labels() && cfg.hyper.mu_male != 0.0)
    put("mu_male", cfg.hyper.mu_male);
  if (cfg.cluster_sd) put("sigma_u", *cfg.cluster_sd);
  for (std::size_t i = 0; i < cfg.item_bank.size(); ++i)
    for (std::size_t k = 0; k < cfg.item_bank[i].steps.size(); ++k)
      put("delta_" + cfg.item_bank[i].id + "_" + std::to_string(k + 1),
          cfg.item_bank[i].steps[k]);
  if (cfg.distal) {
    int nb = cfg.distal->interactions ? 10 : 7;
    for (int i = 0; i < nb; ++i)
      put("b" + std::to_string(i), cfg.distal->b[i]);
  }
}

/// True latent values: one row per individual trait and directed dyad.
inline void write_latents_csv(const DyadDesign& d, const LatentState& lat,
                              const std::string& path) {
  csv::Writer w(path);
  w.row({"id", "role", "value"});
  for (int i = 0; i < d.n_individuals(); ++i) {
    w.row({d.individual(i).id, "alpha", csv::format_double(lat.alpha[i])});
    w.row({d.individual(i).id, "beta", csv::format_double(lat.beta[i])});
  }
  for (int k = 0; k < d.n_directed(); ++k) {
    const auto& dd = d.dyad(k);
    w.row({d.individual(dd.actor).id + ">" + d.individual(dd.partner).id,
           "gamma", csv::format_double(lat.gamma[k])});
  }
  for (std::size_t j = 0; j < lat.u.size(); ++j)
    w.row({"cluster" + std::to_string(j), "u", csv::format_double(lat.u[j])});
}

}  // namespace dirt
