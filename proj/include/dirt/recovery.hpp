#pragma once

// Parameter-recovery harness: simulate from known truths, refit, and
// report either interval coverage (single calibration run) or
// frequentist bias across replications.
//
// Replication summaries use:
//   bias_hat   = mean(estimate_r) - truth
//   mc_error   = sd(estimate_r) / sqrt(R)          (MC error of the mean)
//   rel SE bias = mean(posterior SD_r) / sd(estimate_r) - 1
// with the delta-method MC error of the SE ratio approximated by
//   ratio * sqrt( var(sd_r)/ (R * mean(sd_r)^2) + 1/(2 (R - 1)) ).

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dirt/mcmc.hpp"
#include "dirt/simulate.hpp"

namespace dirt {

/// Truth values keyed by reported-parameter name, matching the sampler's
/// naming scheme.
inline std::map<std::string, double> truth_map(const SimulationConfig& cfg,
                                               const ModelSpec& spec) {
  std::map<std::string, double> t;
  if (!spec.fix_sigma_alpha) t["sigma_alpha"] = cfg.hyper.sigma_alpha;
  if (!spec.fix_sigma_beta) t["sigma_beta"] = cfg.hyper.sigma_beta;
  if (!spec.fix_sigma_gamma) t["sigma_gamma"] = cfg.hyper.sigma_gamma;
  if (!spec.fix_rho_alpha_beta) t["rho_alpha_beta"] = cfg.hyper.rho_alpha_beta;
  if (!spec.fix_rho_gamma) t["rho_gamma"] = cfg.hyper.rho_gamma;
  if (spec.gender_mean && !spec.fix_mu_male) t["mu_male"] = cfg.hyper.mu_male;
  if (spec.cluster_intercept && cfg.cluster_sd) t["sigma_u"] = *cfg.cluster_sd;
  for (std::size_t i = 0; i < cfg.item_bank.size(); ++i)
    for (std::size_t k = 0; k < cfg.item_bank[i].steps.size(); ++k)
      t["delta_" + cfg.item_bank[i].id + "_" + std::to_string(k + 1)] =
          cfg.item_bank[i].steps[k];
  if (spec.distal != DistalMode::none && cfg.distal) {
    const auto& b = cfg.distal->b;
    t["b0"] = b[0];
    if (spec.exchangeable_distal) {
      t["b12"] = b[1];
      t["b34"] = b[3];
      t["b56"] = b[5];
    } else {
      for (int i = 1; i <= 6; ++i) t["b" + std::to_string(i)] = b[i];
    }
    if (spec.distal_interactions)
      for (int i = 7; i <= 9; ++i) t["b" + std::to_string(i)] = b[i];
  }
  return t;
}

/// Builds a Dataset from one simulation of the generative model.
inline Dataset make_dataset(const SimulationConfig& cfg,
                            const SimulationResult& sim) {
  Dataset ds;
  ds.design = cfg.design;
  ds.items = cfg.item_bank;
  ds.responses = sim.responses;
  ds.distal = sim.distal;
  return ds;
}

// ---------------------------------------------------------------------------
// Calibration: one dataset, interval coverage

struct CalibrationRow {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double q2_5 = 0.0;
  double q97_5 = 0.0;
  double rhat = 0.0;
  bool covered = false;
};

struct CalibrationResult {
  std::vector<CalibrationRow> rows;
  double coverage = 0.0;
  double max_rhat = 0.0;
  bool converged = false;  // all R-hat below the threshold

  const CalibrationRow& operator[](const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw std::invalid_argument("no such parameter: " + name);
  }
};

inline CalibrationResult run_calibration(const SimulationConfig& sim_cfg,
                                         const ModelSpec& spec,
                                         const McmcConfig& mcmc_cfg,
                                         std::uint64_t sim_stream = 0) {
  auto sim = simulate(sim_cfg, sim_stream);
  auto ds = make_dataset(sim_cfg, sim);
  auto draws = fit(ds, spec, mcmc_cfg);
  auto summary = summarize(draws);
  auto truths = truth_map(sim_cfg, spec);

  CalibrationResult out;
  int n_cov = 0, n_truth = 0;
  for (const auto& row : summary.rows) {
    auto it = truths.find(row.name);
    if (it == truths.end()) continue;
    CalibrationRow r;
    r.name = row.name;
    r.truth = it->second;
    r.mean = row.mean;
    r.q2_5 = row.q2_5;
    r.q97_5 = row.q97_5;
    r.rhat = row.rhat;
    r.covered = r.truth >= r.q2_5 && r.truth <= r.q97_5;
    out.rows.push_back(r);
    ++n_truth;
    if (r.covered) ++n_cov;
  }
  require(n_truth > 0, "no parameters to calibrate");
  out.coverage = static_cast<double>(n_cov) / n_truth;
  for (double rh : draws.rhat)
    if (std::isfinite(rh)) out.max_rhat = std::max(out.max_rhat, rh);
  out.converged = out.max_rhat < mcmc_cfg.rhat_threshold;
  return out;
}

// ---------------------------------------------------------------------------
// Replications: frequentist bias and SE calibration

/// Point estimate + posterior SD for one parameter from one replication.
struct Estimate {
  double mean = 0.0;
  double sd = 0.0;
};

/// One replication's estimates, keyed by parameter name. Custom
/// estimators (used by the harness self-test) plug in here.
using Estimator =
    std::function<std::map<std::string, Estimate>(const Dataset&, int rep)>;

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double mc_error = 0.0;       // sd(estimates)/sqrt(R)
  double sd_estimates = 0.0;   // empirical SD across replications
  double mean_posterior_sd = 0.0;
  double rel_se_bias = 0.0;    // mean posterior SD / empirical SD - 1
  double rel_se_mc_error = 0.0;
  bool bias_ok = false;        // |bias| <= 1.96 * mc_error
};

struct RecoveryResult {
  std::vector<RecoveryRow> rows;
  int replications = 0;
  int non_converged = 0;  // replications with some R-hat over threshold

  const RecoveryRow& operator[](const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw std::invalid_argument("no such parameter: " + name);
  }
};

/// Default estimator: full posterior fit; returns EAP mean and posterior
/// SD per reported parameter.
inline Estimator mcmc_estimator(const ModelSpec& spec, McmcConfig mcmc_cfg,
                                int* non_converged = nullptr) {
  return [spec, mcmc_cfg, non_converged](const Dataset& ds, int rep) {
    McmcConfig cfg = mcmc_cfg;
    // distinct chain substreams per replication
    std::uint64_t s = mcmc_cfg.seed ^ (0x9e3779b97f4a7c15ull *
                                       (static_cast<std::uint64_t>(rep) + 1));
    cfg.seed = splitmix64(s);
    auto draws = fit(ds, spec, cfg);
    bool bad = false;
    for (double rh : draws.rhat)
      if (std::isfinite(rh) && rh >= cfg.rhat_threshold) bad = true;
    if (bad && non_converged) ++*non_converged;
    std::map<std::string, Estimate> est;
    for (std::size_t p = 0; p < draws.names.size(); ++p) {
      auto v = draws.pooled(static_cast<int>(p));
      double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double s2 = 0.0;
      for (double x : v) s2 += (x - mu) * (x - mu);
      est[draws.names[p]] = {mu, std::sqrt(s2 / (v.size() - 1))};
    }
    return est;
  };
}

/// Observer invoked with each replication's estimates (used to persist
/// per-replication files).
using ReplicationObserver =
    std::function<void(int rep, const std::map<std::string, Estimate>&)>;

inline RecoveryResult run_replications(const SimulationConfig& sim_cfg,
                                       const ModelSpec& spec, int replications,
                                       const Estimator& estimator,
                                       int non_converged = 0,
                                       const ReplicationObserver& observe = {}) {
  require(replications >= 2, "need at least 2 replications");
  std::map<std::string, std::vector<double>> means, sds;
  for (int r = 0; r < replications; ++r) {
    auto sim = simulate(sim_cfg, static_cast<std::uint64_t>(r) + 1);
    auto ds = make_dataset(sim_cfg, sim);
    auto est = estimator(ds, r);
    if (observe) observe(r, est);
    for (const auto& [name, e] : est) {
      means[name].push_back(e.mean);
      sds[name].push_back(e.sd);
    }
  }

  auto truths = truth_map(sim_cfg, spec);
  RecoveryResult out;
  out.replications = replications;
  out.non_converged = non_converged;
  const double R = replications;
  for (const auto& [name, truth] : truths) {
    auto it = means.find(name);
    if (it == means.end() ||
        static_cast<int>(it->second.size()) != replications)
      continue;
    const auto& m = it->second;
    const auto& s = sds[name];
    RecoveryRow row;
    row.name = name;
    row.truth = truth;
    row.mean_estimate = std::accumulate(m.begin(), m.end(), 0.0) / R;
    row.bias = row.mean_estimate - truth;
    double v = 0.0;
    for (double x : m) v += (x - row.mean_estimate) * (x - row.mean_estimate);
    row.sd_estimates = std::sqrt(v / (R - 1));
    row.mc_error = row.sd_estimates / std::sqrt(R);
    row.mean_posterior_sd = std::accumulate(s.begin(), s.end(), 0.0) / R;
    double vs = 0.0;
    for (double x : s)
      vs += (x - row.mean_posterior_sd) * (x - row.mean_posterior_sd);
    vs /= (R - 1);
    if (row.sd_estimates > 0.0) {
      double ratio = row.mean_posterior_sd / row.sd_estimates;
      row.rel_se_bias = ratio - 1.0;
      row.rel_se_mc_error =
          ratio * std::sqrt(vs / (R * row.mean_posterior_sd *
                                      row.mean_posterior_sd) +
                            1.0 / (2.0 * (R - 1.0)));
    }
    row.bias_ok = std::abs(row.bias) <= 1.96 * row.mc_error;
    out.rows.push_back(row);
  }
  require(!out.rows.empty(), "no parameters recovered");
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_calibration_csv(const CalibrationResult& c,
                                  const std::string& path) {
  csv::Writer w(path);
  w.row({"parameter", "truth", "mean", "q2.5", "q97.5", "rhat", "covered"});
  for (const auto& r : c.rows)
    w.row({r.name, csv::format_double(r.truth), csv::format_double(r.mean),
           csv::format_double(r.q2_5), csv::format_double(r.q97_5),
           csv::format_double(r.rhat), r.covered ? "1" : "0"});
}

inline void write_recovery_csv(const RecoveryResult& res,
                               const std::string& path) {
  csv::Writer w(path);
  w.row({"parameter", "truth", "mean_estimate", "bias", "mc_error",
         "sd_estimates", "mean_posterior_sd", "rel_se_bias",
         "rel_se_mc_error", "bias_ok"});
  for (const auto& r : res.rows)
    w.row({r.name, csv::format_double(r.truth),
           csv::format_double(r.mean_estimate), csv::format_double(r.bias),
           csv::format_double(r.mc_error), csv::format_double(r.sd_estimates),
           csv::format_double(r.mean_posterior_sd),
           csv::format_double(r.rel_se_bias),
           csv::format_double(r.rel_se_mc_error), r.bias_ok ? "1" : "0"});
}

/// Plain-text table: estimate, truth and the +-1.96 MC error band.
inline std::string render_recovery_report(const RecoveryResult& res) {
  char buf[256];
  std::string out;
  snprintf(buf, sizeof(buf), "replications: %d (non-converged: %d)\n",
           res.replications, res.non_converged);
  out += buf;
  snprintf(buf, sizeof(buf), "%-18s %10s %10s %10s %12s %10s %s\n",
           "parameter", "truth", "estimate", "bias", "+-1.96*MCE",
           "relSEbias", "ok");
  out += buf;
  for (const auto& r : res.rows) {
    snprintf(buf, sizeof(buf),
             "%-18s %10.4f %10.4f %10.4f %12.4f %10.4f %s\n", r.name.c_str(),
             r.truth, r.mean_estimate, r.bias, 1.96 * r.mc_error,
             r.rel_se_bias, r.bias_ok ? "yes" : "NO");
    out += buf;
  }
  return out;
}

inline std::string render_calibration_report(const CalibrationResult& c) {
  char buf[256];
  std::string out;
  snprintf(buf, sizeof(buf),
           "coverage: %.1f%%   max R-hat: %.4f   converged: %s\n",
           100.0 * c.coverage, c.max_rhat, c.converged ? "yes" : "no");
  out += buf;
  snprintf(buf, sizeof(buf), "%-18s %10s %10s %10s %10s %8s %s\n", "parameter",
           "truth", "mean", "q2.5", "q97.5", "rhat", "in CI");
  out += buf;
  for (const auto& r : c.rows) {
    snprintf(buf, sizeof(buf), "%-18s %10.4f %10.4f %10.4f %10.4f %8.4f %s\n",
             r.name.c_str(), r.truth, r.mean, r.q2_5, r.q97_5, r.rhat,
             r.covered ? "yes" : "NO");
    out += buf;
  }
  return out;
}

}  // namespace dirt
