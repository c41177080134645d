// dirt: dyadic partial-credit IRT engine.
//
// Subcommands: check-design, simulate, fit, score, recover, summarize.
// Options come from an INI-style config file; every key can be
// overridden on the command line with --set section.key=value, and the
// common ones have dedicated flags. Every run directory gets a
// manifest.json (config hash, seed, tool version); rerunning with
// --from-manifest reproduces the outputs byte-identically.
//
// Exit codes: 0 success, 1 input/specification error,
//             2 identification or diagnostic failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dirt/config.hpp"
#include "dirt/dataset.hpp"
#include "dirt/design.hpp"
#include "dirt/mcmc.hpp"
#include "dirt/model_spec.hpp"
#include "dirt/recovery.hpp"
#include "dirt/simulate.hpp"
#include "dirt/workflows.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Config assembly

struct CommonOpts {
  std::string config_file;
  std::string from_manifest;
  std::vector<std::string> overrides;  // section.key=value
  std::string out_dir;
};

static void add_common(CLI::App* cmd, CommonOpts& o, bool needs_out = true) {
  cmd->add_option("--config", o.config_file, "INI config file");
  cmd->add_option("--from-manifest", o.from_manifest,
                  "rerun with the config recorded in a manifest.json");
  cmd->add_option("--set", o.overrides,
                  "override a config key: section.key=value (repeatable)");
  if (needs_out)
    cmd->add_option("--out", o.out_dir, "output directory")->required();
}

static dirt::Config load_config(const CommonOpts& o) {
  dirt::Config cfg;
  if (!o.from_manifest.empty()) {
    std::ifstream in(o.from_manifest);
    if (!in)
      throw std::invalid_argument("cannot open manifest '" + o.from_manifest +
                                  "'");
    json m = json::parse(in);
    for (auto& [k, v] : m.at("config").items())
      cfg.set(k, v.get<std::string>());
  } else if (!o.config_file.empty()) {
    cfg = dirt::Config::from_file(o.config_file);
  }
  for (const auto& kv : o.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

static void write_manifest(const dirt::Config& cfg, const std::string& cmd,
                           const std::string& out_dir) {
  json m;
  m["tool"] = "dirt";
  m["version"] = kVersion;
  m["command"] = cmd;
  m["config_hash"] = dirt::config_hash(cfg);
  m["seed"] = cfg.get("mcmc.seed", cfg.get("run.seed", "0"));
  json c = json::object();
  for (const auto& [k, v] : cfg.values()) c[k] = v;
  m["config"] = c;
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << m.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Builders from config

static dirt::DyadDesign build_design(const dirt::Config& cfg) {
  if (cfg.has("design.file")) return dirt::read_design_csv(cfg.get("design.file", ""));
  auto kind = cfg.get("design.kind", "");
  auto sizes_l = cfg.get_longs("design.sizes");
  std::vector<int> sizes(sizes_l.begin(), sizes_l.end());
  bool gender = cfg.get_bool("design.gender_from_block", false);
  if (kind == "round_robin") {
    dirt::require(sizes.size() == 1, "design.sizes must be one number");
    return dirt::make_round_robin(sizes[0]);
  }
  if (kind == "block") {
    dirt::require(sizes.size() == 2, "design.sizes must be p,q");
    return dirt::make_block(sizes[0], sizes[1], gender);
  }
  if (kind == "k_group_round_robin")
    return dirt::make_k_group_round_robin(sizes);
  if (kind == "k_group_block") {
    dirt::require(sizes.size() % 2 == 0, "design.sizes must be p1,q1,p2,q2,...");
    std::vector<std::pair<int, int>> pq;
    for (std::size_t i = 0; i < sizes.size(); i += 2)
      pq.emplace_back(sizes[i], sizes[i + 1]);
    return dirt::make_k_group_block(pq, gender);
  }
  throw std::invalid_argument(
      "design.kind must be round_robin|block|k_group_round_robin|"
      "k_group_block, or design.file must be set");
}

static dirt::ItemBank build_items(const dirt::Config& cfg) {
  dirt::ItemBank bank;
  if (cfg.has("items.file")) {
    dirt::read_items_csv(bank, cfg.get("items.file", ""));
    return bank;
  }
  int count = static_cast<int>(cfg.get_long("items.count", 5));
  int cats = static_cast<int>(cfg.get_long("items.categories", 5));
  double spread = cfg.get_double("items.step_spread", 1.0);
  dirt::require(count >= 1 && cats >= 2, "items.count/categories invalid");
  for (int i = 0; i < count; ++i) {
    dirt::Item it;
    it.id = "item" + std::to_string(i + 1);
    it.categories = cats;
    for (int k = 1; k < cats; ++k) {
      // evenly spaced generating steps, shifted slightly per item
      double base = cats > 2 ? -1.0 + 2.0 * (k - 1) / (cats - 2) : 0.0;
      it.steps.push_back(spread * base + 0.1 * i);
    }
    bank.items.push_back(std::move(it));
  }
  return bank;
}

static dirt::Hyperparameters build_hyper(const dirt::Config& cfg) {
  dirt::Hyperparameters h;
  h.sigma_alpha = cfg.get_double("truth.sigma_alpha", 1.0);
  h.sigma_beta = cfg.get_double("truth.sigma_beta", 1.0);
  h.sigma_gamma = cfg.get_double("truth.sigma_gamma", 1.0);
  h.rho_alpha_beta = cfg.get_double("truth.rho_alpha_beta", 0.0);
  h.rho_gamma = cfg.get_double("truth.rho_gamma", 0.0);
  h.mu_male = cfg.get_double("truth.mu_male", 0.0);
  return h;
}

static std::optional<dirt::DistalCoefficients> build_distal_truth(
    const dirt::Config& cfg, const dirt::ModelSpec& spec) {
  if (spec.distal == dirt::DistalMode::none) return std::nullopt;
  dirt::DistalCoefficients d;
  d.interactions = spec.distal_interactions;
  d.exchangeable = spec.exchangeable_distal;
  for (int i = 0; i < 10; ++i)
    d.b[i] = cfg.get_double("truth.b" + std::to_string(i), 0.0);
  d.enforce_constraints();
  return d;
}

static dirt::McmcConfig build_mcmc(const dirt::Config& cfg) {
  dirt::McmcConfig m;
  m.chains = static_cast<int>(cfg.get_long("mcmc.chains", 4));
  m.iterations = static_cast<int>(cfg.get_long("mcmc.iterations", 2000));
  m.burn_in = static_cast<int>(cfg.get_long("mcmc.burn_in", 1000));
  m.thinning = static_cast<int>(cfg.get_long("mcmc.thinning", 1));
  m.seed = static_cast<std::uint64_t>(cfg.get_long("mcmc.seed", 0));
  m.rhat_threshold = cfg.get_double("mcmc.rhat_threshold", 1.05);
  m.threads = static_cast<int>(cfg.get_long("mcmc.threads", 1));
  m.force_unidentified = cfg.get_bool("mcmc.force", false);
  return m;
}

static dirt::SimulationConfig build_sim(const dirt::Config& cfg,
                                        const dirt::ModelSpec& spec) {
  dirt::SimulationConfig sc;
  sc.design = build_design(cfg);
  sc.item_bank = build_items(cfg);
  sc.hyper = build_hyper(cfg);
  sc.distal = build_distal_truth(cfg, spec);
  if (cfg.has("truth.sigma_u")) sc.cluster_sd = cfg.get_double("truth.sigma_u", 0.0);
  sc.seed = static_cast<std::uint64_t>(cfg.get_long("run.seed", 0));
  return sc;
}

// ---------------------------------------------------------------------------
// Subcommands

static int cmd_check_design(const std::string& design_file, bool /*strict*/) {
  auto d = dirt::read_design_csv(design_file);
  auto rep = dirt::check_identification(d);
  std::cout << "individuals: " << d.n_individuals()
            << "  directed dyads: " << d.n_directed() << "\n";
  std::cout << "pattern counts: reciprocal=" << rep.reciprocal_pairs
            << " shared-actor=" << rep.shared_actor_pairs
            << " shared-partner=" << rep.shared_partner_pairs
            << " actor-as-partner=" << rep.actor_as_partner_pairs << "\n";
  auto line = [&](const char* name, dirt::IdStatus s) {
    std::cout << "  " << name << ": " << dirt::to_string(s) << "\n";
  };
  line("sigma_alpha^2", rep.sigma_alpha2);
  line("sigma_beta^2", rep.sigma_beta2);
  line("sigma_gamma^2", rep.sigma_gamma2);
  line("rho_alpha_beta", rep.rho_alpha_beta);
  line("rho_gamma", rep.rho_gamma);
  if (!rep.roles_switch)
    std::cout << "note: individuals never switch roles; rho_alpha_beta and "
                 "rho_gamma are undefined for this design\n";
  if (rep.all_identified()) {
    std::cout << "all five variance-correlation parameters identified\n";
    return 0;
  }
  std::cout << "NOT identified; missing covariance patterns:\n";
  for (const auto& p : rep.missing_patterns()) std::cout << "  - " << p << "\n";
  return 2;
}

static int cmd_simulate(const CommonOpts& common) {
  auto cfg = load_config(common);
  auto spec = dirt::ModelSpec::from_config(cfg);
  auto sc = build_sim(cfg, spec);
  fs::create_directories(common.out_dir);
  auto res = dirt::simulate(sc, cfg.get_long("run.stream", 0));
  auto dir = fs::path(common.out_dir);
  dirt::write_design_csv(sc.design, (dir / "design.csv").string());
  dirt::write_responses_csv(sc.design, sc.item_bank, res.responses,
                            (dir / "responses.csv").string());
  if (sc.distal)
    dirt::write_distal_csv(sc.design, res.distal,
                           (dir / "distal.csv").string());
  dirt::write_truth_csv(sc, (dir / "truth.csv").string());
  dirt::write_latents_csv(sc.design, res.latents,
                          (dir / "latents.csv").string());
  // individuals file so a later fit can pick up gender/cluster labels
  {
    dirt::csv::Writer w((dir / "individuals.csv").string());
    w.row({"id", "gender", "cluster"});
    for (int i = 0; i < sc.design.n_individuals(); ++i) {
      const auto& ind = sc.design.individual(i);
      w.row({ind.id, ind.gender >= 0 ? std::to_string(ind.gender) : "",
             ind.cluster >= 0 ? std::to_string(ind.cluster) : ""});
    }
  }
  {
    dirt::csv::Writer w((dir / "items.csv").string());
    std::vector<std::string> hdr = {"item_id", "categories"};
    int max_steps = 0;
    for (const auto& it : sc.item_bank.items)
      max_steps = std::max(max_steps, static_cast<int>(it.steps.size()));
    for (int k = 1; k <= max_steps; ++k)
      hdr.push_back("step" + std::to_string(k));
    w.row(hdr);
    for (const auto& it : sc.item_bank.items) {
      std::vector<std::string> row = {it.id, std::to_string(it.categories)};
      for (double s : it.steps) row.push_back(dirt::csv::format_double(s));
      w.row(row);
    }
  }
  write_manifest(cfg, "simulate", common.out_dir);
  std::cout << "simulated " << res.responses.size() << " responses for "
            << sc.design.n_directed() << " directed dyads -> "
            << common.out_dir << "\n";
  return 0;
}

struct FitFlags {
  std::string design_file, responses_file, distal_file, individuals_file;
  std::string items_file, remap_file;
  bool force = false;
  bool strict = false;
  bool drop_counterpart = false;
  bool write_draws = false;
};

static dirt::Dataset load_dataset(const dirt::Config& cfg, const FitFlags& f,
                                  const dirt::ModelSpec& spec) {
  dirt::Dataset ds;
  std::string design_file = !f.design_file.empty()
                                ? f.design_file
                                : cfg.get("data.design", "");
  dirt::require(!design_file.empty(), "no design file (--design or data.design)");
  ds.design = dirt::read_design_csv(design_file);

  std::string ind_file = !f.individuals_file.empty()
                             ? f.individuals_file
                             : cfg.get("data.individuals", "");
  if (!ind_file.empty()) dirt::read_individuals_csv(ds, ind_file);

  std::string items_file =
      !f.items_file.empty() ? f.items_file : cfg.get("data.items", "");
  if (!items_file.empty()) dirt::read_items_csv(ds.items, items_file);

  std::string resp_file = !f.responses_file.empty()
                              ? f.responses_file
                              : cfg.get("data.responses", "");
  dirt::require(!resp_file.empty(),
                "no responses file (--responses or data.responses)");
  dirt::IngestOptions opts;
  std::string remap =
      !f.remap_file.empty() ? f.remap_file : cfg.get("data.remap", "");
  if (!remap.empty()) opts.remap = dirt::read_remap_csv(remap);
  opts.drop_counterpart =
      f.drop_counterpart || cfg.get_bool("data.drop_counterpart", false);
  dirt::read_responses_csv(ds, resp_file, opts);

  std::string distal_file =
      !f.distal_file.empty() ? f.distal_file : cfg.get("data.distal", "");
  if (spec.distal != dirt::DistalMode::none)
    dirt::require(!distal_file.empty(),
                  "distal model requested but no distal file given");
  if (!distal_file.empty()) dirt::read_distal_csv(ds, distal_file);
  ds.validate();
  return ds;
}

static void write_scores(const dirt::PosteriorDraws& draws,
                         const dirt::DyadDesign& design,
                         const std::string& path) {
  auto scores = dirt::eap_latent_scores(draws, design);
  dirt::csv::Writer w(path);
  w.row({"id", "role", "eap", "posterior_sd"});
  for (const auto& s : scores)
    w.row({s.id, s.role, dirt::csv::format_double(s.eap),
           dirt::csv::format_double(s.sd)});
}

static int cmd_fit(const CommonOpts& common, const FitFlags& flags) {
  auto cfg = load_config(common);
  auto spec = dirt::ModelSpec::from_config(cfg);
  auto mcmc_cfg = build_mcmc(cfg);
  if (flags.force) mcmc_cfg.force_unidentified = true;

  auto ds = load_dataset(cfg, flags, spec);
  auto rep = dirt::check_identification(ds.design);
  if (!rep.all_identified() && !mcmc_cfg.force_unidentified) {
    std::cerr << "design does not identify all variance-correlation "
                 "parameters; missing patterns:\n";
    for (const auto& p : rep.missing_patterns())
      std::cerr << "  - " << p << "\n";
    std::cerr << "rerun with --force to fit anyway\n";
    return 2;
  }

  fs::create_directories(common.out_dir);
  auto dir = fs::path(common.out_dir);

  if (spec.distal == dirt::DistalMode::sequential) {
    dirt::MiConfig mi;
    mi.m_draws = static_cast<int>(cfg.get_long("sequential.m_draws", 20));
    auto res = dirt::fit_sequential_mi(ds, spec, mcmc_cfg, mi);
    dirt::write_summary_csv(res.measurement_summary,
                            (dir / "summary.csv").string());
    dirt::write_pooled_csv(res.coefficients, (dir / "distal_pooled.csv").string());
    write_scores(res.measurement, ds.design, (dir / "scores.csv").string());
    if (flags.write_draws || cfg.get_bool("fit.write_draws", false))
      dirt::write_draws_csv(res.measurement, (dir / "draws.csv").string());
    for (const auto& wmsg : res.warnings) std::cerr << "warning: " << wmsg << "\n";
    std::ofstream diag(dir / "diagnostics.txt");
    diag << "sequential distal fit: " << res.m_used << "/" << res.m_requested
         << " imputation draws used\n";
    double max_rhat = 0.0;
    for (double r : res.measurement.rhat)
      if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);
    diag << "max R-hat: " << max_rhat << "\n";
    write_manifest(cfg, "fit", common.out_dir);
    if (flags.strict && max_rhat >= mcmc_cfg.rhat_threshold) {
      std::cerr << "max R-hat " << max_rhat << " exceeds threshold\n";
      return 2;
    }
    return 0;
  }

  auto draws = dirt::fit(ds, spec, mcmc_cfg);
  auto summary = dirt::summarize(draws);
  dirt::write_summary_csv(summary, (dir / "summary.csv").string());
  write_scores(draws, ds.design, (dir / "scores.csv").string());
  if (flags.write_draws || cfg.get_bool("fit.write_draws", false))
    dirt::write_draws_csv(draws, (dir / "draws.csv").string());

  double max_rhat = 0.0;
  for (double r : draws.rhat)
    if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);
  {
    std::ofstream diag(dir / "diagnostics.txt");
    diag << "chains: " << mcmc_cfg.chains
         << "  iterations: " << mcmc_cfg.iterations
         << "  burn-in: " << mcmc_cfg.burn_in
         << "  thinning: " << mcmc_cfg.thinning << "\n";
    diag << "max R-hat: " << max_rhat << "\n";
    for (const auto& [k, v] : draws.acceptance)
      diag << "acceptance[" << k << "]: " << v << "\n";
  }
  write_manifest(cfg, "fit", common.out_dir);
  std::cout << "fit complete; max R-hat " << max_rhat << " -> "
            << common.out_dir << "\n";
  if (flags.strict && max_rhat >= mcmc_cfg.rhat_threshold) {
    std::cerr << "max R-hat " << max_rhat << " exceeds threshold "
              << mcmc_cfg.rhat_threshold << "\n";
    return 2;
  }
  return 0;
}

static int cmd_score(const std::string& fit_dir, const std::string& truth_file,
                     const std::string& out_file) {
  auto scores_path = fs::path(fit_dir) / "scores.csv";
  if (!fs::exists(scores_path))
    throw std::runtime_error(
        "no scores.csv in '" + fit_dir +
        "': run `dirt fit` first (latent moments are retained by every fit)");
  auto t = dirt::csv::read_file(scores_path.string());
  int cid = t.require_column("id");
  int crole = t.require_column("role");
  int ceap = t.require_column("eap");
  int csd = t.require_column("posterior_sd");

  if (!out_file.empty()) {
    dirt::csv::Writer w(out_file);
    w.row({"id", "role", "eap", "posterior_sd"});
    for (const auto& row : t.rows)
      w.row({row[cid], row[crole], row[ceap], row[csd]});
  }
  std::cout << t.rows.size() << " latent scores\n";

  if (!truth_file.empty()) {
    auto tr = dirt::csv::read_file(truth_file);
    int tid = tr.require_column("id");
    int trole = tr.require_column("role");
    int tval = tr.require_column("value");
    std::map<std::pair<std::string, std::string>, double> truth;
    for (const auto& row : tr.rows)
      truth[{row[tid], row[trole]}] =
          dirt::csv::parse_double(row[tval], truth_file);
    for (const std::string role : {"alpha", "beta", "gamma"}) {
      std::vector<double> x, y;
      for (const auto& row : t.rows) {
        if (row[crole] != role) continue;
        auto it = truth.find({row[cid], role});
        if (it == truth.end()) continue;
        x.push_back(dirt::csv::parse_double(row[ceap], "scores"));
        y.push_back(it->second);
      }
      if (x.size() < 3) continue;
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
      mx /= x.size();
      my /= y.size();
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
      }
      double r = sxy / std::sqrt(sxx * syy);
      std::cout << "score-vs-truth correlation (" << role << "): " << r
                << "\n";
    }
  }
  return 0;
}

static int cmd_recover(const CommonOpts& common) {
  auto cfg = load_config(common);
  auto spec = dirt::ModelSpec::from_config(cfg);
  auto mcmc_cfg = build_mcmc(cfg);
  auto sc = build_sim(cfg, spec);
  fs::create_directories(common.out_dir);
  auto dir = fs::path(common.out_dir);

  auto mode = cfg.get("recover.mode", "calibration");
  if (mode == "calibration") {
    auto cal = dirt::run_calibration(sc, spec, mcmc_cfg,
                                     cfg.get_long("run.stream", 0));
    dirt::write_calibration_csv(cal, (dir / "calibration.csv").string());
    std::ofstream rep(dir / "report.txt");
    rep << dirt::render_calibration_report(cal);
    std::cout << dirt::render_calibration_report(cal);
    write_manifest(cfg, "recover", common.out_dir);
    return cal.converged ? 0 : 2;
  }
  if (mode != "replications")
    throw std::invalid_argument("recover.mode must be calibration|replications");

  int R = static_cast<int>(cfg.get_long("recover.replications", 20));
  dirt::require(R >= 2, "recover.replications must be >= 2");
  fs::create_directories(dir / "replications");
  int non_conv = 0;
  auto est = dirt::mcmc_estimator(spec, mcmc_cfg, &non_conv);
  auto observer = [&](int r, const std::map<std::string, dirt::Estimate>& e) {
    dirt::csv::Writer w(
        (dir / "replications" / ("rep" + std::to_string(r + 1) + ".csv"))
            .string());
    w.row({"parameter", "estimate", "posterior_sd"});
    for (const auto& [name, v] : e)
      w.row({name, dirt::csv::format_double(v.mean),
             dirt::csv::format_double(v.sd)});
    std::cout << "replication " << (r + 1) << "/" << R << " done\n";
  };
  auto res = dirt::run_replications(sc, spec, R, est, 0, observer);
  res.non_converged = non_conv;
  dirt::write_recovery_csv(res, (dir / "recovery.csv").string());
  std::ofstream rep(dir / "report.txt");
  rep << dirt::render_recovery_report(res);
  std::cout << dirt::render_recovery_report(res);
  write_manifest(cfg, "recover", common.out_dir);
  return 0;
}

static int cmd_summarize(const std::string& draws_file,
                         const std::string& out_file) {
  auto t = dirt::csv::read_file(draws_file);
  int cc = t.require_column("chain");
  int ci = t.require_column("iteration");
  int cp = t.require_column("parameter");
  int cv = t.require_column("value");

  dirt::PosteriorDraws d;
  std::map<std::string, int> pindex;
  long max_chain = 0, max_iter = 0;
  for (const auto& row : t.rows) {
    max_chain = std::max(max_chain, dirt::csv::parse_long(row[cc], "chain"));
    max_iter = std::max(max_iter, dirt::csv::parse_long(row[ci], "iteration"));
    if (!pindex.count(row[cp])) {
      pindex[row[cp]] = static_cast<int>(d.names.size());
      d.names.push_back(row[cp]);
    }
  }
  d.draws.assign(max_chain,
                 std::vector<std::vector<double>>(
                     max_iter, std::vector<double>(d.names.size(), 0.0)));
  for (const auto& row : t.rows) {
    long ch = dirt::csv::parse_long(row[cc], "chain") - 1;
    long it = dirt::csv::parse_long(row[ci], "iteration") - 1;
    d.draws[ch][it][pindex[row[cp]]] =
        dirt::csv::parse_double(row[cv], "value");
  }
  d.rhat.resize(d.names.size());
  for (std::size_t p = 0; p < d.names.size(); ++p)
    d.rhat[p] = max_chain >= 2 && max_iter >= 2
                    ? dirt::rhat(d, static_cast<int>(p))
                    : std::numeric_limits<double>::quiet_NaN();
  auto s = dirt::summarize(d);
  if (!out_file.empty()) dirt::write_summary_csv(s, out_file);
  printf("%-20s %12s %12s %12s %8s\n", "parameter", "mean", "q2.5", "q97.5",
         "rhat");
  for (const auto& r : s.rows)
    printf("%-20s %12.5f %12.5f %12.5f %8.4f\n", r.name.c_str(), r.mean,
           r.q2_5, r.q97_5, r.rhat);
  return 0;
}

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"dyadic partial-credit IRT engine"};
  app.require_subcommand(1);

  // check-design
  auto* cd = app.add_subcommand("check-design",
                                "check identifiability of a dyad design");
  std::string cd_file;
  bool cd_strict = false;
  cd->add_option("--design", cd_file, "design edge-list CSV")->required();
  cd->add_flag("--strict", cd_strict, "treat warnings as failures");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate data from known truths");
  CommonOpts sim_common;
  add_common(sim, sim_common);

  // fit
  auto* fit = app.add_subcommand("fit", "fit the model to data");
  CommonOpts fit_common;
  add_common(fit, fit_common);
  FitFlags ff;
  fit->add_option("--design", ff.design_file, "design edge-list CSV");
  fit->add_option("--responses", ff.responses_file, "responses CSV");
  fit->add_option("--distal-file", ff.distal_file, "distal outcomes CSV");
  fit->add_option("--individuals", ff.individuals_file,
                  "individual attributes CSV (gender, cluster)");
  fit->add_option("--items", ff.items_file, "items CSV");
  fit->add_option("--remap", ff.remap_file, "category remap CSV (from,to)");
  std::string fit_distal_mode, fit_threads;
  fit->add_option("--distal", fit_distal_mode,
                  "distal mode: none|joint|sequential");
  bool no_interactions = false, gender_flag = false;
  fit->add_flag("--no-interactions", no_interactions,
                "drop the distal product terms (b7..b9 = 0)");
  fit->add_flag("--gender", gender_flag, "actor-mean gender shift");
  fit->add_flag("--force", ff.force, "fit despite identification failures");
  fit->add_flag("--strict", ff.strict, "nonzero exit when R-hat exceeds threshold");
  fit->add_flag("--drop-counterpart", ff.drop_counterpart,
                "drop the partner's matching ratings for dropped rows");
  fit->add_flag("--write-draws", ff.write_draws, "persist full draws CSV");
  fit->add_option("--threads", fit_threads, "worker cap for chains");
  std::string fit_seed, fit_chains, fit_iters, fit_burnin;
  fit->add_option("--seed", fit_seed, "master RNG seed");
  fit->add_option("--chains", fit_chains, "number of chains");
  fit->add_option("--iterations", fit_iters, "iterations per chain");
  fit->add_option("--burn-in", fit_burnin, "burn-in iterations");

  // score
  auto* sc = app.add_subcommand("score", "extract latent scores from a fit");
  std::string sc_fit_dir, sc_truth, sc_out;
  sc->add_option("--fit-dir", sc_fit_dir, "directory of a previous fit")
      ->required();
  sc->add_option("--truth", sc_truth, "true latents CSV for correlation check");
  sc->add_option("--out", sc_out, "output CSV");

  // recover
  auto* rec = app.add_subcommand("recover",
                                 "simulate-and-refit recovery study");
  CommonOpts rec_common;
  add_common(rec, rec_common);

  // summarize
  auto* sum = app.add_subcommand("summarize", "summarize a draws CSV");
  std::string sum_draws, sum_out;
  sum->add_option("--draws", sum_draws, "draws CSV from a fit")->required();
  sum->add_option("--out", sum_out, "summary CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cd->parsed()) return cmd_check_design(cd_file, cd_strict);
    if (sim->parsed()) return cmd_simulate(sim_common);
    if (fit->parsed()) {
      // dedicated flags override config keys
      if (!fit_distal_mode.empty())
        fit_common.overrides.push_back("model.distal=" + fit_distal_mode);
      if (no_interactions)
        fit_common.overrides.push_back("model.distal_interactions=false");
      if (gender_flag) fit_common.overrides.push_back("model.gender_mean=true");
      if (!fit_seed.empty())
        fit_common.overrides.push_back("mcmc.seed=" + fit_seed);
      if (!fit_chains.empty())
        fit_common.overrides.push_back("mcmc.chains=" + fit_chains);
      if (!fit_iters.empty())
        fit_common.overrides.push_back("mcmc.iterations=" + fit_iters);
      if (!fit_burnin.empty())
        fit_common.overrides.push_back("mcmc.burn_in=" + fit_burnin);
      if (!fit_threads.empty())
        fit_common.overrides.push_back("mcmc.threads=" + fit_threads);
      return cmd_fit(fit_common, ff);
    }
    if (sc->parsed()) return cmd_score(sc_fit_dir, sc_truth, sc_out);
    if (rec->parsed()) return cmd_recover(rec_common);
    if (sum->parsed()) return cmd_summarize(sum_draws, sum_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
