// Acceptance harness: one pass/fail line per criterion, nonzero exit if
// any fail. argv[1] must be the path to the command-line binary (used by
// the identification-gate and determinism criteria).

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dirt/recovery.hpp"
#include "dirt/workflows.hpp"

using namespace dirt;

static int g_fails = 0;

static void report(int k, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", k, what.c_str());
  std::fflush(stdout);
  if (!ok) ++g_fails;
}

static std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static int run_cmd(const std::string& cmd, std::string* out = nullptr) {
  std::string full = cmd + " > acceptance_work/cmd_out.txt 2>&1";
  int rc = std::system(full.c_str());
  if (out) *out = slurp("acceptance_work/cmd_out.txt");
  return WEXITSTATUS(rc);
}

// ---------------------------------------------------------------------------
// Desk-scale configuration shared by criteria 4, 5 and 7

static SimulationConfig desk_config() {
  SimulationConfig cfg;
  std::vector<std::pair<int, int>> groups(10, {6, 6});
  cfg.design = make_k_group_block(groups, /*gender_from_block=*/true);
  for (int i = 0; i < 5; ++i) {
    Item it;
    it.id = "item" + std::to_string(i + 1);
    it.categories = 5;
    for (int k = 1; k <= 4; ++k)
      it.steps.push_back(-1.0 + 2.0 * (k - 1) / 3.0 + 0.1 * i);
    cfg.item_bank.items.push_back(it);
  }
  cfg.hyper = {1.03, 0.63, 0.98, -0.06, 0.46, 0.08};
  DistalCoefficients d;
  d.interactions = false;
  double b[7] = {-0.88, 0.14, -0.02, -2.92, 3.48, 3.42, 0.13};
  for (int i = 0; i < 7; ++i) d.b[i] = b[i];
  cfg.distal = d;
  cfg.seed = 2034;
  return cfg;
}

static ModelSpec desk_spec() {
  ModelSpec spec;
  spec.distal = DistalMode::joint;
  spec.distal_interactions = false;
  spec.gender_mean = true;
  return spec;
}

// ---------------------------------------------------------------------------

static void criterion_1() {
  bool ok = true;
  std::vector<double> delta = {0.5, -0.2};
  auto ex = pcm_category_probs(1.0, delta);
  ok = ok && std::abs(ex[0] - 0.12311) < 5e-6 &&
       std::abs(ex[1] - 0.20298) < 5e-6 && std::abs(ex[2] - 0.67391) < 5e-6;
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> uth(-6, 6), ud(-3, 3);
  std::uniform_int_distribution<int> um(2, 7);
  for (int r = 0; r < 1000 && ok; ++r) {
    int m = um(gen);
    double theta = uth(gen);
    std::vector<double> dl(m - 1);
    for (auto& d : dl) d = ud(gen);
    auto p = pcm_category_probs(theta, dl);
    double sum = 0;
    for (double v : p) sum += v;
    ok = ok && std::abs(sum - 1.0) < 1e-12;
    for (int j = 1; j < m && ok; ++j)
      ok = ok &&
           std::abs(std::log(p[j] / p[j - 1]) - (theta - dl[j - 1])) < 1e-10;
  }
  report(1, ok, "partial-credit probabilities exact (sum, adjacent identity, "
                "worked example)");
}

static void criterion_2() {
  bool ok = true;
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> us(0.05, 2.0), ur(-0.95, 0.95);
  for (int r = 0; r < 1000 && ok; ++r) {
    Hyperparameters h{us(gen), us(gen), us(gen), ur(gen), ur(gen), 0.0};
    auto s = solve_hyperparameters(reduced_form(h));
    ok = ok && std::abs(s.hyper.sigma_alpha - h.sigma_alpha) < 1e-12 &&
         std::abs(s.hyper.sigma_beta - h.sigma_beta) < 1e-12 &&
         std::abs(s.hyper.sigma_gamma - h.sigma_gamma) < 1e-12 &&
         std::abs(s.hyper.rho_alpha_beta - h.rho_alpha_beta) < 1e-12 &&
         std::abs(s.hyper.rho_gamma - h.rho_gamma) < 1e-12;
  }

  // Monte Carlo check of the five covariance patterns
  Hyperparameters h{1.03, 0.63, 0.98, -0.06, 0.46, 0.0};
  Rng rng(202);
  const int n = 200000;
  std::vector<double> t12(n), t21(n), t13(n), t31(n);
  for (int i = 0; i < n; ++i) {
    auto [a1, b1] = rng.bivariate_normal(0, 0, h.sigma_alpha, h.sigma_beta,
                                         h.rho_alpha_beta);
    auto [a2, b2] = rng.bivariate_normal(0, 0, h.sigma_alpha, h.sigma_beta,
                                         h.rho_alpha_beta);
    auto [a3, b3] = rng.bivariate_normal(0, 0, h.sigma_alpha, h.sigma_beta,
                                         h.rho_alpha_beta);
    auto [g12, g21] =
        rng.bivariate_normal(0, 0, h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
    auto [g13, g31] =
        rng.bivariate_normal(0, 0, h.sigma_gamma, h.sigma_gamma, h.rho_gamma);
    t12[i] = a1 + b2 + g12;
    t21[i] = a2 + b1 + g21;
    t13[i] = a1 + b3 + g13;
    t31[i] = a3 + b1 + g31;
  }
  auto cov = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double c = 0;
    for (int i = 0; i < n; ++i) c += (x[i] - mx) * (y[i] - my);
    return c / (n - 1);
  };
  const double v = theoretical_covariance(h, CovPattern::variance);
  const double band = 3.0 * v * std::sqrt(2.0 / n);
  ok = ok && std::abs(cov(t12, t12) - v) < band;
  ok = ok && std::abs(cov(t12, t21) -
                      theoretical_covariance(h, CovPattern::reciprocal)) < band;
  ok = ok &&
       std::abs(cov(t12, t13) -
                theoretical_covariance(h, CovPattern::shared_actor)) < band;
  ok = ok &&
       std::abs(cov(t21, t31) -
                theoretical_covariance(h, CovPattern::shared_partner)) < band;
  ok = ok &&
       std::abs(cov(t12, t31) -
                theoretical_covariance(h, CovPattern::actor_as_partner)) < band;
  report(2, ok, "covariance algebra round trip + Monte Carlo agreement");
}

static void criterion_3() {
  Hyperparameters h{1.03, 0.63, 0.98, -0.06, 0.46, 0.0};
  double va = h.sigma_alpha * h.sigma_alpha;
  double vb = h.sigma_beta * h.sigma_beta;
  double vg = h.sigma_gamma * h.sigma_gamma;
  double tot = va + vb + vg;
  bool ok = std::lround(100 * va / tot) == 44 &&
            std::lround(100 * vb / tot) == 16 &&
            std::lround(100 * vg / tot) == 40;
  report(3, ok, "variance partition rounds to 44/16/40");
}

static void criterion_4() {
  auto cfg = desk_config();
  auto spec = desk_spec();
  McmcConfig mc;
  mc.seed = 68;
  auto cal = run_calibration(cfg, spec, mc);
  bool ok = cal.coverage >= 0.90 && cal.converged;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "desk-scale calibration: coverage %.1f%% (need >= 90%%), max "
                "R-hat %.4f (need < 1.05)",
                100 * cal.coverage, cal.max_rhat);
  report(4, ok, buf);
}

static void criterion_5() {
  auto cfg = desk_config();
  auto spec = desk_spec();
  McmcConfig mc;
  mc.seed = 515151;
  int non_conv = 0;
  auto est = mcmc_estimator(spec, mc, &non_conv);
  auto res = run_replications(cfg, spec, 20, est, 0);
  res.non_converged = non_conv;
  const char* hyper_names[] = {"sigma_alpha",    "sigma_beta", "sigma_gamma",
                               "rho_alpha_beta", "rho_gamma",  "mu_male"};
  bool ok = true;
  std::string detail;
  for (const char* nm : hyper_names) {
    const auto& r = (res)[nm];
    bool bias_ok = std::abs(r.bias) <= 1.96 * r.mc_error;
    bool se_ok = std::abs(r.rel_se_bias) <= 0.15;
    if (!bias_ok || !se_ok) {
      char b[160];
      std::snprintf(b, sizeof(b), " [%s bias=%.4f mce=%.4f relSE=%.3f]", nm,
                    r.bias, r.mc_error, r.rel_se_bias);
      detail += b;
      ok = false;
    }
  }
  report(5, ok,
         "R=20 frequentist recovery: hyperparameter bias within 1.96*MC "
         "error, relative SE bias within 15%" +
             detail);
  std::printf("%s", render_recovery_report(res).c_str());
}

static void criterion_6(const std::string& cli) {
  bool ok = true;
  std::string out;

  // round robin n=4 -> exit 0
  {
    std::ofstream f("acceptance_work/rr4.csv");
    f << "actor_id,partner_id\n";
    for (int a = 1; a <= 4; ++a)
      for (int p = 1; p <= 4; ++p)
        if (a != p) f << "p" << a << ",p" << p << "\n";
  }
  ok = ok &&
       run_cmd(cli + " check-design --design acceptance_work/rr4.csv") == 0;

  // k-group block, 2 groups of (3,3) -> exit 0
  {
    auto d = make_k_group_block({{3, 3}, {3, 3}});
    write_design_csv(d, "acceptance_work/kb.csv");
  }
  ok = ok && run_cmd(cli + " check-design --design acceptance_work/kb.csv") == 0;

  // single pairing -> exit 2 naming all four missing patterns
  {
    std::ofstream f("acceptance_work/single.csv");
    f << "actor_id,partner_id\na,b\nb,a\n";
  }
  int rc = run_cmd(cli + " check-design --design acceptance_work/single.csv",
                   &out);
  ok = ok && rc == 2 && out.find("shared-actor") != std::string::npos &&
       out.find("shared-partner") != std::string::npos &&
       out.find("actor-as-partner") != std::string::npos;

  // rater x examinee -> exit 2 flagging the correlations as undefined
  {
    std::ofstream f("acceptance_work/rater.csv");
    f << "actor_id,partner_id\n";
    for (int r = 1; r <= 3; ++r)
      for (int e = 1; e <= 3; ++e) f << "r" << r << ",e" << e << "\n";
  }
  rc = run_cmd(cli + " check-design --design acceptance_work/rater.csv", &out);
  ok = ok && rc == 2 && out.find("undefined") != std::string::npos;

  report(6, ok, "identification gate exit codes and messages");
}

static void criterion_7() {
  auto cfg = desk_config();
  auto sim = simulate(cfg, 3);
  auto ds = make_dataset(cfg, sim);

  ModelSpec joint_spec = desk_spec();
  McmcConfig mc;
  mc.seed = 777;
  auto joint = fit_joint(ds, joint_spec, mc);

  ModelSpec seq_spec = desk_spec();
  seq_spec.distal = DistalMode::sequential;
  MiConfig mi;
  mi.m_draws = 20;
  auto seq = fit_sequential_mi(ds, seq_spec, mc, mi);

  bool ok = true;
  std::string detail;
  for (const auto& c : seq.coefficients) {
    const auto& j = joint.summary[c.name];
    bool joint_signif = j.q2_5 > 0.0 || j.q97_5 < 0.0;
    if (joint_signif && ((j.mean > 0) != (c.estimate > 0))) {
      detail += " [sign mismatch " + c.name + "]";
      ok = false;
    }
  }
  for (const char* nm : {"b3", "b4", "b5"}) {
    double js = std::abs(joint.summary[nm].mean);
    double ss = std::abs(seq[nm].estimate);
    if (!(ss < js)) {
      char b[120];
      std::snprintf(b, sizeof(b), " [%s pooled %.3f !< joint %.3f]", nm, ss,
                    js);
      detail += b;
      ok = false;
    }
  }
  report(7, ok,
         "sequential vs joint: sign concordance and attenuated b3/b4/b5" +
             detail);
}

static void criterion_8() {
  SimulationConfig cfg;
  cfg.design = make_round_robin(4);
  Item it;
  it.id = "q1";
  it.categories = 3;
  it.steps = {0.5, -0.2};
  cfg.item_bank.items.push_back(it);
  cfg.hyper = {1.0, 0.8, 0.9, -0.1, 0.4, 0.0};
  DistalCoefficients d;
  d.b[0] = -0.5;
  d.b[1] = 0.3;
  d.b[5] = 0.6;
  d.b[7] = 0.2;
  cfg.distal = d;
  cfg.seed = 88;
  auto sim = simulate(cfg);
  auto ds = make_dataset(cfg, sim);
  ModelSpec spec;
  spec.distal = DistalMode::joint;

  bool ok = true;
  std::mt19937_64 gen(44);
  std::uniform_real_distribution<double> us(0.4, 1.6), ur(-0.6, 0.6),
      ux(-1.0, 1.0);
  for (int point = 0; point < 10 && ok; ++point) {
    auto st = init_state(ds, spec);
    st.hyper = {us(gen), us(gen), us(gen), ur(gen), ur(gen), 0.0};
    for (auto& item : st.delta)
      for (auto& dv : item) dv = ux(gen);
    for (auto& v : st.lat.alpha) v = ux(gen);
    for (auto& v : st.lat.beta) v = ux(gen);
    for (auto& v : st.lat.gamma) v = ux(gen);
    for (int i = 0; i < 10; ++i) st.distal.b[i] = 0.3 * ux(gen);

    auto grad = pack_grad(joint_log_density_grad(st, ds, spec), ds, spec);
    auto x = pack_state(st, ds, spec);
    const double h = 1e-5;
    for (std::size_t i = 0; i < x.size() && ok; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      ModelState sp = st, sm = st;
      unpack_state(sp, ds, spec, xp);
      unpack_state(sm, ds, spec, xm);
      double fd = (joint_log_density(sp, ds, spec) -
                   joint_log_density(sm, ds, spec)) /
                  (2 * h);
      ok = ok && std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-4;
    }
  }
  report(8, ok, "analytic gradient matches finite differences at 10 points");
}

static void criterion_9(const std::string& cli) {
  bool ok = true;
  std::string cwd = "acceptance_work";
  std::ofstream(cwd + "/acc.ini")
      << "[design]\nkind = round_robin\nsizes = 5\n"
      << "[items]\ncount = 2\ncategories = 3\n"
      << "[truth]\nsigma_alpha = 0.9\nsigma_beta = 0.6\nsigma_gamma = 0.8\n"
      << "rho_alpha_beta = -0.1\nrho_gamma = 0.4\n"
      << "[run]\nseed = 19\n"
      << "[mcmc]\nchains = 2\niterations = 300\nburn_in = 150\nseed = 23\n";

  ok = ok && run_cmd(cli + " simulate --config " + cwd + "/acc.ini --out " +
                     cwd + "/s1") == 0;
  ok = ok && run_cmd(cli + " simulate --from-manifest " + cwd +
                     "/s1/manifest.json --out " + cwd + "/s2") == 0;
  for (const char* f : {"responses.csv", "design.csv", "truth.csv",
                        "latents.csv", "manifest.json"})
    ok = ok && slurp(cwd + "/s1/" + f) == slurp(cwd + "/s2/" + f);

  std::string data_args = " --set data.design=" + cwd + "/s1/design.csv" +
                          " --set data.responses=" + cwd + "/s1/responses.csv";
  ok = ok && run_cmd(cli + " fit --config " + cwd + "/acc.ini" + data_args +
                     " --write-draws --out " + cwd + "/f1") == 0;
  ok = ok && run_cmd(cli + " fit --from-manifest " + cwd +
                     "/f1/manifest.json --out " + cwd + "/f2") == 0;
  for (const char* f : {"summary.csv", "scores.csv", "manifest.json"})
    ok = ok && slurp(cwd + "/f1/" + f) == slurp(cwd + "/f2/" + f);

  report(9, ok, "simulate and fit reruns from a manifest are byte-identical");
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-cli-binary>\n");
    return 2;
  }
  std::string cli = argv[1];
  if (std::system("rm -rf acceptance_work && mkdir -p acceptance_work") != 0) {
    std::fprintf(stderr, "could not prepare work directory\n");
    return 2;
  }

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_6(cli);
  criterion_8();
  criterion_9(cli);
  criterion_4();
  criterion_7();
  criterion_5();

  if (g_fails) {
    std::printf("%d criteria FAILED\n", g_fails);
    return 1;
  }
  std::printf("all 9 criteria passed\n");
  return 0;
}
