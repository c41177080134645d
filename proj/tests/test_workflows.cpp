#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirt/recovery.hpp"
#include "dirt/workflows.hpp"

using namespace dirt;

TEST_CASE("IRLS logistic regression matches an external reference fit") {
  // deterministic covariates and outcomes; reference estimates and
  // covariance diagonal frozen from an independent GLM implementation
  const int n = 30;
  std::vector<std::vector<double>> x;
  std::vector<int> y = {1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1,
                        0, 0, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1};
  for (int i = 1; i <= n; ++i)
    x.push_back({1.0, std::sin(static_cast<double>(i)),
                 std::cos(2.0 * static_cast<double>(i))});
  auto r = irls_logistic(x, y);
  REQUIRE(r.converged);
  CHECK(r.beta[0] == Catch::Approx(-0.14120309).margin(1e-6));
  CHECK(r.beta[1] == Catch::Approx(0.14378111).margin(1e-6));
  CHECK(r.beta[2] == Catch::Approx(-0.16014902).margin(1e-6));
  CHECK(r.covariance[0][0] == Catch::Approx(0.13518182).margin(1e-6));
  CHECK(r.covariance[1][1] == Catch::Approx(0.25909789).margin(1e-6));
  CHECK(r.covariance[2][2] == Catch::Approx(0.27279064).margin(1e-6));
}

TEST_CASE("IRLS flags complete separation") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    double z = i - 9.5;
    x.push_back({1.0, z});
    y.push_back(z > 0 ? 1 : 0);
  }
  auto r = irls_logistic(x, y);
  CHECK_FALSE(r.converged);
  CHECK_FALSE(r.failure.empty());
}

TEST_CASE("IRLS rejects degenerate inputs") {
  std::vector<std::vector<double>> x = {{1.0}, {1.0}};
  std::vector<int> y = {0, 1};
  CHECK_THROWS_AS(irls_logistic({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(irls_logistic(x, {0}), std::invalid_argument);
  // collinear columns: information matrix singular
  std::vector<std::vector<double>> xc;
  std::vector<int> yc;
  for (int i = 0; i < 10; ++i) {
    xc.push_back({1.0, 1.0, static_cast<double>(i % 3)});
    yc.push_back(i % 2);
  }
  auto r = irls_logistic(xc, yc);
  CHECK_FALSE(r.converged);
}

TEST_CASE("Rubin pooling matches the hand-computed oracle") {
  auto c = pool_rubin("b", {1.0, 1.4, 1.2}, {0.04, 0.05, 0.03});
  CHECK(c.estimate == Catch::Approx(1.2));
  CHECK(c.within == Catch::Approx(0.04));
  CHECK(c.between == Catch::Approx(0.04));
  CHECK(c.se == Catch::Approx(0.3055050463).margin(1e-9));
  CHECK(c.df == Catch::Approx(6.125).margin(1e-9));
  CHECK(c.q2_5 == Catch::Approx(0.4561386479).margin(1e-8));
  CHECK(c.q97_5 == Catch::Approx(1.9438613521).margin(1e-8));
}

TEST_CASE("Rubin pooling with zero between-variance uses normal quantiles") {
  auto c = pool_rubin("b", {1.0, 1.0, 1.0}, {0.04, 0.04, 0.04});
  CHECK(std::isinf(c.df));
  CHECK(c.se == Catch::Approx(0.2));
  CHECK(c.q97_5 == Catch::Approx(1.0 + 1.959964 * 0.2).margin(1e-4));
  CHECK_THROWS_AS(pool_rubin("b", {1.0}, {0.1}), std::invalid_argument);
}

TEST_CASE("distal design rows follow the spec's coefficient layout") {
  ModelSpec spec;
  spec.distal = DistalMode::sequential;
  auto row = distal_design_row(spec, 1, 2, 3, 4, 5, 6);
  REQUIRE(row.size() == 10);
  CHECK(row == std::vector<double>{1, 1, 2, 3, 4, 5, 6, 2, 12, 30});
  spec.exchangeable_distal = true;
  auto row2 = distal_design_row(spec, 1, 2, 3, 4, 5, 6);
  CHECK(row2 == std::vector<double>{1, 3, 7, 11, 2, 12, 30});
  spec.distal_interactions = false;
  CHECK(distal_design_row(spec, 1, 2, 3, 4, 5, 6).size() == 4);
  CHECK(distal_coefficient_names(spec) ==
        std::vector<std::string>{"b0", "b12", "b34", "b56"});
}

static SimulationConfig mini_distal_config() {
  SimulationConfig cfg;
  cfg.design = make_k_group_block({{3, 3}, {3, 3}});
  Item it;
  it.id = "q1";
  it.categories = 3;
  it.steps = {0.3, -0.3};
  cfg.item_bank.items.push_back(it);
  cfg.hyper = {0.9, 0.6, 0.8, -0.1, 0.4, 0.0};
  DistalCoefficients d;
  d.b[0] = -0.5;
  d.b[5] = 1.0;
  d.b[6] = 1.0;
  cfg.distal = d;
  cfg.seed = 77;
  return cfg;
}

TEST_CASE("sequential fit runs end to end and pools finite coefficients") {
  auto cfg = mini_distal_config();
  auto sim = simulate(cfg);
  auto ds = make_dataset(cfg, sim);
  ModelSpec spec;
  spec.distal = DistalMode::sequential;
  spec.distal_interactions = false;
  spec.latent_thin = 5;
  McmcConfig mc;
  mc.chains = 2;
  mc.iterations = 600;
  mc.burn_in = 300;
  mc.seed = 31;
  MiConfig mi;
  mi.m_draws = 6;
  auto res = fit_sequential_mi(ds, spec, mc, mi);
  CHECK(res.m_used >= 3);
  REQUIRE(res.coefficients.size() == 7);
  for (const auto& c : res.coefficients) {
    CHECK(std::isfinite(c.estimate));
    CHECK(c.se > 0.0);
  }
  CHECK(res.coefficients[0].name == "b0");
}

TEST_CASE("sequential fit guards its preconditions") {
  auto cfg = mini_distal_config();
  auto sim = simulate(cfg);
  auto ds = make_dataset(cfg, sim);
  ModelSpec spec;
  spec.distal = DistalMode::sequential;
  McmcConfig mc;
  mc.chains = 2;
  mc.iterations = 60;
  mc.burn_in = 30;
  MiConfig mi;
  mi.m_draws = 1;
  CHECK_THROWS_AS(fit_sequential_mi(ds, spec, mc, mi), std::invalid_argument);
  mi.m_draws = 500;  // more than can be retained
  CHECK_THROWS_AS(fit_sequential_mi(ds, spec, mc, mi), std::invalid_argument);
  ModelSpec wrong;
  wrong.distal = DistalMode::joint;
  MiConfig mi2;
  CHECK_THROWS_AS(fit_sequential_mi(ds, wrong, mc, mi2), std::invalid_argument);
}

TEST_CASE("joint fit summarizes the distal coefficients") {
  auto cfg = mini_distal_config();
  auto sim = simulate(cfg);
  auto ds = make_dataset(cfg, sim);
  ModelSpec spec;
  spec.distal = DistalMode::joint;
  spec.distal_interactions = false;
  McmcConfig mc;
  mc.chains = 2;
  mc.iterations = 400;
  mc.burn_in = 200;
  mc.seed = 11;
  auto res = fit_joint(ds, spec, mc);
  CHECK(res.summary.has("b0"));
  CHECK(res.summary.has("b6"));
  CHECK_FALSE(res.summary.has("b7"));
}
