#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dirt/simulate.hpp"

using namespace dirt;

static SimulationConfig basic_config() {
  SimulationConfig cfg;
  cfg.design = make_round_robin(6);
  Item it;
  it.id = "q1";
  it.categories = 3;
  it.steps = {0.5, -0.2};
  cfg.item_bank.items.push_back(it);
  cfg.hyper = {1.03, 0.63, 0.98, -0.06, 0.46, 0.0};
  cfg.seed = 42;
  return cfg;
}

TEST_CASE("same seed gives identical data, different streams differ") {
  auto cfg = basic_config();
  auto a = simulate(cfg, 0);
  auto b = simulate(cfg, 0);
  REQUIRE(a.responses.size() == b.responses.size());
  for (std::size_t i = 0; i < a.responses.size(); ++i)
    CHECK(a.responses[i].category == b.responses[i].category);
  auto c = simulate(cfg, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.responses.size(); ++i)
    any_diff = any_diff || a.responses[i].category != c.responses[i].category;
  CHECK(any_diff);
}

TEST_CASE("one response per dyad-item pair") {
  auto cfg = basic_config();
  auto res = simulate(cfg);
  CHECK(res.responses.size() ==
        static_cast<std::size_t>(cfg.design.n_directed()) *
            cfg.item_bank.size());
  CHECK(res.latents.alpha.size() == 6);
  CHECK(res.latents.gamma.size() ==
        static_cast<std::size_t>(cfg.design.n_directed()));
}

TEST_CASE("trait moments match the hyperparameters at large n") {
  Hyperparameters h{1.03, 0.63, 0.98, -0.06, 0.46, 0.0};
  Rng rng(5);
  const int n = 100000;
  auto draws = draw_individual_traits(h, n, rng);
  double ma = 0, mb = 0;
  for (auto& [a, b] : draws) ma += a, mb += b;
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cab = 0;
  for (auto& [a, b] : draws) {
    va += (a - ma) * (a - ma);
    vb += (b - mb) * (b - mb);
    cab += (a - ma) * (b - mb);
  }
  va /= n - 1;
  vb /= n - 1;
  cab /= n - 1;
  CHECK(std::sqrt(va) == Catch::Approx(1.03).margin(0.02));
  CHECK(std::sqrt(vb) == Catch::Approx(0.63).margin(0.02));
  CHECK(cab / std::sqrt(va * vb) == Catch::Approx(-0.06).margin(0.02));

  auto gams = draw_dyad_traits(h, n, rng);
  double cg = 0, vg1 = 0, vg2 = 0, m1 = 0, m2 = 0;
  for (auto& [g1, g2] : gams) m1 += g1, m2 += g2;
  m1 /= n;
  m2 /= n;
  for (auto& [g1, g2] : gams) {
    cg += (g1 - m1) * (g2 - m2);
    vg1 += (g1 - m1) * (g1 - m1);
    vg2 += (g2 - m2) * (g2 - m2);
  }
  CHECK(cg / std::sqrt(vg1 * vg2) == Catch::Approx(0.46).margin(0.02));
}

TEST_CASE("gender shift moves the alpha mean") {
  Hyperparameters h{1.0, 1.0, 1.0, 0.0, 0.0, 0.8};
  std::vector<int> genders(40000);
  for (std::size_t i = 0; i < genders.size(); ++i) genders[i] = i % 2;
  Rng rng(6);
  auto draws =
      draw_individual_traits(h, static_cast<int>(genders.size()), rng, &genders);
  double m0 = 0, m1 = 0;
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (genders[i]) {
      m1 += draws[i].first;
      ++n1;
    } else {
      m0 += draws[i].first;
      ++n0;
    }
  }
  CHECK(m1 / n1 - m0 / n0 == Catch::Approx(0.8).margin(0.05));
}

TEST_CASE("degenerate variances collapse the traits") {
  Hyperparameters h{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  Rng rng(3);
  auto draws = draw_individual_traits(h, 10, rng);
  for (auto& [a, b] : draws) {
    CHECK(a == 0.0);
    CHECK(b == 0.0);
  }
}

TEST_CASE("observed category distribution matches the integrated one") {
  // With all trait SDs set, theta ~ N(0, v); integrate the PCM category
  // probabilities over theta by quadrature and compare to simulation.
  auto cfg = basic_config();
  cfg.design = make_round_robin(40);  // 1560 dyads
  auto res = simulate(cfg, 2);
  const auto& steps = cfg.item_bank[0].steps;
  double var = theoretical_covariance(cfg.hyper, CovPattern::variance);
  double sd = std::sqrt(var);
  // Gauss-Hermite-like simple quadrature over a wide grid
  std::vector<double> integrated(3, 0.0);
  const int grid = 4001;
  double total = 0.0;
  for (int g = 0; g < grid; ++g) {
    double z = -6.0 + 12.0 * g / (grid - 1);
    double w = std::exp(-0.5 * z * z);
    auto p = pcm_category_probs(z * sd, steps);
    for (int j = 0; j < 3; ++j) integrated[j] += w * p[j];
    total += w;
  }
  for (auto& v : integrated) v /= total;
  std::vector<double> observed(3, 0.0);
  for (const auto& r : res.responses) observed[r.category] += 1.0;
  double n = static_cast<double>(res.responses.size());
  for (int j = 0; j < 3; ++j) {
    double se = std::sqrt(integrated[j] * (1 - integrated[j]) / n);
    // responses within a dyad/person are correlated; allow a wide band
    CHECK(std::abs(observed[j] / n - integrated[j]) < 6 * se + 0.01);
  }
}

TEST_CASE("distal simulation mean matches the intercept-only model") {
  auto cfg = basic_config();
  cfg.design = make_round_robin(60);
  DistalCoefficients d;
  d.b[0] = -0.88;
  cfg.distal = d;
  auto res = simulate(cfg, 7);
  double mean = 0.0;
  for (const auto& r : res.distal) mean += r.outcome;
  mean /= res.distal.size();
  double p = inv_logit(-0.88);
  double se = std::sqrt(p * (1 - p) / res.distal.size());
  CHECK(std::abs(mean - p) < 3 * se);
}

TEST_CASE("csv writers emit one row per record plus header") {
  auto cfg = basic_config();
  cfg.cluster_sd = 0.5;
  for (int i = 0; i < cfg.design.n_individuals(); ++i)
    cfg.design.individual(i).cluster = 0;
  DistalCoefficients d;
  cfg.distal = d;
  auto res = simulate(cfg, 0);
  write_responses_csv(cfg.design, cfg.item_bank, res.responses, "sim_r.csv");
  write_distal_csv(cfg.design, res.distal, "sim_d.csv");
  write_truth_csv(cfg, "sim_t.csv");
  write_latents_csv(cfg.design, res.latents, "sim_l.csv");
  auto count_lines = [](const char* p) {
    std::ifstream f(p);
    std::string line;
    int n = 0;
    while (std::getline(f, line)) ++n;
    return n;
  };
  CHECK(count_lines("sim_r.csv") == 1 + static_cast<int>(res.responses.size()));
  CHECK(count_lines("sim_d.csv") == 1 + static_cast<int>(res.distal.size()));
  // latents: 2 rows per individual + 1 per directed dyad + clusters
  CHECK(count_lines("sim_l.csv") ==
        1 + 2 * cfg.design.n_individuals() + cfg.design.n_directed() + 1);
  for (const char* p : {"sim_r.csv", "sim_d.csv", "sim_t.csv", "sim_l.csv"})
    std::remove(p);
}
