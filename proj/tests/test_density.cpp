#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dirt/density.hpp"
#include "dirt/simulate.hpp"

using namespace dirt;

static Dataset small_dataset(bool with_distal) {
  SimulationConfig cfg;
  cfg.design = make_round_robin(4);
  Item it;
  it.id = "q1";
  it.categories = 3;
  it.steps = {0.5, -0.2};
  cfg.item_bank.items.push_back(it);
  Item it2;
  it2.id = "q2";
  it2.categories = 4;
  it2.steps = {-0.5, 0.1, 0.8};
  cfg.item_bank.items.push_back(it2);
  cfg.hyper = {1.0, 0.8, 0.9, -0.1, 0.4, 0.0};
  cfg.seed = 17;
  if (with_distal) {
    DistalCoefficients d;
    d.b[0] = -0.5;
    d.b[1] = 0.3;
    d.b[5] = 0.6;
    d.b[7] = 0.2;
    cfg.distal = d;
  }
  auto sim = simulate(cfg);
  Dataset ds;
  ds.design = cfg.design;
  ds.items = cfg.item_bank;
  ds.responses = sim.responses;
  ds.distal = sim.distal;
  return ds;
}

static void randomize_state(ModelState& st, std::mt19937_64& gen,
                            const ModelSpec& spec) {
  std::uniform_real_distribution<double> us(0.4, 1.6);
  std::uniform_real_distribution<double> ur(-0.6, 0.6);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  st.hyper.sigma_alpha = us(gen);
  st.hyper.sigma_beta = us(gen);
  st.hyper.sigma_gamma = us(gen);
  st.hyper.rho_alpha_beta = ur(gen);
  st.hyper.rho_gamma = ur(gen);
  for (auto& item : st.delta)
    for (auto& d : item) d = ux(gen);
  for (auto& v : st.lat.alpha) v = ux(gen);
  for (auto& v : st.lat.beta) v = ux(gen);
  for (auto& v : st.lat.gamma) v = ux(gen);
  if (spec.distal == DistalMode::joint) {
    for (int i = 0; i < 10; ++i) st.distal.b[i] = 0.3 * ux(gen);
    st.distal.enforce_constraints();
  }
}

TEST_CASE("single response: density equals the sum of its terms") {
  Dataset ds;
  ds.design = DyadDesign();
  int a = ds.design.add_individual({"a"});
  int b = ds.design.add_individual({"b"});
  int d01 = ds.design.add_directed_dyad(a, b);
  Item it;
  it.id = "q1";
  it.categories = 3;
  it.steps = {0.5, -0.2};
  ds.items.items.push_back(it);
  ds.responses.push_back({d01, 0, 2});

  ModelSpec spec;
  auto st = init_state(ds, spec);
  st.lat.alpha = {0.3, -0.1};
  st.lat.beta = {0.2, 0.4};
  st.lat.gamma = {0.6};
  st.delta[0] = {0.5, -0.2};

  double expect = pcm_log_likelihood(2, 0.3 + 0.4 + 0.6, st.delta[0]);
  const auto& h = st.hyper;
  for (int i = 0; i < 2; ++i)
    expect += dirt::detail::bivariate_normal_logpdf(
        st.lat.alpha[i], st.lat.beta[i], h.sigma_alpha, h.sigma_beta,
        h.rho_alpha_beta);
  expect += dirt::detail::normal_logpdf(0.6, h.sigma_gamma);  // unpaired gamma
  CHECK(joint_log_density(st, ds, spec) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("density is -inf outside the prior support") {
  auto ds = small_dataset(false);
  ModelSpec spec;
  auto st = init_state(ds, spec);
  st.hyper.sigma_alpha = -0.1;
  CHECK(joint_log_density(st, ds, spec) == kNegInf);
  st.hyper.sigma_alpha = 1.0;
  st.hyper.rho_gamma = 1.4;
  CHECK(joint_log_density(st, ds, spec) == kNegInf);
  spec.sigma_upper_bound = 2.0;
  st.hyper.rho_gamma = 0.0;
  st.hyper.sigma_beta = 3.0;
  CHECK(joint_log_density(st, ds, spec) == kNegInf);
}

TEST_CASE("pinned-zero sigmas drop their latent prior terms") {
  auto ds = small_dataset(false);
  ModelSpec spec;
  spec.fix_sigma_alpha = 0.0;
  spec.fix_sigma_beta = 0.0;
  spec.fix_sigma_gamma = 1.0;
  auto st = init_state(ds, spec);
  CHECK(st.hyper.sigma_alpha == 0.0);
  double lp = joint_log_density(st, ds, spec);
  CHECK(std::isfinite(lp));
}

TEST_CASE("finite-difference gradient audit at random interior points") {
  for (bool with_distal : {false, true}) {
    auto ds = small_dataset(with_distal);
    ModelSpec spec;
    spec.distal = with_distal ? DistalMode::joint : DistalMode::none;
    std::mt19937_64 gen(31);
    for (int point = 0; point < 10; ++point) {
      auto st = init_state(ds, spec);
      randomize_state(st, gen, spec);
      auto grad = pack_grad(joint_log_density_grad(st, ds, spec), ds, spec);
      auto x = pack_state(st, ds, spec);
      REQUIRE(grad.size() == x.size());
      const double h = 1e-5;
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        ModelState sp = st, sm = st;
        unpack_state(sp, ds, spec, xp);
        unpack_state(sm, ds, spec, xm);
        double fd = (joint_log_density(sp, ds, spec) -
                     joint_log_density(sm, ds, spec)) /
                    (2 * h);
        double denom = std::max(1.0, std::abs(fd));
        REQUIRE(std::abs(grad[i] - fd) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("gradient with exchangeable distal ties coefficient partials") {
  auto ds = small_dataset(true);
  ModelSpec spec;
  spec.distal = DistalMode::joint;
  spec.exchangeable_distal = true;
  std::mt19937_64 gen(5);
  auto st = init_state(ds, spec);
  randomize_state(st, gen, spec);
  st.distal.exchangeable = true;
  st.distal.enforce_constraints();
  auto grad = pack_grad(joint_log_density_grad(st, ds, spec), ds, spec);
  auto x = pack_state(st, ds, spec);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    ModelState sp = st, sm = st;
    unpack_state(sp, ds, spec, xp);
    unpack_state(sm, ds, spec, xm);
    double fd =
        (joint_log_density(sp, ds, spec) - joint_log_density(sm, ds, spec)) /
        (2 * h);
    REQUIRE(std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-4);
  }
}

TEST_CASE("pack/unpack round trip and layout naming") {
  auto ds = small_dataset(true);
  ModelSpec spec;
  spec.distal = DistalMode::joint;
  auto layout = make_layout(ds, spec);
  auto st = init_state(ds, spec);
  std::mt19937_64 gen(9);
  randomize_state(st, gen, spec);
  auto x = pack_state(st, ds, spec);
  REQUIRE(x.size() == layout.size());
  ModelState st2 = init_state(ds, spec);
  unpack_state(st2, ds, spec, x);
  auto x2 = pack_state(st2, ds, spec);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == x2[i]);

  // reported prefix: hyperparameters first, then item steps, then b
  CHECK(layout.names[0] == "sigma_alpha");
  CHECK(layout.names[4] == "rho_gamma");
  CHECK(layout.names[5] == "delta_q1_1");
  bool has_b0 = false;
  for (std::size_t i = 0; i < layout.n_reported(); ++i)
    has_b0 = has_b0 || layout.names[i] == "b0";
  CHECK(has_b0);
}

TEST_CASE("gender mean enters both theta and the distal predictor") {
  auto ds = small_dataset(true);
  for (int i = 0; i < ds.design.n_individuals(); ++i)
    ds.design.individual(i).gender = i % 2;
  ModelSpec spec;
  spec.distal = DistalMode::joint;
  spec.gender_mean = true;
  auto st = init_state(ds, spec);
  st.hyper.mu_male = 0.7;
  // individual 1 is male: its effective alpha carries the shift
  CHECK(effective_alpha(st, ds, spec, 1) == Catch::Approx(0.7));
  CHECK(effective_alpha(st, ds, spec, 0) == Catch::Approx(0.0));
  int d10 = ds.design.dyad_index(1, 0);
  CHECK(theta_for_dyad(st, ds, spec, d10) == Catch::Approx(0.7));
  DistalRecord dr{d10, 1};
  st.distal.b[1] = 1.0;  // eta = b1 * alpha_actor
  for (int i = 2; i < 10; ++i) st.distal.b[i] = 0.0;
  st.distal.b[0] = 0.0;
  CHECK(distal_eta(st, ds, spec, dr) == Catch::Approx(0.7));
}
