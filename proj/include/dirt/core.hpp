#pragma once

// Core model types shared across the library: latent-trait hyperparameters,
// item banks for the partial credit model, latent states, and the distal
// regression coefficients.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dirt {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(double x, const std::string& name) {
  if (!std::isfinite(x)) throw std::invalid_argument(name + " must be finite");
}

/// Variance/correlation parameters of the latent-trait distributions.
/// Base means of alpha, beta and gamma are fixed at zero; mean structure
/// enters only through mu_male, covariates and cluster intercepts.
struct Hyperparameters {
  double sigma_alpha = 1.0;    // SD of actor trait
  double sigma_beta = 1.0;     // SD of partner trait
  double sigma_gamma = 1.0;    // SD of directed dyadic trait
  double rho_alpha_beta = 0.0; // within-person correlation of (alpha, beta)
  double rho_gamma = 0.0;      // within-pair correlation of the two gammas
  double mu_male = 0.0;        // actor-mean shift for male individuals

  void validate() const {
    require(sigma_alpha >= 0.0, "sigma_alpha must be >= 0");
    require(sigma_beta >= 0.0, "sigma_beta must be >= 0");
    require(sigma_gamma >= 0.0, "sigma_gamma must be >= 0");
    require(std::abs(rho_alpha_beta) <= 1.0, "|rho_alpha_beta| must be <= 1");
    require(std::abs(rho_gamma) <= 1.0, "|rho_gamma| must be <= 1");
    require_finite(mu_male, "mu_male");
  }
};

/// One partial-credit item: categories 0..m-1 and m-1 free step
/// difficulties. The zeroth step is the constant 0 and is not stored.
struct Item {
  std::string id;
  int categories = 2;             // m_i >= 2
  std::vector<double> steps;      // delta_{i,1} .. delta_{i,m-1}

  void validate() const {
    require(categories >= 2, "item " + id + ": category count must be >= 2");
    require(static_cast<int>(steps.size()) == categories - 1,
            "item " + id + ": expected " + std::to_string(categories - 1) +
                " step difficulties");
    for (double d : steps) require_finite(d, "item " + id + " step");
  }
};

struct ItemBank {
  std::vector<Item> items;

  std::size_t size() const { return items.size(); }
  const Item& operator[](std::size_t i) const { return items[i]; }

  void validate() const {
    for (const auto& it : items) it.validate();
  }

  int find(const std::string& id) const {
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].id == id) return static_cast<int>(i);
    return -1;
  }
};

/// Latent traits: alpha/beta per individual, gamma per DIRECTED dyad
/// (gamma[d] for directed dyad index d; the two directions of a pair are
/// separate entries), and optional cluster intercepts u.
struct LatentState {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> u;
};

/// Coefficients of the distal logistic regression.
/// b7..b9 are the interaction terms; with `interactions` off they are
/// pinned to zero. With `exchangeable` set, b1=b2, b3=b4, b5=b6 are
/// enforced (undirected outcome, exchangeable individuals).
struct DistalCoefficients {
  double b[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  bool interactions = true;
  bool exchangeable = false;

  void enforce_constraints() {
    if (!interactions) b[7] = b[8] = b[9] = 0.0;
    if (exchangeable) {
      b[2] = b[1];
      b[4] = b[3];
      b[6] = b[5];
    }
  }

  void validate() const {
    for (int i = 0; i < 10; ++i) require_finite(b[i], "b" + std::to_string(i));
    if (!interactions)
      require(b[7] == 0.0 && b[8] == 0.0 && b[9] == 0.0,
              "interaction coefficients must be 0 when interactions are off");
    if (exchangeable)
      require(b[1] == b[2] && b[3] == b[4] && b[5] == b[6],
              "exchangeability requires b1=b2, b3=b4, b5=b6");
  }
};

/// Covariates entering the latent-trait means: one design matrix per
/// trait (rows follow the indexing of the trait) with matching
/// coefficient vectors.
struct CovariateSpec {
  std::vector<std::string> alpha_names, beta_names, gamma_names;
  std::vector<std::vector<double>> x_alpha;  // rows = individuals
  std::vector<std::vector<double>> x_beta;   // rows = individuals
  std::vector<std::vector<double>> x_gamma;  // rows = directed dyads
  std::vector<double> c_alpha, c_beta, c_gamma;

  // Dyadic columns declared as a difference z_a - z_p of an individual
  // column; used by the collinearity guard.
  std::vector<std::string> gamma_difference_of;

  bool empty() const {
    return alpha_names.empty() && beta_names.empty() && gamma_names.empty();
  }

  void validate(std::size_t n_individuals, std::size_t n_directed) const {
    auto check = [](const std::vector<std::vector<double>>& x,
                    const std::vector<double>& c,
                    const std::vector<std::string>& names, std::size_t rows,
                    const char* what) {
      require(c.size() == names.size(),
              std::string(what) + " coefficient count mismatch");
      if (names.empty()) return;
      require(x.size() == rows, std::string(what) + " covariate row count mismatch");
      for (const auto& row : x)
        require(row.size() == c.size(),
                std::string(what) + " covariate column count mismatch");
    };
    check(x_alpha, c_alpha, alpha_names, n_individuals, "alpha");
    check(x_beta, c_beta, beta_names, n_individuals, "beta");
    check(x_gamma, c_gamma, gamma_names, n_directed, "gamma");
  }
};

/// One ordinal response: actor `a` rated partner `p` on item `item`,
/// choosing `category` in 0..m-1. `dyad` indexes the directed dyad.
struct ResponseRecord {
  int dyad = -1;
  int item = -1;
  int category = -1;
};

/// One binary distal outcome for a directed dyad.
struct DistalRecord {
  int dyad = -1;
  int outcome = 0;
};

}  // namespace dirt
