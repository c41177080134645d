#pragma once

// Dyadic design graphs: construction of the standard design families,
// identification checks based on covariance-pattern counts, and the
// reduced-form covariance algebra linking hyperparameters to observable
// second moments of the composite trait.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dirt/core.hpp"
#include "dirt/csv.hpp"

namespace dirt {

struct Individual {
  std::string id;
  int group = -1;    // -1 when unlabeled
  int block = -1;    // block within group (0/1) for block designs
  int gender = -1;   // -1 unknown, 0 female, 1 male
  int cluster = -1;  // -1 when unlabeled
};

/// One ordered (actor, partner) pair. `undirected` is the contiguous id of
/// the unordered pair; `slot` is 1 for the first direction registered and
/// 2 for its reversal.
struct DirectedDyad {
  int actor = -1;
  int partner = -1;
  int undirected = -1;
  int slot = 0;
};

class DyadDesign {
 public:
  int add_individual(Individual ind) {
    int idx = static_cast<int>(individuals_.size());
    id_index_[ind.id] = idx;
    individuals_.push_back(std::move(ind));
    out_.emplace_back();
    in_.emplace_back();
    return idx;
  }

  int add_directed_dyad(int actor, int partner) {
    require(actor != partner, "actor and partner must differ");
    require(actor >= 0 && actor < n_individuals() && partner >= 0 &&
                partner < n_individuals(),
            "dyad references unknown individual");
    require(dyad_index(actor, partner) < 0,
            "duplicate directed dyad (" + individuals_[actor].id + "," +
                individuals_[partner].id + ")");
    auto key = unordered_key(actor, partner);
    auto it = undirected_index_.find(key);
    int uid;
    int slot;
    if (it == undirected_index_.end()) {
      uid = static_cast<int>(undirected_index_.size());
      undirected_index_[key] = uid;
      slot = 1;
    } else {
      uid = it->second;
      slot = 2;
    }
    int d = static_cast<int>(dyads_.size());
    dyads_.push_back({actor, partner, uid, slot});
    dyad_lookup_[{actor, partner}] = d;
    out_[actor].push_back(d);
    in_[partner].push_back(d);
    return d;
  }

  int n_individuals() const { return static_cast<int>(individuals_.size()); }
  int n_directed() const { return static_cast<int>(dyads_.size()); }
  int n_undirected() const { return static_cast<int>(undirected_index_.size()); }

  const Individual& individual(int i) const { return individuals_[i]; }
  Individual& individual(int i) { return individuals_[i]; }
  const DirectedDyad& dyad(int d) const { return dyads_[d]; }
  const std::vector<int>& dyads_as_actor(int i) const { return out_[i]; }
  const std::vector<int>& dyads_as_partner(int i) const { return in_[i]; }

  int find_individual(const std::string& id) const {
    auto it = id_index_.find(id);
    return it == id_index_.end() ? -1 : it->second;
  }

  /// Index of directed dyad (actor, partner), or -1.
  int dyad_index(int actor, int partner) const {
    auto it = dyad_lookup_.find({actor, partner});
    return it == dyad_lookup_.end() ? -1 : it->second;
  }

  /// Index of the reverse dyad of d, or -1 when absent.
  int reverse_dyad(int d) const {
    return dyad_index(dyads_[d].partner, dyads_[d].actor);
  }

  bool has_gender_labels() const {
    for (const auto& ind : individuals_)
      if (ind.gender >= 0) return true;
    return false;
  }
  bool has_cluster_labels() const {
    for (const auto& ind : individuals_)
      if (ind.cluster >= 0) return true;
    return false;
  }
  bool has_block_labels() const {
    for (const auto& ind : individuals_)
      if (ind.block >= 0) return true;
    return false;
  }

  int n_clusters() const {
    int m = 0;
    for (const auto& ind : individuals_) m = std::max(m, ind.cluster + 1);
    return m;
  }

 private:
  static std::pair<int, int> unordered_key(int a, int b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
  }

  std::vector<Individual> individuals_;
  std::vector<DirectedDyad> dyads_;
  std::map<std::string, int> id_index_;
  std::map<std::pair<int, int>, int> undirected_index_;
  std::map<std::pair<int, int>, int> dyad_lookup_;
  std::vector<std::vector<int>> out_, in_;
};

// ---------------------------------------------------------------------------
// Design family builders

/// Round robin over n individuals: all n(n-1) ordered pairs.
inline DyadDesign make_round_robin(int n, int group = -1,
                                   const std::string& id_prefix = "p") {
  require(n >= 2, "round robin needs n >= 2");
  DyadDesign d;
  int base = 0;
  (void)base;
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) {
    Individual ind;
    ind.id = id_prefix + std::to_string(i + 1);
    ind.group = group;
    ids.push_back(d.add_individual(ind));
  }
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p)
      if (a != p) d.add_directed_dyad(ids[a], ids[p]);
  return d;
}

namespace detail {

inline void append_block_group(DyadDesign& d, int p, int q, int group,
                               const std::string& id_prefix,
                               bool gender_from_block) {
  require(p >= 1 && q >= 1, "block sizes must be >= 1");
  std::vector<int> left, right;
  for (int i = 0; i < p; ++i) {
    Individual ind;
    ind.id = id_prefix + "a" + std::to_string(i + 1);
    ind.group = group;
    ind.block = 0;
    if (gender_from_block) ind.gender = 0;
    left.push_back(d.add_individual(ind));
  }
  for (int i = 0; i < q; ++i) {
    Individual ind;
    ind.id = id_prefix + "b" + std::to_string(i + 1);
    ind.group = group;
    ind.block = 1;
    if (gender_from_block) ind.gender = 1;
    right.push_back(d.add_individual(ind));
  }
  for (int a : left)
    for (int b : right) {
      d.add_directed_dyad(a, b);
      d.add_directed_dyad(b, a);
    }
}

inline void append_round_robin_group(DyadDesign& d, int n, int group,
                                     const std::string& id_prefix) {
  require(n >= 2, "round robin group needs n >= 2");
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) {
    Individual ind;
    ind.id = id_prefix + std::to_string(i + 1);
    ind.group = group;
    ids.push_back(d.add_individual(ind));
  }
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p)
      if (a != p) d.add_directed_dyad(ids[a], ids[p]);
}

}  // namespace detail

/// Two-block (bipartite) design: pq undirected, 2pq directed dyads.
inline DyadDesign make_block(int p, int q, bool gender_from_block = false) {
  DyadDesign d;
  detail::append_block_group(d, p, q, -1, "", gender_from_block);
  return d;
}

/// k independent round-robin groups.
inline DyadDesign make_k_group_round_robin(const std::vector<int>& sizes) {
  require(!sizes.empty(), "need at least one group");
  DyadDesign d;
  for (std::size_t g = 0; g < sizes.size(); ++g)
    detail::append_round_robin_group(d, sizes[g], static_cast<int>(g),
                                     "g" + std::to_string(g + 1) + "p");
  return d;
}

/// k independent block groups with per-group block sizes (p, q).
inline DyadDesign make_k_group_block(
    const std::vector<std::pair<int, int>>& sizes,
    bool gender_from_block = false) {
  require(!sizes.empty(), "need at least one group");
  DyadDesign d;
  for (std::size_t g = 0; g < sizes.size(); ++g)
    detail::append_block_group(d, sizes[g].first, sizes[g].second,
                               static_cast<int>(g),
                               "g" + std::to_string(g + 1),
                               gender_from_block);
  return d;
}

enum class GroupKind { round_robin, block };

/// Dispatching form: for round_robin `sizes` are group sizes, for block
/// they are flattened (p1, q1, p2, q2, ...).
inline DyadDesign make_k_group(GroupKind kind, const std::vector<int>& sizes) {
  if (kind == GroupKind::round_robin) return make_k_group_round_robin(sizes);
  require(sizes.size() % 2 == 0, "block sizes must come in (p, q) pairs");
  std::vector<std::pair<int, int>> pq;
  for (std::size_t i = 0; i < sizes.size(); i += 2)
    pq.emplace_back(sizes[i], sizes[i + 1]);
  return make_k_group_block(pq);
}

// ---------------------------------------------------------------------------
// Identification

enum class IdStatus { identified, not_identified, undefined };

inline const char* to_string(IdStatus s) {
  switch (s) {
    case IdStatus::identified: return "identified";
    case IdStatus::not_identified: return "not-identified";
    default: return "undefined";
  }
}

/// Evidence counts for the four covariance patterns plus per-parameter
/// identification flags.
struct IdentificationReport {
  long long reciprocal_pairs = 0;       // (a,p) with (p,a)
  long long shared_actor_pairs = 0;     // (a,p), (a,q)
  long long shared_partner_pairs = 0;   // (a,p), (b,p)
  long long actor_as_partner_pairs = 0; // (a,p), (b,a), b != p

  IdStatus composite_variance = IdStatus::identified;
  IdStatus sigma_alpha2 = IdStatus::not_identified;
  IdStatus sigma_beta2 = IdStatus::not_identified;
  IdStatus sigma_gamma2 = IdStatus::not_identified;
  IdStatus rho_alpha_beta = IdStatus::not_identified;
  IdStatus rho_gamma = IdStatus::not_identified;

  bool roles_switch = false;    // some individual acts in both roles
  bool distinguishable = false; // advisory: block labels present

  bool all_identified() const {
    return sigma_alpha2 == IdStatus::identified &&
           sigma_beta2 == IdStatus::identified &&
           sigma_gamma2 == IdStatus::identified &&
           rho_alpha_beta == IdStatus::identified &&
           rho_gamma == IdStatus::identified;
  }

  std::vector<std::string> missing_patterns() const {
    std::vector<std::string> out;
    if (shared_actor_pairs == 0) out.push_back("shared-actor (a,p)/(a,q)");
    if (shared_partner_pairs == 0) out.push_back("shared-partner (a,p)/(b,p)");
    if (actor_as_partner_pairs == 0)
      out.push_back("actor-as-partner (a,p)/(b,a)");
    if (reciprocal_pairs == 0) out.push_back("reciprocal (a,p)/(p,a)");
    return out;
  }
};

/// Decides identifiability of the five variance-covariance parameters by
/// counting, over per-individual adjacency lists, which covariance
/// patterns the design realizes.
inline IdentificationReport check_identification(const DyadDesign& d) {
  IdentificationReport r;
  r.distinguishable = d.has_block_labels();

  for (int i = 0; i < d.n_individuals(); ++i) {
    long long od = static_cast<long long>(d.dyads_as_actor(i).size());
    long long in = static_cast<long long>(d.dyads_as_partner(i).size());
    r.shared_actor_pairs += od * (od - 1) / 2;
    r.shared_partner_pairs += in * (in - 1) / 2;
    if (od > 0 && in > 0) r.roles_switch = true;
    long long recip_i = 0;
    for (int dd : d.dyads_as_actor(i))
      if (d.reverse_dyad(dd) >= 0) ++recip_i;
    r.reciprocal_pairs += recip_i;  // counted once per direction; halved below
    r.actor_as_partner_pairs += od * in - recip_i;
  }
  r.reciprocal_pairs /= 2;

  r.sigma_alpha2 = r.shared_actor_pairs > 0 ? IdStatus::identified
                                            : IdStatus::not_identified;
  r.sigma_beta2 = r.shared_partner_pairs > 0 ? IdStatus::identified
                                             : IdStatus::not_identified;
  r.sigma_gamma2 = (r.sigma_alpha2 == IdStatus::identified &&
                    r.sigma_beta2 == IdStatus::identified)
                       ? IdStatus::identified
                       : IdStatus::not_identified;
  if (!r.roles_switch) {
    // actors and partners never switch roles: the reciprocity parameters
    // do not exist in the reduced form
    r.rho_alpha_beta = IdStatus::undefined;
    r.rho_gamma = IdStatus::undefined;
  } else {
    r.rho_alpha_beta = (r.actor_as_partner_pairs > 0 &&
                        r.sigma_alpha2 == IdStatus::identified &&
                        r.sigma_beta2 == IdStatus::identified)
                           ? IdStatus::identified
                           : IdStatus::not_identified;
    r.rho_gamma = (r.reciprocal_pairs > 0 &&
                   r.rho_alpha_beta == IdStatus::identified &&
                   r.sigma_gamma2 == IdStatus::identified)
                      ? IdStatus::identified
                      : IdStatus::not_identified;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reduced-form covariance algebra

enum class CovPattern {
  variance,          // Var(theta_ap)
  reciprocal,        // cov(theta_ap, theta_pa)
  shared_actor,      // cov(theta_ap, theta_aq)
  shared_partner,    // cov(theta_ap, theta_bp)
  actor_as_partner,  // cov(theta_ap, theta_ba)
  disjoint           // no shared individuals
};

inline double theoretical_covariance(const Hyperparameters& h, CovPattern p) {
  h.validate();
  const double va = h.sigma_alpha * h.sigma_alpha;
  const double vb = h.sigma_beta * h.sigma_beta;
  const double vg = h.sigma_gamma * h.sigma_gamma;
  switch (p) {
    case CovPattern::variance: return va + vb + vg;
    case CovPattern::reciprocal:
      return 2.0 * h.rho_alpha_beta * h.sigma_alpha * h.sigma_beta +
             h.rho_gamma * vg;
    case CovPattern::shared_actor: return va;
    case CovPattern::shared_partner: return vb;
    case CovPattern::actor_as_partner:
      return h.rho_alpha_beta * h.sigma_alpha * h.sigma_beta;
    case CovPattern::disjoint: return 0.0;
  }
  throw std::invalid_argument("unknown covariance pattern");
}

/// The five reduced-form parameters of the composite-trait covariance
/// structure.
struct ReducedForm {
  double variance = 0.0;
  double reciprocal = 0.0;
  double shared_actor = 0.0;
  double shared_partner = 0.0;
  double actor_as_partner = 0.0;
};

inline ReducedForm reduced_form(const Hyperparameters& h) {
  return {theoretical_covariance(h, CovPattern::variance),
          theoretical_covariance(h, CovPattern::reciprocal),
          theoretical_covariance(h, CovPattern::shared_actor),
          theoretical_covariance(h, CovPattern::shared_partner),
          theoretical_covariance(h, CovPattern::actor_as_partner)};
}

struct SolvedHyperparameters {
  Hyperparameters hyper;
  bool rho_alpha_beta_indeterminate = false;  // 0/0 (a zero variance)
  bool rho_gamma_indeterminate = false;
};

/// Inverts the five reduced-form equations. Throws std::domain_error
/// naming the violated constraint when the values are infeasible;
/// correlations that reduce to 0/0 are reported as indeterminate.
inline SolvedHyperparameters solve_hyperparameters(const ReducedForm& rf) {
  if (rf.shared_actor < 0.0)
    throw std::domain_error("shared-actor covariance (= sigma_alpha^2) is negative");
  if (rf.shared_partner < 0.0)
    throw std::domain_error("shared-partner covariance (= sigma_beta^2) is negative");
  const double vg = rf.variance - rf.shared_actor - rf.shared_partner;
  const double tol = 1e-9 * std::max(1.0, std::abs(rf.variance));
  if (vg < -tol)
    throw std::domain_error("implied sigma_gamma^2 is negative");

  SolvedHyperparameters s;
  s.hyper.sigma_alpha = std::sqrt(rf.shared_actor);
  s.hyper.sigma_beta = std::sqrt(rf.shared_partner);
  s.hyper.sigma_gamma = std::sqrt(std::max(vg, 0.0));

  const double denom_ab = s.hyper.sigma_alpha * s.hyper.sigma_beta;
  if (denom_ab == 0.0) {
    if (std::abs(rf.actor_as_partner) > tol)
      throw std::domain_error(
          "actor-as-partner covariance nonzero with a zero individual variance");
    s.hyper.rho_alpha_beta = 0.0;
    s.rho_alpha_beta_indeterminate = true;
  } else {
    s.hyper.rho_alpha_beta = rf.actor_as_partner / denom_ab;
  }

  const double vg_eff = s.hyper.sigma_gamma * s.hyper.sigma_gamma;
  const double num_g = rf.reciprocal - 2.0 * rf.actor_as_partner;
  if (vg_eff == 0.0) {
    if (std::abs(num_g) > tol)
      throw std::domain_error(
          "reciprocal covariance inconsistent with zero dyadic variance");
    s.hyper.rho_gamma = 0.0;
    s.rho_gamma_indeterminate = true;
  } else {
    s.hyper.rho_gamma = num_g / vg_eff;
  }

  auto check_rho = [](double& rho, const char* name) {
    if (std::abs(rho) > 1.0 + 1e-9)
      throw std::domain_error(std::string("implied |") + name + "| exceeds 1");
    rho = std::clamp(rho, -1.0, 1.0);
  };
  check_rho(s.hyper.rho_alpha_beta, "rho_alpha_beta");
  check_rho(s.hyper.rho_gamma, "rho_gamma");
  return s;
}

// ---------------------------------------------------------------------------
// CSV edge-list import/export

/// Reads a directed-dyad edge list: actor_id, partner_id and optional
/// group_id / cluster_id columns; one row per directed dyad.
inline DyadDesign read_design_csv(const std::string& path) {
  auto t = csv::read_file(path);
  int ca = t.require_column("actor_id");
  int cp = t.require_column("partner_id");
  int cg = t.column("group_id");
  int cc = t.column("cluster_id");

  DyadDesign d;
  auto intern = [&](const std::string& id, int row) {
    int i = d.find_individual(id);
    if (i < 0) {
      Individual ind;
      ind.id = id;
      i = d.add_individual(ind);
    }
    if (cg >= 0 && !t.rows[row][cg].empty())
      d.individual(i).group = static_cast<int>(
          csv::parse_long(t.rows[row][cg], path + ": group_id"));
    if (cc >= 0 && !t.rows[row][cc].empty())
      d.individual(i).cluster = static_cast<int>(
          csv::parse_long(t.rows[row][cc], path + ": cluster_id"));
    return i;
  };
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = std::to_string(r + 2);
    try {
      int a = intern(t.rows[r][ca], static_cast<int>(r));
      int p = intern(t.rows[r][cp], static_cast<int>(r));
      d.add_directed_dyad(a, p);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + line + ": " + e.what());
    }
  }
  require(d.n_directed() > 0, path + ": no dyads");
  return d;
}

inline void write_design_csv(const DyadDesign& d, const std::string& path) {
  csv::Writer w(path);
  bool groups = false, clusters = false;
  for (int i = 0; i < d.n_individuals(); ++i) {
    groups = groups || d.individual(i).group >= 0;
    clusters = clusters || d.individual(i).cluster >= 0;
  }
  std::vector<std::string> header = {"actor_id", "partner_id"};
  if (groups) header.push_back("group_id");
  if (clusters) header.push_back("cluster_id");
  w.row(header);
  for (int k = 0; k < d.n_directed(); ++k) {
    const auto& dd = d.dyad(k);
    std::vector<std::string> row = {d.individual(dd.actor).id,
                                    d.individual(dd.partner).id};
    if (groups) row.push_back(std::to_string(d.individual(dd.actor).group));
    if (clusters) row.push_back(std::to_string(d.individual(dd.actor).cluster));
    w.row(row);
  }
}

}  // namespace dirt
