#pragma once

// Long-format dataset container and CSV ingestion. Responses and distal
// outcomes are stored against directed-dyad indices of the design;
// records absent from the files are simply treated as missing.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dirt/core.hpp"
#include "dirt/csv.hpp"
#include "dirt/design.hpp"

namespace dirt {

struct Dataset {
  DyadDesign design;
  ItemBank items;
  std::vector<ResponseRecord> responses;
  std::vector<DistalRecord> distal;
  CovariateSpec covariates;

  void validate() const {
    items.validate();
    for (const auto& r : responses) {
      require(r.dyad >= 0 && r.dyad < design.n_directed(),
              "response references unknown dyad");
      require(r.item >= 0 && r.item < static_cast<int>(items.size()),
              "response references unknown item");
      require(r.category >= 0 && r.category < items[r.item].categories,
              "response category out of range for item " + items[r.item].id);
    }
    for (const auto& d : distal)
      require(d.dyad >= 0 && d.dyad < design.n_directed(),
              "distal record references unknown dyad");
    covariates.validate(design.n_individuals(), design.n_directed());
  }
};

/// Optional category remap applied at ingestion (e.g. collapsing a
/// 10-point scale to 5). Two-column CSV: from,to.
inline std::map<long, long> read_remap_csv(const std::string& path) {
  auto t = csv::read_file(path);
  int cf = t.require_column("from");
  int ct = t.require_column("to");
  std::map<long, long> m;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    m[csv::parse_long(t.rows[r][cf], path)] =
        csv::parse_long(t.rows[r][ct], path);
  }
  return m;
}

struct IngestOptions {
  std::optional<std::map<long, long>> remap;
  // When an invalid row is dropped, also drop the partner's matching
  // ratings for the same item.
  bool drop_counterpart = false;
};

/// Reads responses (actor_id, partner_id, item_id, response) into the
/// dataset. Item category counts are inferred as max(response)+1 unless
/// the item already exists in ds.items.
inline void read_responses_csv(Dataset& ds, const std::string& path,
                               const IngestOptions& opts = {}) {
  auto t = csv::read_file(path);
  int ca = t.require_column("actor_id");
  int cp = t.require_column("partner_id");
  int ci = t.require_column("item_id");
  int cr = t.require_column("response");

  struct Raw {
    int dyad, item;
    long category;
  };
  std::vector<Raw> raw;
  std::vector<bool> dropped(t.rows.size(), false);
  std::map<std::string, int> item_index;
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    item_index[ds.items.items[i].id] = static_cast<int>(i);

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path + ":" + std::to_string(r + 2);
    int a = ds.design.find_individual(t.rows[r][ca]);
    int p = ds.design.find_individual(t.rows[r][cp]);
    require(a >= 0, ctx + ": unknown actor '" + t.rows[r][ca] + "'");
    require(p >= 0, ctx + ": unknown partner '" + t.rows[r][cp] + "'");
    int d = ds.design.dyad_index(a, p);
    require(d >= 0, ctx + ": no directed dyad (" + t.rows[r][ca] + "," +
                        t.rows[r][cp] + ") in design");
    const std::string& item_id = t.rows[r][ci];
    auto it = item_index.find(item_id);
    int item;
    if (it == item_index.end()) {
      item = static_cast<int>(ds.items.size());
      item_index[item_id] = item;
      Item newit;
      newit.id = item_id;
      newit.categories = 2;
      ds.items.items.push_back(newit);
    } else {
      item = it->second;
    }
    long cat = csv::parse_long(t.rows[r][cr], ctx + ": response");
    if (opts.remap) {
      auto mit = opts.remap->find(cat);
      require(mit != opts.remap->end(),
              ctx + ": response " + std::to_string(cat) + " not in remap table");
      cat = mit->second;
    }
    if (cat < 0) {
      dropped[r] = true;
      continue;
    }
    raw.push_back({d, item, cat});
  }

  // Invalid-rating policy: optionally drop the counterpart rating of a
  // dropped row (same unordered pair and item, reverse direction).
  if (opts.drop_counterpart) {
    std::map<std::pair<int, int>, bool> kill;  // (reverse dyad, item)
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (!dropped[r]) continue;
      int a = ds.design.find_individual(t.rows[r][ca]);
      int p = ds.design.find_individual(t.rows[r][cp]);
      int rev = ds.design.dyad_index(p, a);
      auto it = item_index.find(t.rows[r][ci]);
      if (rev >= 0 && it != item_index.end())
        kill[{rev, it->second}] = true;
    }
    std::vector<Raw> kept;
    for (const auto& rr : raw)
      if (!kill.count({rr.dyad, rr.item})) kept.push_back(rr);
    raw = std::move(kept);
  }

  for (const auto& rr : raw) {
    auto& item = ds.items.items[rr.item];
    if (rr.category + 1 > item.categories)
      item.categories = static_cast<int>(rr.category) + 1;
    ds.responses.push_back(
        {rr.dyad, rr.item, static_cast<int>(rr.category)});
  }
  for (auto& item : ds.items.items)
    if (item.steps.size() != static_cast<std::size_t>(item.categories - 1))
      item.steps.assign(item.categories - 1, 0.0);
}

/// Reads distal outcomes (actor_id, partner_id, outcome).
inline void read_distal_csv(Dataset& ds, const std::string& path) {
  auto t = csv::read_file(path);
  int ca = t.require_column("actor_id");
  int cp = t.require_column("partner_id");
  int co = t.require_column("outcome");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path + ":" + std::to_string(r + 2);
    int a = ds.design.find_individual(t.rows[r][ca]);
    int p = ds.design.find_individual(t.rows[r][cp]);
    require(a >= 0 && p >= 0, ctx + ": unknown individual");
    int d = ds.design.dyad_index(a, p);
    require(d >= 0, ctx + ": no such directed dyad");
    long z = csv::parse_long(t.rows[r][co], ctx + ": outcome");
    require(z == 0 || z == 1, ctx + ": outcome must be 0 or 1");
    ds.distal.push_back({d, static_cast<int>(z)});
  }
}

/// Reads individual attributes: id plus optional gender / cluster columns
/// and any further numeric columns, which become alpha/beta covariates
/// only if the model spec selects them.
inline void read_individuals_csv(Dataset& ds, const std::string& path) {
  auto t = csv::read_file(path);
  int cid = t.require_column("id");
  int cg = t.column("gender");
  int cc = t.column("cluster");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path + ":" + std::to_string(r + 2);
    int i = ds.design.find_individual(t.rows[r][cid]);
    require(i >= 0, ctx + ": unknown individual '" + t.rows[r][cid] + "'");
    if (cg >= 0 && !t.rows[r][cg].empty()) {
      long g = csv::parse_long(t.rows[r][cg], ctx + ": gender");
      require(g == 0 || g == 1, ctx + ": gender must be 0 or 1");
      ds.design.individual(i).gender = static_cast<int>(g);
    }
    if (cc >= 0 && !t.rows[r][cc].empty())
      ds.design.individual(i).cluster = static_cast<int>(
          csv::parse_long(t.rows[r][cc], ctx + ": cluster"));
  }
}

/// Reads an items file (item_id, categories[, step1..]) overriding
/// inferred category counts; steps are optional generating values.
inline void read_items_csv(ItemBank& items, const std::string& path) {
  auto t = csv::read_file(path);
  int cid = t.require_column("item_id");
  int cm = t.require_column("categories");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path + ":" + std::to_string(r + 2);
    Item it;
    it.id = t.rows[r][cid];
    it.categories =
        static_cast<int>(csv::parse_long(t.rows[r][cm], ctx + ": categories"));
    require(it.categories >= 2, ctx + ": categories must be >= 2");
    for (int k = 1; k < it.categories; ++k) {
      int col = t.column("step" + std::to_string(k));
      it.steps.push_back(col >= 0 ? csv::parse_double(t.rows[r][col], ctx)
                                  : 0.0);
    }
    items.items.push_back(std::move(it));
  }
}

}  // namespace dirt
