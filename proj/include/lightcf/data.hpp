#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"

namespace lightcf {

// External integer id <-> dense index, assigned in first-appearance order.
struct IdMap {
  std::vector<long long> to_external;
  std::unordered_map<long long, std::size_t> to_index;

  std::size_t intern(long long ext) {
    auto [it, inserted] = to_index.try_emplace(ext, to_external.size());
    if (inserted) to_external.push_back(ext);
    return it->second;
  }
  std::size_t size() const { return to_external.size(); }
};

struct ParsedInteractions {
  std::vector<Edge> edges;
  IdMap users, items;
};

namespace detail {

inline long long parse_int_token(const std::string& tok, std::size_t line_no) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size()) {
    std::ostringstream msg;
    msg << "line " << line_no << ": expected integer id, got '" << tok << "'";
    throw std::runtime_error(msg.str());
  }
  return v;
}

}  // namespace detail

// One user per line: the user id followed by the ids of its items, whitespace
// separated (the common adjacency-list text format for implicit feedback).
// Blank lines are skipped; a line with a bare user id records the user with
// no interactions. Ids are reindexed densely in first-appearance order across
// everything parsed through the same maps.
inline std::vector<Edge> parse_interactions(std::istream& in, IdMap& users, IdMap& items) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    std::size_t u = users.intern(detail::parse_int_token(tok, line_no));
    while (ls >> tok) edges.emplace_back(u, items.intern(detail::parse_int_token(tok, line_no)));
  }
  return edges;
}

inline ParsedInteractions parse_interactions(std::istream& in) {
  ParsedInteractions p;
  p.edges = parse_interactions(in, p.users, p.items);
  return p;
}

// Which interactions a model may train on, validate against and be tested on.
// All index spaces are dense and shared across the splits. When an inductive
// holdout was carved, `inductive` describes it; held entities then have no
// edges anywhere in graph_train/val_sets/test_sets.
struct InductiveBundle {
  std::vector<std::size_t> held_users, held_items;  // sorted dense indices
  std::vector<Edge> inference_edges;                // revealed to the model at inference
  // Per-user evaluation sets for the inductive protocol: the held-back half
  // of held-entity interactions plus the surviving base test split.
  std::vector<std::vector<std::size_t>> eval_sets;
};

struct DatasetBundle {
  InteractionGraph graph_train;
  std::vector<std::vector<std::size_t>> val_sets;   // per user, sorted
  std::vector<std::vector<std::size_t>> test_sets;  // per user, sorted
  IdMap user_ids, item_ids;
  std::optional<InductiveBundle> inductive;

  std::size_t num_users() const { return graph_train.num_users; }
  std::size_t num_items() const { return graph_train.num_items; }
};

// Carves a per-user validation slice out of the training interactions:
// floor(val_fraction * degree) items, at least one when the user has two or
// more interactions. The carve depends only on the edge set and the seed, not
// on input order. Test interactions arrive separately (repository format);
// any test pair duplicating a train/val pair is dropped.
inline DatasetBundle transductive_split(const std::vector<Edge>& train_edges,
                                        const std::vector<Edge>& test_edges,
                                        std::size_t num_users, std::size_t num_items,
                                        Rng& rng, double val_fraction = 0.10) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("transductive_split: val_fraction must be in [0, 1)");
  InteractionGraph all = from_edges(num_users, num_items, train_edges);

  DatasetBundle b;
  b.val_sets.assign(num_users, {});
  b.test_sets.assign(num_users, {});

  std::vector<Edge> kept;
  kept.reserve(all.num_edges());
  std::vector<std::size_t> row;
  for (std::size_t u = 0; u < num_users; ++u) {
    auto items = all.items_of(u);
    row.assign(items.begin(), items.end());  // sorted already
    std::size_t deg = row.size();
    std::size_t nval = std::size_t(double(deg) * val_fraction);
    if (nval == 0 && deg >= 2 && val_fraction > 0.0) nval = 1;
    std::shuffle(row.begin(), row.end(), rng);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j < nval)
        b.val_sets[u].push_back(row[j]);
      else
        kept.emplace_back(u, row[j]);
    }
    std::sort(b.val_sets[u].begin(), b.val_sets[u].end());
  }
  b.graph_train = from_edges(num_users, num_items, std::move(kept));

  for (const auto& [u, i] : test_edges) {
    if (u >= num_users || i >= num_items)
      throw std::out_of_range("transductive_split: test edge out of range");
    if (b.graph_train.has_edge(u, i)) continue;
    if (std::binary_search(b.val_sets[u].begin(), b.val_sets[u].end(), i)) continue;
    b.test_sets[u].push_back(i);
  }
  for (auto& t : b.test_sets) {
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
  }
  return b;
}

namespace detail {

// All interactions of the bundle (train + val + test), per user, sorted.
inline std::vector<std::vector<std::size_t>> pooled_interactions(const DatasetBundle& b) {
  std::vector<std::vector<std::size_t>> pool(b.num_users());
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    auto items = b.graph_train.items_of(u);
    pool[u].assign(items.begin(), items.end());
    pool[u].insert(pool[u].end(), b.val_sets[u].begin(), b.val_sets[u].end());
    pool[u].insert(pool[u].end(), b.test_sets[u].begin(), b.test_sets[u].end());
    std::sort(pool[u].begin(), pool[u].end());
    pool[u].erase(std::unique(pool[u].begin(), pool[u].end()), pool[u].end());
  }
  return pool;
}

}  // namespace detail

// Holds out a fraction of sufficiently active users and items as unseen-at-
// training entities. Every edge touching a held entity leaves the
// transductive splits; each held entity's edges are then split into a
// revealed inference part and an evaluated part. Edges between two held
// entities always evaluate (they cannot be revealed: neither endpoint exists
// at training time, and revealing them would leak two entities at once).
inline DatasetBundle inductive_split(const DatasetBundle& base, Rng& rng,
                                     double holdout_fraction = 0.05,
                                     double inference_fraction = 0.5,
                                     std::size_t min_user_interactions = 10,
                                     std::size_t min_item_interactions = 5) {
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw std::invalid_argument("inductive_split: holdout_fraction must be in [0, 1)");
  if (inference_fraction <= 0.0 || inference_fraction >= 1.0)
    throw std::invalid_argument("inductive_split: inference_fraction must be in (0, 1)");
  std::size_t m = base.num_users(), n = base.num_items();

  DatasetBundle out = base;
  out.inductive = InductiveBundle{};
  out.inductive->eval_sets.assign(m, {});
  if (holdout_fraction == 0.0) {
    // Empty holdout: nothing removed, eval set is simply the base test set.
    out.inductive->eval_sets = base.test_sets;
    return out;
  }

  auto pool = detail::pooled_interactions(base);
  std::vector<std::size_t> item_count(n, 0);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t i : pool[u]) ++item_count[i];

  auto pick = [&](std::size_t total, const std::vector<std::size_t>& qualifying,
                  const char* what) {
    std::size_t target = std::max<std::size_t>(1, std::size_t(double(total) * holdout_fraction));
    if (qualifying.size() < target) {
      std::ostringstream msg;
      msg << "inductive_split: only " << qualifying.size() << " qualifying " << what
          << " for a holdout of " << target;
      throw std::invalid_argument(msg.str());
    }
    std::vector<std::size_t> shuffled = qualifying;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    shuffled.resize(target);
    std::sort(shuffled.begin(), shuffled.end());
    return shuffled;
  };

  std::vector<std::size_t> quser, qitem;
  for (std::size_t u = 0; u < m; ++u)
    if (pool[u].size() >= min_user_interactions) quser.push_back(u);
  for (std::size_t i = 0; i < n; ++i)
    if (item_count[i] >= min_item_interactions) qitem.push_back(i);
  auto& ind = *out.inductive;
  ind.held_users = pick(m, quser, "users");
  ind.held_items = pick(n, qitem, "items");

  std::vector<char> held_u(m, 0), held_i(n, 0);
  for (std::size_t u : ind.held_users) held_u[u] = 1;
  for (std::size_t i : ind.held_items) held_i[i] = 1;

  // Strip held entities from every transductive split.
  {
    std::vector<Edge> kept;
    kept.reserve(base.graph_train.num_edges());
    for (const auto& [u, i] : base.graph_train.edge_list())
      if (!held_u[u] && !held_i[i]) kept.emplace_back(u, i);
    out.graph_train = from_edges(m, n, std::move(kept));
    for (std::size_t u = 0; u < m; ++u) {
      auto strip = [&](std::vector<std::size_t>& v) {
        if (held_u[u]) { v.clear(); return; }
        std::erase_if(v, [&](std::size_t i) { return bool(held_i[i]); });
      };
      strip(out.val_sets[u]);
      strip(out.test_sets[u]);
    }
  }

  // Partition each held entity's interactions into revealed/evaluated.
  auto split_counts = [&](std::size_t c) {
    return std::min(c, std::max<std::size_t>(1, std::size_t(double(c) * inference_fraction)));
  };
  std::vector<Edge> eval_edges;
  for (std::size_t u : ind.held_users) {
    std::vector<std::size_t> cand;
    for (std::size_t i : pool[u]) {
      if (held_i[i])
        eval_edges.emplace_back(u, i);  // held-held stays evaluable, never revealed
      else
        cand.push_back(i);
    }
    if (cand.empty()) continue;
    std::shuffle(cand.begin(), cand.end(), rng);
    std::size_t ninf = split_counts(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j)
      (j < ninf ? ind.inference_edges : eval_edges).emplace_back(u, cand[j]);
  }
  for (std::size_t i : ind.held_items) {
    std::vector<std::size_t> cand;
    for (std::size_t u = 0; u < m; ++u) {
      if (held_u[u]) continue;  // held-held pairs were routed to eval above
      if (std::binary_search(pool[u].begin(), pool[u].end(), i)) cand.push_back(u);
    }
    if (cand.empty()) continue;
    std::shuffle(cand.begin(), cand.end(), rng);
    std::size_t ninf = split_counts(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j)
      (j < ninf ? ind.inference_edges : eval_edges).emplace_back(cand[j], i);
  }
  std::sort(ind.inference_edges.begin(), ind.inference_edges.end());

  ind.eval_sets = out.test_sets;  // surviving base test
  for (const auto& [u, i] : eval_edges) ind.eval_sets[u].push_back(i);
  for (auto& v : ind.eval_sets) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

// Transductive comparison views for an inductive bundle. Both evaluate on the
// inductive eval sets. The lower bound trains on the reduced graph and cannot
// serve held entities (evaluate it with the held users zero-scored and held
// items excluded); the upper bound additionally trains on the inference
// edges as ordinary interactions.
inline std::pair<DatasetBundle, DatasetBundle> lower_upper_bound_views(
    const DatasetBundle& b) {
  if (!b.inductive) throw std::invalid_argument("views require an inductive bundle");
  DatasetBundle lower = b;
  lower.test_sets = b.inductive->eval_sets;
  DatasetBundle upper = lower;
  upper.graph_train =
      extend(b.graph_train, b.inductive->inference_edges, b.num_users(), b.num_items());
  return {std::move(lower), std::move(upper)};
}

// ---------------------------------------------------------------------------
// Split manifests: flat text files that replay a bundle bit-exactly.
//   users.map / items.map  external id per line; line number = dense index
//   splits.txt             "<user-ext> <item-ext> <tag>" per line
// Tags: train, val, test, inf (revealed inductive edge), ind_eval (held-back
// inductive edge not already in the test split). Held entities are recorded
// in held_users.txt / held_items.txt when present.
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return f;
}

}  // namespace detail

inline void save_dataset(const std::string& dir, const DatasetBundle& b) {
  // Bundles assembled programmatically may lack id maps; fall back to the
  // dense indices themselves.
  std::vector<long long> uids = b.user_ids.to_external, iids = b.item_ids.to_external;
  if (uids.size() != b.num_users()) {
    uids.resize(b.num_users());
    for (std::size_t u = 0; u < uids.size(); ++u) uids[u] = (long long)u;
  }
  if (iids.size() != b.num_items()) {
    iids.resize(b.num_items());
    for (std::size_t i = 0; i < iids.size(); ++i) iids[i] = (long long)i;
  }
  {
    auto f = detail::open_out(dir + "/users.map");
    for (long long e : uids) f << e << "\n";
  }
  {
    auto f = detail::open_out(dir + "/items.map");
    for (long long e : iids) f << e << "\n";
  }
  auto f = detail::open_out(dir + "/splits.txt");
  auto uext = [&](std::size_t u) { return uids[u]; };
  auto iext = [&](std::size_t i) { return iids[i]; };
  for (const auto& [u, i] : b.graph_train.edge_list())
    f << uext(u) << " " << iext(i) << " train\n";
  for (std::size_t u = 0; u < b.num_users(); ++u)
    for (std::size_t i : b.val_sets[u]) f << uext(u) << " " << iext(i) << " val\n";
  for (std::size_t u = 0; u < b.num_users(); ++u)
    for (std::size_t i : b.test_sets[u]) f << uext(u) << " " << iext(i) << " test\n";
  if (b.inductive) {
    const auto& ind = *b.inductive;
    for (const auto& [u, i] : ind.inference_edges)
      f << uext(u) << " " << iext(i) << " inf\n";
    for (std::size_t u = 0; u < b.num_users(); ++u)
      for (std::size_t i : ind.eval_sets[u])
        if (!std::binary_search(b.test_sets[u].begin(), b.test_sets[u].end(), i))
          f << uext(u) << " " << iext(i) << " ind_eval\n";
    auto hu = detail::open_out(dir + "/held_users.txt");
    for (std::size_t u : ind.held_users) hu << uext(u) << "\n";
    auto hi = detail::open_out(dir + "/held_items.txt");
    for (std::size_t i : ind.held_items) hi << iext(i) << "\n";
  }
}

inline DatasetBundle load_dataset(const std::string& dir) {
  DatasetBundle b;
  {
    auto f = detail::open_in(dir + "/users.map");
    long long e;
    while (f >> e) b.user_ids.intern(e);
  }
  {
    auto f = detail::open_in(dir + "/items.map");
    long long e;
    while (f >> e) b.item_ids.intern(e);
  }
  std::size_t m = b.user_ids.size(), n = b.item_ids.size();
  b.val_sets.assign(m, {});
  b.test_sets.assign(m, {});

  auto look = [](const IdMap& map, long long ext, const char* what) {
    auto it = map.to_index.find(ext);
    if (it == map.to_index.end())
      throw std::runtime_error(std::string("splits.txt references unmapped ") + what);
    return it->second;
  };

  std::vector<Edge> train_edges, inf_edges;
  std::vector<std::vector<std::size_t>> ind_eval(m);
  bool saw_inductive = false;
  {
    auto f = detail::open_in(dir + "/splits.txt");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      std::istringstream ls(line);
      std::string ut, it, tag;
      if (!(ls >> ut)) continue;
      if (!(ls >> it >> tag)) {
        std::ostringstream msg;
        msg << "splits.txt line " << line_no << ": expected '<user> <item> <tag>'";
        throw std::runtime_error(msg.str());
      }
      std::size_t u = look(b.user_ids, detail::parse_int_token(ut, line_no), "user");
      std::size_t i = look(b.item_ids, detail::parse_int_token(it, line_no), "item");
      if (tag == "train") train_edges.emplace_back(u, i);
      else if (tag == "val") b.val_sets[u].push_back(i);
      else if (tag == "test") b.test_sets[u].push_back(i);
      else if (tag == "inf") { inf_edges.emplace_back(u, i); saw_inductive = true; }
      else if (tag == "ind_eval") { ind_eval[u].push_back(i); saw_inductive = true; }
      else {
        std::ostringstream msg;
        msg << "splits.txt line " << line_no << ": unknown tag '" << tag << "'";
        throw std::runtime_error(msg.str());
      }
    }
  }
  b.graph_train = from_edges(m, n, std::move(train_edges));
  for (auto& v : b.val_sets) std::sort(v.begin(), v.end());
  for (auto& v : b.test_sets) std::sort(v.begin(), v.end());

  std::ifstream hu(dir + "/held_users.txt");
  if (saw_inductive || hu) {
    InductiveBundle ind;
    long long e;
    while (hu >> e) ind.held_users.push_back(look(b.user_ids, e, "held user"));
    auto hi = detail::open_in(dir + "/held_items.txt");
    while (hi >> e) ind.held_items.push_back(look(b.item_ids, e, "held item"));
    std::sort(ind.held_users.begin(), ind.held_users.end());
    std::sort(ind.held_items.begin(), ind.held_items.end());
    std::sort(inf_edges.begin(), inf_edges.end());
    ind.inference_edges = std::move(inf_edges);
    ind.eval_sets = b.test_sets;
    for (std::size_t u = 0; u < m; ++u) {
      auto& v = ind.eval_sets[u];
      v.insert(v.end(), ind_eval[u].begin(), ind_eval[u].end());
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    b.inductive = std::move(ind);
  }
  return b;
}

}  // namespace lightcf
