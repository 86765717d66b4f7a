#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lightcf {

using Edge = std::pair<std::size_t, std::size_t>;  // (user, item)

// Immutable bipartite interaction graph stored in both orientations
// (user-major CSR and item-major CSR) so either directional product walks
// contiguous memory. Edges are deduplicated and sorted at construction.
struct InteractionGraph {
  std::size_t num_users = 0;
  std::size_t num_items = 0;

  std::vector<std::size_t> user_ptr;  // size num_users + 1
  std::vector<std::size_t> item_of;   // items adjacent to each user, sorted

  std::vector<std::size_t> item_ptr;  // size num_items + 1
  std::vector<std::size_t> user_of;   // users adjacent to each item, sorted

  std::size_t num_edges() const { return item_of.size(); }

  std::span<const std::size_t> items_of(std::size_t u) const {
    return {item_of.data() + user_ptr[u], user_ptr[u + 1] - user_ptr[u]};
  }
  std::span<const std::size_t> users_of(std::size_t i) const {
    return {user_of.data() + item_ptr[i], item_ptr[i + 1] - item_ptr[i]};
  }

  std::size_t user_degree(std::size_t u) const { return user_ptr[u + 1] - user_ptr[u]; }
  std::size_t item_degree(std::size_t i) const { return item_ptr[i + 1] - item_ptr[i]; }

  bool has_edge(std::size_t u, std::size_t i) const {
    auto row = items_of(u);
    return std::binary_search(row.begin(), row.end(), i);
  }

  // Edges in user-major order; handy for shuffled epoch passes.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t u = 0; u < num_users; ++u)
      for (std::size_t i : items_of(u)) out.emplace_back(u, i);
    return out;
  }
};

// Builds a graph from an edge list. Out-of-range endpoints are reported with
// the offending pair; duplicates collapse to a single edge.
inline InteractionGraph from_edges(std::size_t num_users, std::size_t num_items,
                                   std::vector<Edge> edges) {
  for (const auto& [u, i] : edges) {
    if (u >= num_users || i >= num_items) {
      std::ostringstream msg;
      msg << "edge (" << u << ", " << i << ") out of range for " << num_users
          << " users x " << num_items << " items";
      throw std::out_of_range(msg.str());
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  InteractionGraph g;
  g.num_users = num_users;
  g.num_items = num_items;

  g.user_ptr.assign(num_users + 1, 0);
  for (const auto& [u, i] : edges) ++g.user_ptr[u + 1];
  for (std::size_t u = 0; u < num_users; ++u) g.user_ptr[u + 1] += g.user_ptr[u];
  g.item_of.reserve(edges.size());
  for (const auto& [u, i] : edges) g.item_of.push_back(i);  // already user-major sorted

  g.item_ptr.assign(num_items + 1, 0);
  for (const auto& [u, i] : edges) ++g.item_ptr[i + 1];
  for (std::size_t i = 0; i < num_items; ++i) g.item_ptr[i + 1] += g.item_ptr[i];
  g.user_of.assign(edges.size(), 0);
  std::vector<std::size_t> cursor(g.item_ptr.begin(), g.item_ptr.end() - 1);
  for (const auto& [u, i] : edges) g.user_of[cursor[i]++] = u;  // user-major scan => sorted

  return g;
}

// Immutable extension: a new, larger graph containing every old edge plus
// new_edges; entity counts may grow but never shrink. The original graph is
// untouched, which is what inductive inference relies on.
inline InteractionGraph extend(const InteractionGraph& g, const std::vector<Edge>& new_edges,
                               std::size_t new_num_users, std::size_t new_num_items) {
  if (new_num_users < g.num_users || new_num_items < g.num_items)
    throw std::invalid_argument("extend: entity counts may not shrink");
  std::vector<Edge> all = g.edge_list();
  all.insert(all.end(), new_edges.begin(), new_edges.end());
  return from_edges(new_num_users, new_num_items, std::move(all));
}

}  // namespace lightcf
