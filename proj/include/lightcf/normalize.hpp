#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"

namespace lightcf {

enum class NormVariant { none, left, right, symmetric };

inline std::string to_string(NormVariant v) {
  switch (v) {
    case NormVariant::none: return "none";
    case NormVariant::left: return "left";
    case NormVariant::right: return "right";
    case NormVariant::symmetric: return "symmetric";
  }
  return "?";
}

inline NormVariant norm_variant_from_string(const std::string& s) {
  if (s == "none") return NormVariant::none;
  if (s == "left") return NormVariant::left;
  if (s == "right") return NormVariant::right;
  if (s == "symmetric") return NormVariant::symmetric;
  throw std::invalid_argument("unknown normalization variant: " + s);
}

enum class Direction { to_users, to_items };

// A graph plus degree-derived edge weights, factored per direction as
//   weight(u, i) = global_scale * user_scale[u] * item_scale[i].
//
// `left`/`right` normalize by the degree of the row/column entity of each
// product, so the weight of an edge depends on which direction the product
// runs; `none` and `symmetric` are direction-invariant. Zero-degree entities
// get scale 0 (their rows aggregate to zero vectors, never NaN).
//
// Scale vectors are fixed at normalize() time. edge_dropout() keeps them (and
// multiplies global_scale by 1/(1-p)) while shrinking the edge set, which is
// exactly what makes dropped propagation unbiased. Evaluation always uses the
// undropped graph.
struct NormalizedGraph {
  InteractionGraph edges;  // the edges products run over (may be a dropout subset)
  NormVariant variant = NormVariant::symmetric;
  double global_scale = 1.0;

  // weight(u,i) for results indexed by users (u <- i products)
  std::vector<double> to_users_user_scale, to_users_item_scale;
  // weight(u,i) for results indexed by items (i <- u products)
  std::vector<double> to_items_user_scale, to_items_item_scale;

  std::size_t num_users() const { return edges.num_users; }
  std::size_t num_items() const { return edges.num_items; }

  double edge_weight(std::size_t u, std::size_t i, Direction d) const {
    if (!edges.has_edge(u, i)) return 0.0;
    if (d == Direction::to_users)
      return global_scale * to_users_user_scale[u] * to_users_item_scale[i];
    return global_scale * to_items_user_scale[u] * to_items_item_scale[i];
  }
};

inline NormalizedGraph normalize(const InteractionGraph& g, NormVariant variant) {
  NormalizedGraph n;
  n.edges = g;
  n.variant = variant;

  auto inv = [](std::size_t d) { return d == 0 ? 0.0 : 1.0 / double(d); };
  auto inv_sqrt = [](std::size_t d) { return d == 0 ? 0.0 : 1.0 / std::sqrt(double(d)); };
  auto ones_or_zero = [](std::size_t d) { return d == 0 ? 0.0 : 1.0; };

  n.to_users_user_scale.resize(g.num_users);
  n.to_users_item_scale.resize(g.num_items);
  n.to_items_user_scale.resize(g.num_users);
  n.to_items_item_scale.resize(g.num_items);

  for (std::size_t u = 0; u < g.num_users; ++u) {
    std::size_t d = g.user_degree(u);
    switch (variant) {
      case NormVariant::none:
        n.to_users_user_scale[u] = n.to_items_user_scale[u] = ones_or_zero(d);
        break;
      case NormVariant::symmetric:
        n.to_users_user_scale[u] = n.to_items_user_scale[u] = inv_sqrt(d);
        break;
      case NormVariant::left:  // row entity of the u <- i product is the user
        n.to_users_user_scale[u] = inv(d);
        n.to_items_user_scale[u] = ones_or_zero(d);
        break;
      case NormVariant::right:  // column entity of the i <- u product is the user
        n.to_users_user_scale[u] = ones_or_zero(d);
        n.to_items_user_scale[u] = inv(d);
        break;
    }
  }
  for (std::size_t i = 0; i < g.num_items; ++i) {
    std::size_t d = g.item_degree(i);
    switch (variant) {
      case NormVariant::none:
        n.to_users_item_scale[i] = n.to_items_item_scale[i] = ones_or_zero(d);
        break;
      case NormVariant::symmetric:
        n.to_users_item_scale[i] = n.to_items_item_scale[i] = inv_sqrt(d);
        break;
      case NormVariant::left:  // row entity of the i <- u product is the item
        n.to_items_item_scale[i] = inv(d);
        n.to_users_item_scale[i] = ones_or_zero(d);
        break;
      case NormVariant::right:
        n.to_items_item_scale[i] = ones_or_zero(d);
        n.to_users_item_scale[i] = inv(d);
        break;
    }
  }
  return n;
}

namespace detail {

// Y[r] = global * row_scale[r] * sum_{c in adj(r)} col_scale[c] * X[c]
// for either orientation; this is the only sparse kernel in the library and
// costs O(nnz * d). Nothing ever materializes an m*m or n*n matrix.
inline Matrix gather_rows(const std::vector<std::size_t>& ptr,
                          const std::vector<std::size_t>& adj,
                          const std::vector<double>& row_scale,
                          const std::vector<double>& col_scale, double global,
                          const Matrix& x, std::size_t out_rows) {
  Matrix y(out_rows, x.cols());
  for (std::size_t r = 0; r < out_rows; ++r) {
    auto yr = y.row(r);
    for (std::size_t e = ptr[r]; e < ptr[r + 1]; ++e) {
      std::size_t c = adj[e];
      axpy(yr, x.row(c), col_scale[c]);
    }
    double s = global * row_scale[r];
    for (double& v : yr) v *= s;
  }
  return y;
}

}  // namespace detail

// (m x d) result: one weighted hop from item vectors to users.
inline Matrix agg_items_to_users(const NormalizedGraph& g, const Matrix& x) {
  if (x.rows() != g.num_items()) throw std::invalid_argument("agg_items_to_users: bad shape");
  return detail::gather_rows(g.edges.user_ptr, g.edges.item_of, g.to_users_user_scale,
                             g.to_users_item_scale, g.global_scale, x, g.num_users());
}

// (n x d) result: one weighted hop from user vectors to items.
inline Matrix agg_users_to_items(const NormalizedGraph& g, const Matrix& x) {
  if (x.rows() != g.num_users()) throw std::invalid_argument("agg_users_to_items: bad shape");
  return detail::gather_rows(g.edges.item_ptr, g.edges.user_of, g.to_items_item_scale,
                             g.to_items_user_scale, g.global_scale, x, g.num_items());
}

// Transposes of the two products, used by reverse-mode gradients. They reuse
// the forward scale vectors with row/column roles swapped, which is the
// correct adjoint even for the direction-dependent left/right variants.
inline Matrix agg_items_to_users_adjoint(const NormalizedGraph& g, const Matrix& cotangent) {
  if (cotangent.rows() != g.num_users())
    throw std::invalid_argument("agg_items_to_users_adjoint: bad shape");
  return detail::gather_rows(g.edges.item_ptr, g.edges.user_of, g.to_users_item_scale,
                             g.to_users_user_scale, g.global_scale, cotangent, g.num_items());
}

inline Matrix agg_users_to_items_adjoint(const NormalizedGraph& g, const Matrix& cotangent) {
  if (cotangent.rows() != g.num_items())
    throw std::invalid_argument("agg_users_to_items_adjoint: bad shape");
  return detail::gather_rows(g.edges.user_ptr, g.edges.item_of, g.to_items_user_scale,
                             g.to_items_item_scale, g.global_scale, cotangent, g.num_users());
}

}  // namespace lightcf
