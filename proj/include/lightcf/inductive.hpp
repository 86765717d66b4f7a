#pragma once

#include <algorithm>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <vector>

#include "lightcf/data.hpp"
#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/normalize.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf {

// Inference-time state: the frozen trained model, the graph it was trained
// on, and an extended graph that adds revealed interactions (and possibly new
// entity rows/columns). Entities may be "new" either by carrying an index
// beyond the base dimensions or by being flagged explicitly (the dataset
// holdout flow keeps one index space and flags).
struct InductiveContext {
  const Model* model = nullptr;  // parameters are never modified
  InteractionGraph base;
  InteractionGraph extended;
  std::vector<char> new_user, new_item;  // sized to the extended dimensions
  // New-items-only switch: also recompute user embeddings from the extended
  // graph (the "U+" update) instead of keeping the training-time user path.
  bool refresh_user_embeddings = false;
};

inline InductiveContext make_inductive_context(const Model& model,
                                               const InteractionGraph& base,
                                               const InteractionGraph& extended,
                                               const std::vector<std::size_t>& new_users,
                                               const std::vector<std::size_t>& new_items,
                                               bool refresh_user_embeddings = false) {
  if (extended.num_users < base.num_users || extended.num_items < base.num_items)
    throw std::invalid_argument("inductive context: extended graph smaller than base");
  for (const auto& [u, i] : base.edge_list())
    if (!extended.has_edge(u, i))
      throw std::invalid_argument("inductive context: extended graph must contain the base edges");
  InductiveContext ctx;
  ctx.model = &model;
  ctx.base = base;
  ctx.extended = extended;
  ctx.new_user.assign(extended.num_users, 0);
  ctx.new_item.assign(extended.num_items, 0);
  for (std::size_t u = base.num_users; u < extended.num_users; ++u) ctx.new_user[u] = 1;
  for (std::size_t i = base.num_items; i < extended.num_items; ++i) ctx.new_item[i] = 1;
  for (std::size_t u : new_users) ctx.new_user.at(u) = 1;
  for (std::size_t i : new_items) ctx.new_item.at(i) = 1;
  ctx.refresh_user_embeddings = refresh_user_embeddings;
  return ctx;
}

// Context for a dataset's inductive holdout: the extended graph reveals the
// bundle's inference edges on the training index space.
inline InductiveContext context_from_bundle(const Model& model, const DatasetBundle& b,
                                            bool refresh_user_embeddings = false) {
  if (!b.inductive)
    throw std::invalid_argument("inductive context: bundle has no inductive holdout");
  InteractionGraph ext = extend(b.graph_train, b.inductive->inference_edges, b.num_users(),
                                b.num_items());
  return make_inductive_context(model, b.graph_train, ext, b.inductive->held_users,
                                b.inductive->held_items, refresh_user_embeddings);
}

namespace detail {

inline InteractionGraph strip_entities(const InteractionGraph& g,
                                       const std::vector<char>& drop_user,
                                       const std::vector<char>& drop_item) {
  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  for (std::size_t u = 0; u < g.num_users; ++u) {
    if (!drop_user.empty() && drop_user[u]) continue;
    for (std::size_t i : g.items_of(u))
      if (drop_item.empty() || !drop_item[i]) kept.emplace_back(u, i);
  }
  return from_edges(g.num_users, g.num_items, std::move(kept));
}

inline bool any_flag(const std::vector<char>& v) {
  for (char c : v)
    if (c) return true;
  return false;
}

// Copies a trained table into the extended row space. Rows flagged new stay
// zero: a transductive parameter row for an entity declared new must never be
// consulted, and appended rows have no trained values at all.
inline Matrix extend_table(const Matrix& t, std::size_t rows_ext,
                           const std::vector<char>& is_new) {
  Matrix out(rows_ext, t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (is_new[r]) continue;
    auto dst = out.row(r);
    auto src = t.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
  }
  return out;
}

inline void warn_isolated(const InteractionGraph& ext, const std::vector<char>& is_new,
                          bool users) {
  std::size_t count = users ? ext.num_users : ext.num_items;
  for (std::size_t x = 0; x < count; ++x) {
    if (!is_new[x]) continue;
    std::size_t deg = users ? ext.user_degree(x) : ext.item_degree(x);
    if (deg == 0)
      std::cerr << "warning: new " << (users ? "user " : "item ") << x
                << " has no revealed interactions; its embedding is zero\n";
  }
}

}  // namespace detail

// Substituted forward pass shared by every inference entry point.
//
// CF-LGCN-U networks follow the general recipe: the first product runs on the
// extended graph with new users' rows excluded (their parameter rows do not
// exist), and every later product runs on the fully extended graph. With no
// new users that specializes to "substitute the item-extended graph in each
// layer"; refresh_user_embeddings = false further pins the user-producing
// products to the training-time edges, keeping existing user embeddings
// fixed while still deriving fresh item embeddings.
//
// LightGCN networks propagate zero-initialized rows for new entities over the
// fully extended graph; layer-0 sets must already be excluded from fusion
// when new entities are present (make_lightgcn_inductive).
//
// With an unchanged graph and no flagged entities, every path degenerates to
// the transductive forward bit for bit.
inline FusedEmbeddings inductive_forward(const InductiveContext& ctx) {
  const Model& model = *ctx.model;
  model.validate();
  bool new_users = detail::any_flag(ctx.new_user);
  bool new_items = detail::any_flag(ctx.new_item);

  for (const Network& net : model.nets) {
    if (net.spec.variant == Variant::cf_lgcn_e)
      throw std::invalid_argument("inductive inference: cf_lgcn_e is not supported");
    if (net.spec.variant == Variant::cf_lgcn_u && new_users && net.spec.include_layer0)
      throw std::invalid_argument(
          "inductive inference: serving new users requires a model trained with "
          "include_layer0 = false; retrain before inferring");
    if (net.spec.variant == Variant::lightgcn && (new_users || new_items) &&
        net.spec.include_layer0)
      throw std::invalid_argument(
          "inductive inference: apply make_lightgcn_inductive (layer-0 sets dropped) "
          "before serving new entities");
  }

  NormVariant norm = model.normalization();
  NormalizedGraph g_ext = normalize(ctx.extended, norm);
  // First-product graph: extended minus new users' edges.
  NormalizedGraph g_first =
      new_users ? normalize(detail::strip_entities(ctx.extended, ctx.new_user, {}), norm)
                : g_ext;
  bool refresh = ctx.refresh_user_embeddings || new_users;
  // Static user path (refresh off): extended minus new entities == the
  // training-time edges, expressed in the extended index space.
  NormalizedGraph g_static;
  if (!refresh)
    g_static = normalize(detail::strip_entities(ctx.extended, ctx.new_user, ctx.new_item), norm);

  std::vector<LayerOutputs> full;
  for (const Network& net : model.nets) {
    if (net.spec.variant == Variant::lightgcn) {
      Matrix u0 = detail::extend_table(net.user0, ctx.extended.num_users, ctx.new_user);
      Matrix e0 = detail::extend_table(net.item0, ctx.extended.num_items, ctx.new_item);
      full.push_back(propagate_lightgcn_with(
          [&](std::size_t) -> const NormalizedGraph& { return g_ext; }, u0, e0,
          net.spec.num_prop_layers));
    } else {
      Matrix u0 = detail::extend_table(net.user0, ctx.extended.num_users, ctx.new_user);
      auto graph_for = [&](std::size_t p) -> const NormalizedGraph& {
        if (p == 1) return g_first;
        bool to_users = (p % 2 == 0);
        if (to_users && !refresh) return g_static;
        return g_ext;
      };
      full.push_back(propagate_cf_lgcn_u_with(graph_for, u0, net.spec.num_prop_layers));
    }
  }

  FusionPlan plan = detail::plan_model_fusion(model, full);
  std::vector<const LayerOutputs*> ptrs;
  for (const LayerOutputs& lo : full) ptrs.push_back(&lo);
  return apply_fusion(ptrs, plan);
}

// Item embeddings (existing and new) after revealing new items' interactions.
inline Matrix infer_new_items(const InductiveContext& ctx) {
  if (detail::any_flag(ctx.new_user))
    throw std::invalid_argument("infer_new_items: context declares new users; use infer_all");
  for (const Network& net : ctx.model->nets)
    if (net.spec.variant == Variant::lightgcn)
      throw std::invalid_argument("infer_new_items: lightgcn models go through infer_all");
  detail::warn_isolated(ctx.extended, ctx.new_item, false);
  return inductive_forward(ctx).items;
}

// User embeddings (existing and new) after revealing new users' interactions.
inline Matrix infer_new_users(const InductiveContext& ctx) {
  if (detail::any_flag(ctx.new_item))
    throw std::invalid_argument("infer_new_users: context declares new items; use infer_all");
  for (const Network& net : ctx.model->nets) {
    if (net.spec.variant == Variant::lightgcn)
      throw std::invalid_argument("infer_new_users: lightgcn models go through infer_all");
    if (net.spec.include_layer0)
      throw std::invalid_argument(
          "infer_new_users: requires a model trained with include_layer0 = false");
  }
  detail::warn_isolated(ctx.extended, ctx.new_user, true);
  return inductive_forward(ctx).users;
}

// Both sides at once; new users and new items may appear together.
inline FusedEmbeddings infer_all(const InductiveContext& ctx) {
  detail::warn_isolated(ctx.extended, ctx.new_user, true);
  detail::warn_isolated(ctx.extended, ctx.new_item, false);
  return inductive_forward(ctx);
}

// LightGCN served inductively: identical parameters, layer-0 sets excluded
// from fusion so newly appended zero rows compete on equal footing.
inline Model make_lightgcn_inductive(const Model& model) {
  model.validate();
  for (const Network& net : model.nets) {
    if (net.spec.variant != Variant::lightgcn)
      throw std::invalid_argument("make_lightgcn_inductive: model is not lightgcn");
    if (net.spec.num_prop_layers == 0)
      throw std::invalid_argument(
          "make_lightgcn_inductive: a zero-layer model has nothing left after "
          "dropping layer 0");
  }
  Model out = model;
  for (Network& net : out.nets) net.spec.include_layer0 = false;
  return out;
}

// Evaluation options implementing the transductive lower-bound protocol:
// held users are counted with metric 0, held items are never recommendable.
inline EvalOptions lower_bound_eval_options(const InductiveBundle& ind) {
  EvalOptions opts;
  opts.excluded_items = ind.held_items;
  opts.zero_metric_users = ind.held_users;
  // zero_metric_users is binary-searched during evaluation.
  std::sort(opts.zero_metric_users.begin(), opts.zero_metric_users.end());
  std::sort(opts.excluded_items.begin(), opts.excluded_items.end());
  return opts;
}

}  // namespace lightcf
