#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lightcf/matrix.hpp"
#include "lightcf/normalize.hpp"

namespace lightcf {

// Model families:
//   cf_lgcn_u  - learns user embeddings only; item vectors are derived by
//                aggregation (products run R^T, R, R^T, ...).
//   cf_lgcn_e  - exact mirror: learns item embeddings only.
//   lightgcn   - learns both tables, coupled propagation; with zero layers it
//                degenerates to plain matrix factorization (the MF baseline).
enum class Variant { cf_lgcn_u, cf_lgcn_e, lightgcn };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::cf_lgcn_u: return "cf_lgcn_u";
    case Variant::cf_lgcn_e: return "cf_lgcn_e";
    case Variant::lightgcn: return "lightgcn";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "cf_lgcn_u") return Variant::cf_lgcn_u;
  if (s == "cf_lgcn_e") return Variant::cf_lgcn_e;
  if (s == "lightgcn") return Variant::lightgcn;
  throw std::invalid_argument("unknown model variant: " + s);
}

// num_prop_layers counts graph products for cf_lgcn_u/e (so 3 means
// R^T, R, R^T) and coupled layers for lightgcn (each layer refreshes both
// sides once). include_layer0 controls whether the layer-0 parameter table
// participates in fusion; inductive serving of new users requires training
// with it off.
struct NetworkSpec {
  Variant variant = Variant::cf_lgcn_u;
  std::size_t num_prop_layers = 1;
  NormVariant normalization = NormVariant::symmetric;
  bool include_layer0 = true;
};

enum class FusionMode { mean, concat };

inline std::string to_string(FusionMode m) {
  return m == FusionMode::mean ? "mean" : "concat";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "mean") return FusionMode::mean;
  if (s == "concat") return FusionMode::concat;
  throw std::invalid_argument("unknown fusion mode: " + s);
}

// weights apply to mean fusion only and are positional per side: a side with
// k sets consumes the first k entries. Empty means uniform 1/k per side.
struct FusionSpec {
  FusionMode mode = FusionMode::concat;
  std::vector<double> weights;
};

// Layer sets produced by one network, in layer order. For cf_lgcn_u the
// user_sets are [U(0), U(2), ...] and item_sets are [E(1), E(3), ...]; for
// lightgcn both sides run [X(0) .. X(L)].
struct LayerOutputs {
  std::vector<Matrix> user_sets;
  std::vector<Matrix> item_sets;
};

// ---------------------------------------------------------------------------
// Propagation. The *_with variants take a per-product graph selector
// (1-based product index -> graph); inductive inference substitutes extended
// graphs for individual products through this hook. Everything below returns
// full chains including layer 0; fusion-time selection happens separately so
// gradients can always walk the complete chain.
// ---------------------------------------------------------------------------

template <typename GraphFor>
LayerOutputs propagate_cf_lgcn_u_with(GraphFor&& graph_for, const EmbeddingTable& u0,
                                      std::size_t products) {
  LayerOutputs out;
  out.user_sets.reserve(products / 2 + 1);
  out.item_sets.reserve((products + 1) / 2);
  out.user_sets.push_back(u0);
  for (std::size_t p = 1; p <= products; ++p) {
    const NormalizedGraph& g = graph_for(p);
    if (p % 2 == 1)
      out.item_sets.push_back(agg_users_to_items(g, out.user_sets.back()));
    else
      out.user_sets.push_back(agg_items_to_users(g, out.item_sets.back()));
  }
  return out;
}

template <typename GraphFor>
LayerOutputs propagate_cf_lgcn_e_with(GraphFor&& graph_for, const EmbeddingTable& e0,
                                      std::size_t products) {
  LayerOutputs out;
  out.item_sets.reserve(products / 2 + 1);
  out.user_sets.reserve((products + 1) / 2);
  out.item_sets.push_back(e0);
  for (std::size_t p = 1; p <= products; ++p) {
    const NormalizedGraph& g = graph_for(p);
    if (p % 2 == 1)
      out.user_sets.push_back(agg_items_to_users(g, out.item_sets.back()));
    else
      out.item_sets.push_back(agg_users_to_items(g, out.user_sets.back()));
  }
  return out;
}

template <typename GraphFor>
LayerOutputs propagate_lightgcn_with(GraphFor&& graph_for, const EmbeddingTable& u0,
                                     const EmbeddingTable& e0, std::size_t layers) {
  LayerOutputs out;
  out.user_sets.reserve(layers + 1);
  out.item_sets.reserve(layers + 1);
  out.user_sets.push_back(u0);
  out.item_sets.push_back(e0);
  for (std::size_t l = 1; l <= layers; ++l) {
    const NormalizedGraph& g = graph_for(l);
    Matrix nu = agg_items_to_users(g, out.item_sets[l - 1]);
    Matrix ni = agg_users_to_items(g, out.user_sets[l - 1]);
    out.user_sets.push_back(std::move(nu));
    out.item_sets.push_back(std::move(ni));
  }
  return out;
}

inline LayerOutputs propagate_cf_lgcn_u(const NormalizedGraph& g, const EmbeddingTable& u0,
                                        std::size_t products) {
  return propagate_cf_lgcn_u_with([&](std::size_t) -> const NormalizedGraph& { return g; },
                                  u0, products);
}

inline LayerOutputs propagate_cf_lgcn_e(const NormalizedGraph& g, const EmbeddingTable& e0,
                                        std::size_t products) {
  return propagate_cf_lgcn_e_with([&](std::size_t) -> const NormalizedGraph& { return g; },
                                  e0, products);
}

// Drops the layer-0 set(s) from the fused view when the network excludes them.
inline LayerOutputs select_fused_sets(LayerOutputs full, const NetworkSpec& spec) {
  if (!spec.include_layer0) {
    switch (spec.variant) {
      case Variant::cf_lgcn_u:
        full.user_sets.erase(full.user_sets.begin());
        break;
      case Variant::cf_lgcn_e:
        full.item_sets.erase(full.item_sets.begin());
        break;
      case Variant::lightgcn:
        full.user_sets.erase(full.user_sets.begin());
        full.item_sets.erase(full.item_sets.begin());
        break;
    }
  }
  return full;
}

inline LayerOutputs forward_cf_lgcn_u(const NormalizedGraph& g, const EmbeddingTable& u0,
                                      const NetworkSpec& spec) {
  if (spec.variant != Variant::cf_lgcn_u)
    throw std::invalid_argument("forward_cf_lgcn_u: spec variant mismatch");
  if (u0.rows() != g.num_users())
    throw std::invalid_argument("forward_cf_lgcn_u: table rows != num_users");
  return select_fused_sets(propagate_cf_lgcn_u(g, u0, spec.num_prop_layers), spec);
}

inline LayerOutputs forward_cf_lgcn_e(const NormalizedGraph& g, const EmbeddingTable& e0,
                                      const NetworkSpec& spec) {
  if (spec.variant != Variant::cf_lgcn_e)
    throw std::invalid_argument("forward_cf_lgcn_e: spec variant mismatch");
  if (e0.rows() != g.num_items())
    throw std::invalid_argument("forward_cf_lgcn_e: table rows != num_items");
  return select_fused_sets(propagate_cf_lgcn_e(g, e0, spec.num_prop_layers), spec);
}

// Returns all L+1 sets per side including layer 0.
inline LayerOutputs forward_lightgcn(const NormalizedGraph& g, const EmbeddingTable& u0,
                                     const EmbeddingTable& e0, std::size_t layers) {
  if (u0.rows() != g.num_users() || e0.rows() != g.num_items())
    throw std::invalid_argument("forward_lightgcn: table rows mismatch");
  if (u0.cols() != e0.cols())
    throw std::invalid_argument("forward_lightgcn: table dims differ");
  return propagate_lightgcn_with([&](std::size_t) -> const NormalizedGraph& { return g; },
                                 u0, e0, layers);
}

// ---------------------------------------------------------------------------
// Fusion. A FusionPlan records exactly which (network, set) pairs feed each
// side and with what weight/offset, so the backward pass can route cotangents
// through the identical selection (including the concat drop rule).
// ---------------------------------------------------------------------------

struct FusionPlan {
  struct Source {
    std::size_t net = 0;   // network index
    std::size_t set = 0;   // index into that network's *full* user/item sets
    double weight = 1.0;   // mean mode only
  };
  FusionMode mode = FusionMode::concat;
  std::size_t dim = 0;  // per-set width d; concat output width is dim * sources
  std::vector<Source> user_sources, item_sources;

  std::size_t fused_dim() const {
    return mode == FusionMode::concat ? dim * user_sources.size() : dim;
  }
};

namespace detail {

inline FusionPlan plan_pooled_fusion(std::vector<FusionPlan::Source> user_sources,
                                     std::vector<FusionPlan::Source> item_sources,
                                     const FusionSpec& fusion, std::size_t dim) {
  FusionPlan plan;
  plan.mode = fusion.mode;
  plan.dim = dim;
  if (fusion.mode == FusionMode::concat) {
    if (!fusion.weights.empty())
      throw std::invalid_argument("fuse: weights apply to mean fusion only");
    // Drop rule: uneven sides lose their earliest (lowest-layer) surplus sets.
    while (user_sources.size() > item_sources.size())
      user_sources.erase(user_sources.begin());
    while (item_sources.size() > user_sources.size())
      item_sources.erase(item_sources.begin());
    if (user_sources.empty())
      throw std::invalid_argument("fuse: no sets left to fuse; model cannot score");
  } else {
    if (user_sources.empty() || item_sources.empty())
      throw std::invalid_argument("fuse: a side has no sets; model cannot score");
    std::size_t need = std::max(user_sources.size(), item_sources.size());
    if (fusion.weights.empty()) {
      for (auto& s : user_sources) s.weight = 1.0 / double(user_sources.size());
      for (auto& s : item_sources) s.weight = 1.0 / double(item_sources.size());
    } else {
      if (fusion.weights.size() != need)
        throw std::invalid_argument("fuse: mean weight count must match set count");
      for (std::size_t j = 0; j < user_sources.size(); ++j)
        user_sources[j].weight = fusion.weights[j];
      for (std::size_t j = 0; j < item_sources.size(); ++j)
        item_sources[j].weight = fusion.weights[j];
    }
  }
  plan.user_sources = std::move(user_sources);
  plan.item_sources = std::move(item_sources);
  return plan;
}

inline Matrix apply_side(const std::vector<const LayerOutputs*>& outs,
                         const std::vector<FusionPlan::Source>& sources, FusionMode mode,
                         std::size_t dim, bool user_side) {
  auto set_of = [&](const FusionPlan::Source& s) -> const Matrix& {
    return user_side ? outs[s.net]->user_sets[s.set] : outs[s.net]->item_sets[s.set];
  };
  std::size_t rows = set_of(sources.front()).rows();
  if (mode == FusionMode::mean) {
    Matrix fused(rows, dim);
    for (const auto& s : sources) fused.add_scaled(set_of(s), s.weight);
    return fused;
  }
  Matrix fused(rows, dim * sources.size());
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const Matrix& src = set_of(sources[j]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < dim; ++c) fused(r, j * dim + c) = src(r, c);
  }
  return fused;
}

}  // namespace detail

struct FusedEmbeddings {
  Matrix users;  // m x d'
  Matrix items;  // n x d'
};

inline FusedEmbeddings apply_fusion(const std::vector<const LayerOutputs*>& outs,
                                    const FusionPlan& plan) {
  FusedEmbeddings f;
  f.users = detail::apply_side(outs, plan.user_sources, plan.mode, plan.dim, true);
  f.items = detail::apply_side(outs, plan.item_sources, plan.mode, plan.dim, false);
  return f;
}

// Fuses the layer sets of a single network's outputs (already selected).
inline FusedEmbeddings fuse(const LayerOutputs& outs, const FusionSpec& fusion) {
  std::size_t dim = 0;
  if (!outs.user_sets.empty()) dim = outs.user_sets.front().cols();
  else if (!outs.item_sets.empty()) dim = outs.item_sets.front().cols();
  else throw std::invalid_argument("fuse: empty layer outputs");
  std::vector<FusionPlan::Source> us, is;
  for (std::size_t j = 0; j < outs.user_sets.size(); ++j) us.push_back({0, j, 1.0});
  for (std::size_t j = 0; j < outs.item_sets.size(); ++j) is.push_back({0, j, 1.0});
  FusionPlan plan = detail::plan_pooled_fusion(std::move(us), std::move(is), fusion, dim);
  return apply_fusion({&outs}, plan);
}

// ---------------------------------------------------------------------------
// Models: one network, or two of the same family pooled under a shared
// fusion spec (the twin configuration).
// ---------------------------------------------------------------------------

struct Network {
  NetworkSpec spec;
  EmbeddingTable user0;  // cf_lgcn_u and lightgcn
  EmbeddingTable item0;  // cf_lgcn_e and lightgcn
};

struct Model {
  std::vector<Network> nets;
  FusionSpec fusion;

  bool twin() const { return nets.size() == 2; }

  std::size_t dim() const {
    const Network& n = nets.at(0);
    return n.user0.empty() ? n.item0.cols() : n.user0.cols();
  }

  NormVariant normalization() const { return nets.at(0).spec.normalization; }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (const Network& n : nets) c += n.user0.size() + n.item0.size();
    return c;
  }

  std::vector<EmbeddingTable*> tables() {
    std::vector<EmbeddingTable*> t;
    for (Network& n : nets) {
      if (!n.user0.empty()) t.push_back(&n.user0);
      if (!n.item0.empty()) t.push_back(&n.item0);
    }
    return t;
  }
  std::vector<const EmbeddingTable*> tables() const {
    std::vector<const EmbeddingTable*> t;
    for (const Network& n : nets) {
      if (!n.user0.empty()) t.push_back(&n.user0);
      if (!n.item0.empty()) t.push_back(&n.item0);
    }
    return t;
  }

  void validate() const {
    if (nets.empty() || nets.size() > 2)
      throw std::invalid_argument("model: expected one or two networks");
    for (const Network& n : nets) {
      bool want_user = n.spec.variant != Variant::cf_lgcn_e;
      bool want_item = n.spec.variant != Variant::cf_lgcn_u;
      if (want_user != !n.user0.empty() || want_item != !n.item0.empty())
        throw std::invalid_argument("model: parameter tables do not match variant");
    }
    if (nets.size() == 2) {
      if (nets[0].spec.variant != nets[1].spec.variant)
        throw std::invalid_argument("twin model: networks must share a variant family");
      if (nets[0].spec.variant == Variant::lightgcn)
        throw std::invalid_argument("twin model: supported for cf_lgcn_u/cf_lgcn_e only");
      if (nets[0].spec.normalization != nets[1].spec.normalization)
        throw std::invalid_argument("twin model: networks must share normalization");
      std::size_t d0 = nets[0].user0.empty() ? nets[0].item0.cols() : nets[0].user0.cols();
      std::size_t d1 = nets[1].user0.empty() ? nets[1].item0.cols() : nets[1].user0.cols();
      if (d0 != d1) throw std::invalid_argument("twin model: networks must share dim");
    }
  }
};

// Gaussian-initialized model. Twin networks draw from one seeded stream in
// net order, so a (seed, shape) pair pins every parameter.
inline Model make_model(Variant variant, bool twin, std::size_t num_users,
                        std::size_t num_items, std::size_t dim, std::size_t layers,
                        NormVariant norm, bool include_layer0, FusionSpec fusion,
                        std::uint64_t seed, double init_stddev = 0.1) {
  Model m;
  m.fusion = std::move(fusion);
  Rng rng(seed);
  std::size_t copies = twin ? 2 : 1;
  for (std::size_t k = 0; k < copies; ++k) {
    Network net;
    net.spec = {variant, layers, norm, include_layer0};
    if (variant != Variant::cf_lgcn_e)
      net.user0 = Matrix::gaussian(num_users, dim, init_stddev, rng);
    if (variant != Variant::cf_lgcn_u)
      net.item0 = Matrix::gaussian(num_items, dim, init_stddev, rng);
    m.nets.push_back(std::move(net));
  }
  m.validate();
  return m;
}

// Full forward state for one graph: per-net full chains, the fusion plan and
// the fused embeddings. backward() consumes this cache and refuses to run
// against a different graph than the one recorded here.
struct ModelForward {
  std::vector<LayerOutputs> full;
  FusionPlan plan;
  FusedEmbeddings fused;
  const NormalizedGraph* graph = nullptr;
};

namespace detail {

inline LayerOutputs propagate_network(const NormalizedGraph& g, const Network& net) {
  switch (net.spec.variant) {
    case Variant::cf_lgcn_u:
      if (net.user0.rows() != g.num_users())
        throw std::invalid_argument("forward: user table rows != num_users");
      return propagate_cf_lgcn_u(g, net.user0, net.spec.num_prop_layers);
    case Variant::cf_lgcn_e:
      if (net.item0.rows() != g.num_items())
        throw std::invalid_argument("forward: item table rows != num_items");
      return propagate_cf_lgcn_e(g, net.item0, net.spec.num_prop_layers);
    case Variant::lightgcn:
      return forward_lightgcn(g, net.user0, net.item0, net.spec.num_prop_layers);
  }
  throw std::logic_error("unreachable");
}

// Pooled (net, full-set-index) sources honoring include_layer0 per net.
inline FusionPlan plan_model_fusion(const Model& model,
                                    const std::vector<LayerOutputs>& full) {
  std::vector<FusionPlan::Source> us, is;
  for (std::size_t k = 0; k < model.nets.size(); ++k) {
    const NetworkSpec& spec = model.nets[k].spec;
    bool skip_user0 = !spec.include_layer0 && spec.variant != Variant::cf_lgcn_e;
    bool skip_item0 = !spec.include_layer0 && spec.variant != Variant::cf_lgcn_u;
    for (std::size_t j = skip_user0 ? 1 : 0; j < full[k].user_sets.size(); ++j)
      us.push_back({k, j, 1.0});
    for (std::size_t j = skip_item0 ? 1 : 0; j < full[k].item_sets.size(); ++j)
      is.push_back({k, j, 1.0});
  }
  return plan_pooled_fusion(std::move(us), std::move(is), model.fusion, model.dim());
}

}  // namespace detail

inline ModelForward model_forward(const NormalizedGraph& g, const Model& model) {
  model.validate();
  ModelForward f;
  f.graph = &g;
  f.full.reserve(model.nets.size());
  for (const Network& net : model.nets)
    f.full.push_back(detail::propagate_network(g, net));
  f.plan = detail::plan_model_fusion(model, f.full);
  std::vector<const LayerOutputs*> ptrs;
  for (const LayerOutputs& lo : f.full) ptrs.push_back(&lo);
  f.fused = apply_fusion(ptrs, f.plan);
  return f;
}

// Runs both networks of a twin model and fuses the pooled sets.
inline FusedEmbeddings twin_forward(const NormalizedGraph& g, const Model& model) {
  if (!model.twin()) throw std::invalid_argument("twin_forward: model is not twin");
  return model_forward(g, model).fused;
}

// ---------------------------------------------------------------------------
// Scoring.
// ---------------------------------------------------------------------------

inline std::vector<double> score_row(const FusedEmbeddings& f, std::size_t u) {
  std::vector<double> s(f.items.rows());
  auto ur = f.users.row(u);
  for (std::size_t i = 0; i < f.items.rows(); ++i) s[i] = dot(ur, f.items.row(i));
  return s;
}

inline Matrix score_all(const Matrix& user_emb, const Matrix& item_emb) {
  if (user_emb.cols() != item_emb.cols())
    throw std::invalid_argument("score_all: embedding widths differ");
  Matrix z(user_emb.rows(), item_emb.rows());
  for (std::size_t u = 0; u < user_emb.rows(); ++u) {
    auto ur = user_emb.row(u);
    for (std::size_t i = 0; i < item_emb.rows(); ++i) z(u, i) = dot(ur, item_emb.row(i));
  }
  return z;
}

}  // namespace lightcf
