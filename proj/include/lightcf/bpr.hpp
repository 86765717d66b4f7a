#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lightcf/data.hpp"
#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/normalize.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf {

// ---------------------------------------------------------------------------
// Pairwise ranking loss. softplus(-margin) == -ln(sigmoid(margin)), written
// in the overflow-free form so a margin of -50 costs ~50 instead of inf.
// ---------------------------------------------------------------------------

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double bpr_loss(double z_pos, double z_neg) { return softplus(-(z_pos - z_neg)); }

struct BprTriple {
  std::size_t user, pos_item, neg_item;
};

inline std::vector<std::pair<double, double>> score_triples(const FusedEmbeddings& f,
                                                            std::span<const BprTriple> ts) {
  std::vector<std::pair<double, double>> z;
  z.reserve(ts.size());
  for (const BprTriple& t : ts) {
    auto ur = f.users.row(t.user);
    z.emplace_back(dot(ur, f.items.row(t.pos_item)), dot(ur, f.items.row(t.neg_item)));
  }
  return z;
}

// Batch objective: mean pairwise loss plus l2_lambda * sum of squared
// parameter-table entries. An empty batch leaves just the penalty.
inline double batch_loss(const std::vector<std::pair<double, double>>& scores,
                         const Model& model, double l2_lambda) {
  double s = 0.0;
  for (const auto& [zp, zn] : scores) s += bpr_loss(zp, zn);
  if (!scores.empty()) s /= double(scores.size());
  for (const EmbeddingTable* t : model.tables()) s += l2_lambda * t->sum_squares();
  return s;
}

inline double model_batch_loss(const NormalizedGraph& g, const Model& model,
                               std::span<const BprTriple> triples, double l2_lambda) {
  ModelForward f = model_forward(g, model);
  return batch_loss(score_triples(f.fused, triples), model, l2_lambda);
}

// ---------------------------------------------------------------------------
// Sampling: positives drawn uniformly from observed interactions, negatives
// uniformly from each user's non-interacted items.
// ---------------------------------------------------------------------------

inline std::size_t sample_negative(Rng& rng, const InteractionGraph& g, std::size_t u,
                                   std::size_t max_attempts = 64) {
  if (g.user_degree(u) >= g.num_items) {
    std::ostringstream msg;
    msg << "sample_negative: user " << u << " interacts with every item";
    throw std::runtime_error(msg.str());
  }
  std::uniform_int_distribution<std::size_t> dist(0, g.num_items - 1);
  for (std::size_t a = 0; a < max_attempts; ++a) {
    std::size_t i = dist(rng);
    if (!g.has_edge(u, i)) return i;
  }
  // Dense user: fall back to an exact draw over the complement.
  std::size_t free = g.num_items - g.user_degree(u);
  std::uniform_int_distribution<std::size_t> pick(0, free - 1);
  std::size_t want = pick(rng);
  auto row = g.items_of(u);
  std::size_t seen = 0, cursor = 0;
  for (std::size_t i = 0; i < g.num_items; ++i) {
    while (cursor < row.size() && row[cursor] < i) ++cursor;
    if (cursor < row.size() && row[cursor] == i) continue;
    if (seen++ == want) return i;
  }
  throw std::logic_error("sample_negative: unreachable");
}

inline std::vector<BprTriple> sample_batch(Rng& rng, const InteractionGraph& g,
                                           std::size_t batch_size,
                                           std::size_t negatives_per_positive = 1) {
  if (g.num_edges() == 0) throw std::invalid_argument("sample_batch: graph has no edges");
  if (negatives_per_positive == 0)
    throw std::invalid_argument("sample_batch: need at least one negative per positive");
  std::uniform_int_distribution<std::size_t> edge_dist(0, g.num_edges() - 1);
  std::vector<BprTriple> out;
  out.reserve(batch_size * negatives_per_positive);
  for (std::size_t b = 0; b < batch_size; ++b) {
    std::size_t e = edge_dist(rng);
    // Locate the user owning user-major edge slot e.
    std::size_t u =
        std::size_t(std::upper_bound(g.user_ptr.begin(), g.user_ptr.end(), e) -
                    g.user_ptr.begin()) - 1;
    std::size_t i = g.item_of[e];
    for (std::size_t r = 0; r < negatives_per_positive; ++r)
      out.push_back({u, i, sample_negative(rng, g, u)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edge dropout: keep each edge with probability 1-p and rescale surviving
// weights by 1/(1-p), leaving the expected propagated value unchanged. The
// scale vectors of the source graph are kept verbatim (degrees are not
// recomputed); only the edge set shrinks.
// ---------------------------------------------------------------------------

inline NormalizedGraph edge_dropout(Rng& rng, const NormalizedGraph& g, double p) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("edge_dropout: p must be in [0, 1)");
  NormalizedGraph out = g;
  if (p == 0.0) return out;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<Edge> kept;
  kept.reserve(g.edges.num_edges());
  for (std::size_t u = 0; u < g.edges.num_users; ++u)
    for (std::size_t i : g.edges.items_of(u))
      if (keep(rng)) kept.emplace_back(u, i);
  out.edges = from_edges(g.edges.num_users, g.edges.num_items, std::move(kept));
  out.global_scale = g.global_scale / (1.0 - p);
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-mode gradients. The score is linear in each parameter table, so the
// backward pass is: scatter per-triple cotangents into the fused embeddings,
// route them back to individual layer sets through the recorded fusion plan,
// then walk each propagation chain in reverse with the adjoint products.
// Returns one gradient per model.tables() entry, in the same order.
// ---------------------------------------------------------------------------

inline std::vector<Matrix> backward(const NormalizedGraph& g, const Model& model,
                                    const ModelForward& cache,
                                    std::span<const BprTriple> triples, double l2_lambda) {
  if (cache.graph != &g)
    throw std::logic_error("backward: forward cache was built for a different graph");
  if (cache.full.size() != model.nets.size())
    throw std::logic_error("backward: forward cache does not match the model");

  const Matrix& fu = cache.fused.users;
  const Matrix& fi = cache.fused.items;
  std::size_t dfused = fu.cols();
  Matrix gu(fu.rows(), dfused), gi(fi.rows(), dfused);
  double inv_b = triples.empty() ? 0.0 : 1.0 / double(triples.size());
  for (const BprTriple& t : triples) {
    auto ur = fu.row(t.user);
    double margin = dot(ur, fi.row(t.pos_item)) - dot(ur, fi.row(t.neg_item));
    double c = -sigmoid(-margin) * inv_b;  // dL/dz_pos; dL/dz_neg = -c
    axpy(gu.row(t.user), fi.row(t.pos_item), c);
    axpy(gu.row(t.user), fi.row(t.neg_item), -c);
    axpy(gi.row(t.pos_item), ur, c);
    axpy(gi.row(t.neg_item), ur, -c);
  }

  // Route fused cotangents back to (net, layer set).
  std::size_t d = cache.plan.dim;
  std::vector<std::vector<Matrix>> cot_user(model.nets.size()), cot_item(model.nets.size());
  for (std::size_t k = 0; k < model.nets.size(); ++k) {
    cot_user[k].resize(cache.full[k].user_sets.size());
    cot_item[k].resize(cache.full[k].item_sets.size());
  }
  auto route = [&](const std::vector<FusionPlan::Source>& sources, const Matrix& grad,
                   std::vector<std::vector<Matrix>>& cot, bool user_side) {
    for (std::size_t pos = 0; pos < sources.size(); ++pos) {
      const auto& src = sources[pos];
      const Matrix& set = user_side ? cache.full[src.net].user_sets[src.set]
                                    : cache.full[src.net].item_sets[src.set];
      Matrix& dst = cot[src.net][src.set];
      if (dst.empty()) dst = Matrix(set.rows(), d);
      if (cache.plan.mode == FusionMode::mean) {
        dst.add_scaled(grad, src.weight);
      } else {
        for (std::size_t r = 0; r < set.rows(); ++r)
          for (std::size_t c = 0; c < d; ++c) dst(r, c) += grad(r, pos * d + c);
      }
    }
  };
  route(cache.plan.user_sources, gu, cot_user, true);
  route(cache.plan.item_sources, gi, cot_item, false);

  // Walk each network's chain backwards.
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < model.nets.size(); ++k) {
    const NetworkSpec& spec = model.nets[k].spec;
    const LayerOutputs& full = cache.full[k];
    auto take = [](std::vector<Matrix>& v, std::size_t j, const Matrix& like) {
      if (v[j].empty()) return Matrix(like.rows(), like.cols());
      return std::move(v[j]);
    };
    if (spec.variant == Variant::lightgcn) {
      std::size_t layers = spec.num_prop_layers;
      Matrix cu = take(cot_user[k], layers, full.user_sets[layers]);
      Matrix ce = take(cot_item[k], layers, full.item_sets[layers]);
      for (std::size_t l = layers; l >= 1; --l) {
        Matrix pu = take(cot_user[k], l - 1, full.user_sets[l - 1]);
        Matrix pe = take(cot_item[k], l - 1, full.item_sets[l - 1]);
        pe += agg_items_to_users_adjoint(g, cu);  // U(l) = R~ . E(l-1)
        pu += agg_users_to_items_adjoint(g, ce);  // E(l) = R~^T . U(l-1)
        cu = std::move(pu);
        ce = std::move(pe);
      }
      grads.push_back(std::move(cu));
      grads.push_back(std::move(ce));
    } else {
      bool user_rooted = spec.variant == Variant::cf_lgcn_u;
      std::size_t products = spec.num_prop_layers;
      // Output of product p: alternating sides starting opposite the root.
      auto out_at = [&](std::size_t p) -> const Matrix& {
        bool away = (p % 2 == 1);  // an odd product lands on the non-root side
        if (user_rooted)
          return away ? full.item_sets[(p - 1) / 2] : full.user_sets[p / 2];
        return away ? full.user_sets[(p - 1) / 2] : full.item_sets[p / 2];
      };
      auto cot_at = [&](std::size_t p) -> Matrix& {
        bool away = (p % 2 == 1);
        if (user_rooted) return away ? cot_item[k][(p - 1) / 2] : cot_user[k][p / 2];
        return away ? cot_user[k][(p - 1) / 2] : cot_item[k][p / 2];
      };
      Matrix carry;
      for (std::size_t p = products; p >= 1; --p) {
        const Matrix& out = out_at(p);
        if (carry.empty()) carry = Matrix(out.rows(), out.cols());
        if (!cot_at(p).empty()) carry += cot_at(p);
        bool product_to_items = user_rooted == (p % 2 == 1);
        carry = product_to_items ? agg_users_to_items_adjoint(g, carry)
                                 : agg_items_to_users_adjoint(g, carry);
      }
      const Matrix& root = user_rooted ? model.nets[k].user0 : model.nets[k].item0;
      Matrix g0 = carry.empty() ? Matrix(root.rows(), root.cols()) : std::move(carry);
      Matrix& c0 = user_rooted ? cot_user[k][0] : cot_item[k][0];
      if (!c0.empty()) g0 += c0;
      grads.push_back(std::move(g0));
    }
  }

  // L2 penalty: d/dp of l2_lambda * sum(p^2) = 2 * l2_lambda * p.
  auto tables = model.tables();
  if (grads.size() != tables.size()) throw std::logic_error("backward: gradient misalignment");
  for (std::size_t t = 0; t < tables.size(); ++t)
    grads[t].add_scaled(*tables[t], 2.0 * l2_lambda);
  return grads;
}

// ---------------------------------------------------------------------------
// Adam with bias correction, one slot pair per parameter table.
// ---------------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> m1, m2;

  static AdamState for_model(const Model& model) {
    AdamState s;
    for (const EmbeddingTable* t : model.tables()) {
      s.m1.emplace_back(t->rows(), t->cols());
      s.m2.emplace_back(t->rows(), t->cols());
    }
    return s;
  }
};

inline void adam_step(AdamState& s, const std::vector<EmbeddingTable*>& params,
                      const std::vector<Matrix>& grads, double lr) {
  if (params.size() != s.m1.size() || grads.size() != params.size())
    throw std::invalid_argument("adam_step: state/parameter/gradient misalignment");
  ++s.step;
  double bc1 = 1.0 - std::pow(s.beta1, double(s.step));
  double bc2 = 1.0 - std::pow(s.beta2, double(s.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& p = *params[t];
    const Matrix& g = grads[t];
    if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      double gj = g.data()[j];
      double& m = s.m1[t].data()[j];
      double& v = s.m2[t].data()[j];
      m = s.beta1 * m + (1.0 - s.beta1) * gj;
      v = s.beta2 * v + (1.0 - s.beta2) * gj * gj;
      p.data()[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + s.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop: one pass over all observed interactions per epoch (shuffled,
// one uniform negative per positive by default), periodic validation, early
// stopping on recall, best-checkpoint return.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_lambda = 1e-4;
  std::size_t batch_size = 2048;
  std::size_t max_epochs = 1000;
  std::size_t eval_every = 20;   // epochs between validation passes
  std::size_t patience = 10;     // non-improving validations before stopping
  double edge_dropout_p = 0.0;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 0;
  double init_stddev = 0.1;

  void validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (l2_lambda < 0.0) throw std::invalid_argument("train: l2_lambda must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("train: eval_every must be >= 1");
    if (patience == 0) throw std::invalid_argument("train: patience must be >= 1");
    if (edge_dropout_p < 0.0 || edge_dropout_p >= 1.0)
      throw std::invalid_argument("train: edge_dropout_p must be in [0, 1)");
    if (negatives_per_positive == 0)
      throw std::invalid_argument("train: negatives_per_positive must be >= 1");
  }
};

struct TrainLogEntry {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_recall = 0.0;
  double val_ndcg = 0.0;
};

struct FitResult {
  Model model;
  std::vector<TrainLogEntry> log;
  std::size_t best_epoch = 0;
  double best_recall = 0.0;
  double best_ndcg = 0.0;
};

using Evaluator = std::function<EvalResult(const Model&)>;

// Standard validation evaluator: recall/ndcg@k on the bundle's validation
// sets over the undropped training graph.
inline Evaluator make_validation_evaluator(const DatasetBundle& data, std::size_t k,
                                           NormVariant norm) {
  auto g = std::make_shared<NormalizedGraph>(normalize(data.graph_train, norm));
  auto sets = std::make_shared<std::vector<std::vector<std::size_t>>>(data.val_sets);
  return [g, sets, k](const Model& model) { return evaluate_model(model, *g, *sets, k); };
}

inline FitResult fit(Model model, const DatasetBundle& data, const TrainConfig& cfg,
                     const Evaluator& evaluator) {
  cfg.validate();
  model.validate();
  Rng rng(cfg.seed);
  NormalizedGraph g_full = normalize(data.graph_train, model.normalization());
  std::vector<Edge> positives = data.graph_train.edge_list();
  if (positives.empty()) throw std::invalid_argument("fit: training graph has no edges");

  AdamState adam = AdamState::for_model(model);
  FitResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<EmbeddingTable> best_tables;
  std::size_t evals_since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(positives.begin(), positives.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < positives.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(positives.size(), start + cfg.batch_size);
      std::vector<BprTriple> triples;
      triples.reserve((stop - start) * cfg.negatives_per_positive);
      for (std::size_t j = start; j < stop; ++j)
        for (std::size_t r = 0; r < cfg.negatives_per_positive; ++r)
          triples.push_back({positives[j].first, positives[j].second,
                             sample_negative(rng, data.graph_train, positives[j].first)});

      NormalizedGraph dropped;
      const NormalizedGraph* gb = &g_full;
      if (cfg.edge_dropout_p > 0.0) {
        dropped = edge_dropout(rng, g_full, cfg.edge_dropout_p);
        gb = &dropped;
      }
      ModelForward fw = model_forward(*gb, model);
      double loss = batch_loss(score_triples(fw.fused, triples), model, cfg.l2_lambda);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "fit: non-finite loss at epoch " << epoch << ", batch " << batches
            << " (lr=" << cfg.learning_rate << ", l2=" << cfg.l2_lambda << ")";
        throw std::runtime_error(msg.str());
      }
      std::vector<Matrix> grads = backward(*gb, model, fw, triples, cfg.l2_lambda);
      adam_step(adam, model.tables(), grads, cfg.learning_rate);
      epoch_loss += loss;
      ++batches;
    }

    if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
      EvalResult r = evaluator(model);
      result.log.push_back({epoch, epoch_loss / double(batches), r.recall, r.ndcg});
      if (r.recall > best) {  // ties keep the earlier checkpoint
        best = r.recall;
        result.best_epoch = epoch;
        result.best_recall = r.recall;
        result.best_ndcg = r.ndcg;
        best_tables.clear();
        for (const EmbeddingTable* t : model.tables()) best_tables.push_back(*t);
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (evals_since_best >= cfg.patience) break;
    }
  }

  if (!best_tables.empty()) {
    auto tables = model.tables();
    for (std::size_t t = 0; t < tables.size(); ++t) *tables[t] = best_tables[t];
  }
  result.model = std::move(model);
  return result;
}

}  // namespace lightcf
