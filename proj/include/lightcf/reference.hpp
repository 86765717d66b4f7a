#pragma once

// Slow, dense, brute-force reference implementations. Everything here is
// deliberately written as naive loops over dense matrices and full sorts so
// it shares no code path with the streaming/sparse implementations it is
// used to cross-check. Strictly for small instances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lightcf/bpr.hpp"
#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/normalize.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf::reference {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("reference::matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix identity(std::size_t k) {
  Matrix e(k, k);
  for (std::size_t i = 0; i < k; ++i) e(i, i) = 1.0;
  return e;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  c += b;
  return c;
}

inline Matrix scaled(const Matrix& a, double s) {
  Matrix c = a;
  c *= s;
  return c;
}

// Dense weight matrices of the two directional products, built entry by entry
// from the public per-edge weight accessor.
inline Matrix dense_to_users_matrix(const NormalizedGraph& g) {
  Matrix w(g.num_users(), g.num_items());
  for (std::size_t u = 0; u < g.num_users(); ++u)
    for (std::size_t i = 0; i < g.num_items(); ++i)
      w(u, i) = g.edge_weight(u, i, Direction::to_users);
  return w;
}

inline Matrix dense_to_items_matrix(const NormalizedGraph& g) {
  Matrix w(g.num_items(), g.num_users());
  for (std::size_t i = 0; i < g.num_items(); ++i)
    for (std::size_t u = 0; u < g.num_users(); ++u)
      w(i, u) = g.edge_weight(u, i, Direction::to_items);
  return w;
}

// Brute-force ranking evaluation: dense scores, full sort, naive set math.
inline std::vector<EvalResult> brute_force_evaluate(
    const FusedEmbeddings& fused, const InteractionGraph& train,
    const std::vector<std::vector<std::size_t>>& test_sets,
    const std::vector<std::size_t>& ks, const EvalOptions& opts = {}) {
  std::size_t m = fused.users.rows(), n = fused.items.rows();
  Matrix scores(m, n);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < fused.users.cols(); ++c)
        s += fused.users(u, c) * fused.items(i, c);
      scores(u, i) = s;
    }

  std::vector<EvalResult> res(ks.size());
  for (std::size_t j = 0; j < ks.size(); ++j) res[j].k = ks[j];
  for (std::size_t u = 0; u < m; ++u) {
    const auto& test = test_sets[u];
    if (test.empty()) continue;
    for (auto& r : res) ++r.users_evaluated;
    bool zeroed = false;
    for (std::size_t z : opts.zero_metric_users) zeroed = zeroed || z == u;
    if (zeroed) continue;

    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n; ++i) {
      bool masked = false;
      if (u < train.num_users)
        for (std::size_t t : train.items_of(u)) masked = masked || t == i;
      for (std::size_t x : opts.excluded_items) masked = masked || x == i;
      if (!masked) cand.push_back(i);
    }
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      if (scores(u, a) != scores(u, b)) return scores(u, a) > scores(u, b);
      return a < b;
    });

    for (std::size_t j = 0; j < ks.size(); ++j) {
      std::size_t len = std::min(ks[j], cand.size());
      std::size_t hits = 0;
      double dcg = 0.0;
      for (std::size_t r = 0; r < len; ++r) {
        bool hit = false;
        for (std::size_t t : test) hit = hit || t == cand[r];
        if (hit) {
          ++hits;
          dcg += 1.0 / std::log2(double(r) + 2.0);
        }
      }
      double idcg = 0.0;
      for (std::size_t r = 0; r < std::min(ks[j], test.size()); ++r)
        idcg += 1.0 / std::log2(double(r) + 2.0);
      std::size_t denom = opts.capped_recall_denominator ? std::min(ks[j], test.size())
                                                         : test.size();
      res[j].recall += double(hits) / double(denom);
      res[j].ndcg += idcg == 0.0 ? 0.0 : dcg / idcg;
    }
  }
  for (auto& r : res)
    if (r.users_evaluated > 0) {
      r.recall /= double(r.users_evaluated);
      r.ndcg /= double(r.users_evaluated);
    }
  return res;
}

// Central finite differences of the batch objective with respect to every
// parameter-table entry, h-step, aligned with model.tables().
inline std::vector<Matrix> finite_difference_gradients(const NormalizedGraph& g,
                                                       const Model& model,
                                                       std::span<const BprTriple> triples,
                                                       double l2_lambda, double h = 1e-5) {
  Model work = model;
  auto tables = work.tables();
  std::vector<Matrix> grads;
  for (EmbeddingTable* t : tables) grads.emplace_back(t->rows(), t->cols());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (std::size_t j = 0; j < tables[t]->size(); ++j) {
      double saved = tables[t]->data()[j];
      tables[t]->data()[j] = saved + h;
      double up = model_batch_loss(g, work, triples, l2_lambda);
      tables[t]->data()[j] = saved - h;
      double down = model_batch_loss(g, work, triples, l2_lambda);
      tables[t]->data()[j] = saved;
      grads[t].data()[j] = (up - down) / (2.0 * h);
    }
  }
  return grads;
}

// Worst-case discrepancy between two gradient sets, relative once the
// magnitudes rise above `floor` (below it the comparison is absolute).
inline double max_gradient_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                 double floor = 1e-3) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient sets differ in size");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (!a[t].same_shape(b[t])) throw std::invalid_argument("gradient shapes differ");
    for (std::size_t j = 0; j < a[t].size(); ++j) {
      double x = a[t].data()[j], y = b[t].data()[j];
      worst = std::max(worst, std::abs(x - y) / std::max(floor, std::abs(x) + std::abs(y)));
    }
  }
  return worst;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(a.data()[j] - b.data()[j]));
  return worst;
}

}  // namespace lightcf::reference
