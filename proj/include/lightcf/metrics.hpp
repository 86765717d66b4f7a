#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf {

struct EvalResult {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users_evaluated = 0;
};

// Top-k item indices by score, excluding masked items. Ties break toward the
// smaller item index so rankings are deterministic.
inline std::vector<std::size_t> topk(std::span<const double> scores,
                                     std::span<const std::size_t> mask_sorted,
                                     std::size_t k) {
  std::vector<std::size_t> cand;
  cand.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::binary_search(mask_sorted.begin(), mask_sorted.end(), i)) cand.push_back(i);
  if (k > cand.size())
    throw std::invalid_argument("topk: k exceeds the number of unmasked candidates");
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
  cand.resize(k);
  return cand;
}

// recall@k with the full test-set size as denominator. A nonzero
// denominator_cap switches to the alternative convention min(cap, |test|),
// kept as a reproduction diagnostic.
inline double recall_at_k(const std::vector<std::size_t>& topk_items,
                          const std::vector<std::size_t>& test_sorted,
                          std::size_t denominator_cap = 0) {
  if (test_sorted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : topk_items)
    if (std::binary_search(test_sorted.begin(), test_sorted.end(), i)) ++hits;
  std::size_t denom = denominator_cap ? std::min(denominator_cap, test_sorted.size())
                                      : test_sorted.size();
  return double(hits) / double(denom);
}

// Binary-gain NDCG; the ideal DCG places min(k, |test|) hits at the top.
// nominal_k defaults to the list length and only differs when a toy-sized
// candidate pool forced a shorter list.
inline double ndcg_at_k(const std::vector<std::size_t>& topk_items,
                        const std::vector<std::size_t>& test_sorted,
                        std::size_t nominal_k = 0) {
  if (test_sorted.empty()) return 0.0;
  if (nominal_k == 0) nominal_k = topk_items.size();
  double dcg = 0.0;
  for (std::size_t r = 0; r < topk_items.size(); ++r)
    if (std::binary_search(test_sorted.begin(), test_sorted.end(), topk_items[r]))
      dcg += 1.0 / std::log2(double(r) + 2.0);
  double idcg = 0.0;
  std::size_t ideal = std::min(nominal_k, test_sorted.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(double(r) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

struct EvalOptions {
  // Items that may never be recommended (sorted), e.g. held-out items in the
  // transductive lower-bound protocol.
  std::vector<std::size_t> excluded_items;
  // Users counted into the average with metric 0 (sorted), e.g. held-out
  // users a transductive model cannot serve.
  std::vector<std::size_t> zero_metric_users;
  // Diagnostic: recall denominator min(k, |test|) instead of |test|.
  bool capped_recall_denominator = false;
};

// Streaming evaluator: one score row per user, never an m x n matrix unless
// the caller asks for one. Users with empty test sets are skipped; metric
// values are fractions in [0,1] (reports scale them by 100).
inline std::vector<EvalResult> evaluate_embeddings(
    const FusedEmbeddings& fused, const InteractionGraph& train,
    const std::vector<std::vector<std::size_t>>& test_sets,
    const std::vector<std::size_t>& ks, const EvalOptions& opts = {}) {
  std::size_t m = fused.users.rows(), n = fused.items.rows();
  if (test_sets.size() != m)
    throw std::invalid_argument("evaluate: test_sets size != num users");
  std::vector<EvalResult> res(ks.size());
  for (std::size_t j = 0; j < ks.size(); ++j) res[j].k = ks[j];
  std::size_t kmax = 0;
  for (std::size_t k : ks) kmax = std::max(kmax, k);

  std::vector<char> masked(n, 0);
  for (std::size_t u = 0; u < m; ++u) {
    const auto& test = test_sets[u];
    if (test.empty()) continue;
    for (auto& r : res) ++r.users_evaluated;
    if (std::binary_search(opts.zero_metric_users.begin(), opts.zero_metric_users.end(), u))
      continue;  // counted, contributes 0

    std::fill(masked.begin(), masked.end(), 0);
    std::size_t n_masked = 0;
    auto mask_item = [&](std::size_t i) {
      if (!masked[i]) { masked[i] = 1; ++n_masked; }
    };
    if (u < train.num_users)
      for (std::size_t i : train.items_of(u)) mask_item(i);
    for (std::size_t i : opts.excluded_items) mask_item(i);

    std::vector<double> scores = score_row(fused, u);
    std::vector<std::size_t> cand;
    cand.reserve(n - n_masked);
    for (std::size_t i = 0; i < n; ++i)
      if (!masked[i]) cand.push_back(i);
    std::size_t take = std::min(kmax, cand.size());
    auto better = [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    };
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end(), better);
    cand.resize(take);

    for (std::size_t j = 0; j < ks.size(); ++j) {
      std::size_t len = std::min(ks[j], take);
      std::vector<std::size_t> head(cand.begin(), cand.begin() + len);
      res[j].recall += recall_at_k(head, test, opts.capped_recall_denominator ? ks[j] : 0);
      res[j].ndcg += ndcg_at_k(head, test, ks[j]);
    }
  }
  for (auto& r : res) {
    if (r.users_evaluated > 0) {
      r.recall /= double(r.users_evaluated);
      r.ndcg /= double(r.users_evaluated);
    }
  }
  return res;
}

inline EvalResult evaluate_model(const Model& model, const NormalizedGraph& g_train,
                                 const std::vector<std::vector<std::size_t>>& test_sets,
                                 std::size_t k, const EvalOptions& opts = {}) {
  ModelForward f = model_forward(g_train, model);
  return evaluate_embeddings(f.fused, g_train.edges, test_sets, {k}, opts).front();
}

}  // namespace lightcf
