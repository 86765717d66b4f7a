#pragma once

// Self-contained property suites over randomly generated instances: algebraic
// identities, gradient checks against finite differences, metric-oracle
// equivalence, parameter accounting, loss fixed points and inductive
// consistency. No datasets are touched; everything is generated in-process
// from a seed. The `verify` command and the acceptance suite both run these.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lightcf/bpr.hpp"
#include "lightcf/inductive.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/propagation.hpp"
#include "lightcf/reference.hpp"

namespace lightcf::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline NormVariant variant_cycle(std::size_t t) {
  switch (t % 4) {
    case 0: return NormVariant::symmetric;
    case 1: return NormVariant::left;
    case 2: return NormVariant::right;
    default: return NormVariant::none;
  }
}

// Every user is left at least one non-interacted item so that negative
// sampling is always possible on generated instances.
inline InteractionGraph random_graph(Rng& rng, std::size_t min_side, std::size_t max_side,
                                     double density) {
  std::uniform_int_distribution<std::size_t> side(min_side, max_side);
  std::size_t m = side(rng), n = side(rng);
  std::bernoulli_distribution edge(density);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < m; ++u) {
    std::uniform_int_distribution<std::size_t> di(0, n - 1);
    std::size_t skip = di(rng);
    for (std::size_t i = 0; i < n; ++i)
      if (i != skip && edge(rng)) edges.emplace_back(u, i);
  }
  if (edges.empty()) {
    std::uniform_int_distribution<std::size_t> du(0, m - 1), di(0, n - 1);
    edges.emplace_back(du(rng), di(rng));
  }
  return from_edges(m, n, std::move(edges));
}

inline CheckResult fail(std::string name, std::string detail) {
  return {std::move(name), false, std::move(detail)};
}

inline CheckResult pass(std::string name, std::string detail) {
  return {std::move(name), true, std::move(detail)};
}

}  // namespace detail

// Three-product chains computed iteratively must match both the step-by-step
// dense evaluation and the commuted dense form that pulls the item-item
// operator in front: B(A(B U0)) == (BA)(B U0).
inline CheckResult check_commutation(std::uint64_t seed, std::size_t trials = 100) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    InteractionGraph g = detail::random_graph(rng, 2, 16, 0.35);
    NormalizedGraph gn = normalize(g, detail::variant_cycle(t));
    std::uniform_int_distribution<std::size_t> dd(1, 8);
    Matrix u0 = Matrix::gaussian(g.num_users, dd(rng), 1.0, rng);

    LayerOutputs full = propagate_cf_lgcn_u(gn, u0, 3);
    Matrix a = reference::dense_to_users_matrix(gn);   // m x n
    Matrix b = reference::dense_to_items_matrix(gn);   // n x m
    Matrix e1 = reference::matmul(b, u0);
    Matrix u2 = reference::matmul(a, e1);
    Matrix e3_iter = reference::matmul(b, u2);
    Matrix e3_comm = reference::matmul(reference::matmul(b, a), e1);

    worst = std::max(worst, reference::max_abs_diff(full.item_sets[0], e1));
    worst = std::max(worst, reference::max_abs_diff(full.user_sets[1], u2));
    worst = std::max(worst, reference::max_abs_diff(full.item_sets[1], e3_iter));
    worst = std::max(worst, reference::max_abs_diff(full.item_sets[1], e3_comm));
  }
  std::ostringstream d;
  d << trials << " graphs, max abs error " << worst;
  return worst < 1e-10 ? detail::pass("commutation_identity", d.str())
                       : detail::fail("commutation_identity", d.str());
}

// Mean-fused coupled propagation must equal its dense two-family
// decomposition, and the full score must equal the sum of the two family
// scores plus both cross terms.
inline CheckResult check_lightgcn_decomposition(std::uint64_t seed, std::size_t trials = 50) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    InteractionGraph g = detail::random_graph(rng, 2, 12, 0.4);
    NormalizedGraph gn = normalize(g, detail::variant_cycle(t));
    std::uniform_int_distribution<std::size_t> dl(1, 3), dd(1, 6);
    std::size_t layers = dl(rng), d = dd(rng);
    Matrix u0 = Matrix::gaussian(g.num_users, d, 1.0, rng);
    Matrix e0 = Matrix::gaussian(g.num_items, d, 1.0, rng);

    LayerOutputs outs = forward_lightgcn(gn, u0, e0, layers);
    FusedEmbeddings fused = fuse(outs, {FusionMode::mean, {}});  // uniform 1/(L+1)

    Matrix a = reference::dense_to_users_matrix(gn);
    Matrix b = reference::dense_to_items_matrix(gn);
    double c = 1.0 / double(layers + 1);
    // User-rooted terms c * (AB)^j U0 and their item-side images; item-rooted
    // terms c * (BA)^j E0 and their user-side images.
    Matrix uu(g.num_users, d), ue(g.num_users, d), eu(g.num_items, d), ee(g.num_items, d);
    Matrix pu = u0;  // (AB)^j U0
    Matrix pe = e0;  // (BA)^j E0
    for (std::size_t l = 0; l <= layers; ++l) {
      if (l % 2 == 0) {
        uu.add_scaled(pu, c);
        ee.add_scaled(pe, c);
        if (l + 1 <= layers) {
          eu.add_scaled(reference::matmul(b, pu), c);
          ue.add_scaled(reference::matmul(a, pe), c);
          pu = reference::matmul(a, reference::matmul(b, pu));
          pe = reference::matmul(b, reference::matmul(a, pe));
        }
      }
    }
    worst = std::max(worst, reference::max_abs_diff(fused.users, reference::add(uu, ue)));
    worst = std::max(worst, reference::max_abs_diff(fused.items, reference::add(eu, ee)));

    Matrix z = score_all(fused.users, fused.items);
    Matrix zu = reference::matmul(uu, reference::transpose(eu));
    Matrix ze = reference::matmul(ue, reference::transpose(ee));
    Matrix cross = reference::add(reference::matmul(uu, reference::transpose(ee)),
                                  reference::matmul(ue, reference::transpose(eu)));
    worst = std::max(worst, reference::max_abs_diff(z, reference::add(reference::add(zu, ze), cross)));
  }
  std::ostringstream d;
  d << trials << " instances, max abs error " << worst;
  return worst < 1e-8 ? detail::pass("coupled_decomposition", d.str())
                      : detail::fail("coupled_decomposition", d.str());
}

// Analytic gradients vs central finite differences for every model family,
// fusion mode and layer count 1..3 (plus the zero-layer degenerate case and
// a no-layer-0 configuration to cover the concat drop rule).
inline CheckResult check_gradients(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  std::string worst_cfg;
  struct Cfg {
    Variant variant;
    bool twin;
    bool include_layer0;
    std::size_t layers;
    FusionMode mode;
  };
  std::vector<Cfg> cfgs;
  for (std::size_t layers = 1; layers <= 3; ++layers)
    for (FusionMode mode : {FusionMode::mean, FusionMode::concat}) {
      cfgs.push_back({Variant::cf_lgcn_u, false, true, layers, mode});
      cfgs.push_back({Variant::cf_lgcn_u, true, true, layers, mode});
      cfgs.push_back({Variant::cf_lgcn_e, false, true, layers, mode});
      cfgs.push_back({Variant::lightgcn, false, true, layers, mode});
      if (layers >= 2) cfgs.push_back({Variant::cf_lgcn_u, false, false, layers, mode});
    }
  cfgs.push_back({Variant::lightgcn, false, true, 0, FusionMode::mean});
  cfgs.push_back({Variant::lightgcn, false, true, 0, FusionMode::concat});

  std::size_t idx = 0;
  for (const Cfg& cfg : cfgs) {
    InteractionGraph g = detail::random_graph(rng, 4, 8, 0.5);
    NormalizedGraph gn = normalize(g, detail::variant_cycle(idx));
    Model model = make_model(cfg.variant, cfg.twin, g.num_users, g.num_items, 3, cfg.layers,
                             gn.variant, cfg.include_layer0, {cfg.mode, {}}, seed + idx, 0.5);
    std::vector<BprTriple> triples = sample_batch(rng, g, 10);
    double l2 = 1e-3;

    ModelForward fw = model_forward(gn, model);
    std::vector<Matrix> analytic = backward(gn, model, fw, triples, l2);
    std::vector<Matrix> numeric =
        reference::finite_difference_gradients(gn, model, triples, l2, 1e-5);
    double err = reference::max_gradient_error(analytic, numeric);
    if (err > worst) {
      worst = err;
      std::ostringstream c;
      c << to_string(cfg.variant) << (cfg.twin ? "/twin" : "") << " layers=" << cfg.layers
        << " " << to_string(cfg.mode) << (cfg.include_layer0 ? "" : " no-layer0");
      worst_cfg = c.str();
    }
    ++idx;
  }
  std::ostringstream d;
  d << cfgs.size() << " configurations, worst relative error " << worst;
  if (!worst_cfg.empty()) d << " (" << worst_cfg << ")";
  return worst < 1e-4 ? detail::pass("gradient_check", d.str())
                      : detail::fail("gradient_check", d.str());
}

// Streaming evaluator == brute-force dense evaluator, bit for bit, including
// masking, deterministic ties, option handling and the toy-scale clamp.
inline CheckResult check_metric_oracle(std::uint64_t seed, std::size_t trials = 200) {
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    std::uniform_int_distribution<std::size_t> side(2, 20), dd(1, 4);
    std::size_t m = side(rng), n = side(rng), d = dd(rng);
    FusedEmbeddings fused;
    if (t % 3 == 0) {
      // Integer-valued embeddings force plenty of exact score ties.
      std::uniform_int_distribution<int> iv(0, 1);
      fused.users = Matrix(m, d);
      fused.items = Matrix(n, d);
      for (std::size_t j = 0; j < fused.users.size(); ++j)
        fused.users.data()[j] = iv(rng);
      for (std::size_t j = 0; j < fused.items.size(); ++j)
        fused.items.data()[j] = iv(rng);
    } else {
      fused.users = Matrix::gaussian(m, d, 1.0, rng);
      fused.items = Matrix::gaussian(n, d, 1.0, rng);
    }
    std::vector<Edge> train_edges;
    std::bernoulli_distribution in_train(0.25);
    for (std::size_t u = 0; u < m; ++u)
      for (std::size_t i = 0; i < n; ++i)
        if (in_train(rng)) train_edges.emplace_back(u, i);
    InteractionGraph train = from_edges(m, n, std::move(train_edges));
    std::vector<std::vector<std::size_t>> tests(m);
    std::bernoulli_distribution in_test(0.3);
    for (std::size_t u = 0; u < m; ++u)
      for (std::size_t i = 0; i < n; ++i)
        if (!train.has_edge(u, i) && in_test(rng)) tests[u].push_back(i);
    EvalOptions opts;
    if (t % 4 == 1) {
      std::bernoulli_distribution held(0.15);
      for (std::size_t i = 0; i < n; ++i)
        if (held(rng)) opts.excluded_items.push_back(i);
      for (std::size_t u = 0; u < m; ++u)
        if (held(rng)) opts.zero_metric_users.push_back(u);
    }
    opts.capped_recall_denominator = t % 5 == 0;
    std::vector<std::size_t> ks = {1, 3, 5, 20};
    auto fast = evaluate_embeddings(fused, train, tests, ks, opts);
    auto slow = reference::brute_force_evaluate(fused, train, tests, ks, opts);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (fast[j].recall != slow[j].recall || fast[j].ndcg != slow[j].ndcg ||
          fast[j].users_evaluated != slow[j].users_evaluated) {
        std::ostringstream d2;
        d2 << "instance " << t << " k=" << ks[j] << ": streaming (" << fast[j].recall << ", "
           << fast[j].ndcg << ") vs brute force (" << slow[j].recall << ", " << slow[j].ndcg
           << ")";
        return detail::fail("metric_oracle", d2.str());
      }
    }
  }
  std::ostringstream d;
  d << trials << " instances matched exactly";
  return detail::pass("metric_oracle", d.str());
}

// Learned-parameter accounting for every family.
inline CheckResult check_parameter_counts(std::uint64_t /*seed*/) {
  auto cfu = make_model(Variant::cf_lgcn_u, false, 100, 50, 16, 3, NormVariant::symmetric,
                        true, {FusionMode::concat, {}}, 1);
  auto twin = make_model(Variant::cf_lgcn_u, true, 100, 50, 16, 3, NormVariant::symmetric,
                         true, {FusionMode::concat, {}}, 1);
  auto cfe = make_model(Variant::cf_lgcn_e, false, 100, 50, 16, 3, NormVariant::symmetric,
                        true, {FusionMode::concat, {}}, 1);
  auto lg = make_model(Variant::lightgcn, false, 100, 50, 16, 3, NormVariant::symmetric,
                       true, {FusionMode::mean, {}}, 1);
  bool ok = cfu.parameter_count() == 100 * 16 && twin.parameter_count() == 2 * 100 * 16 &&
            cfe.parameter_count() == 50 * 16 && lg.parameter_count() == 150 * 16;
  std::ostringstream d;
  d << "user-only " << cfu.parameter_count() << ", twin " << twin.parameter_count()
    << ", item-only " << cfe.parameter_count() << ", coupled " << lg.parameter_count();
  return ok ? detail::pass("parameter_counts", d.str())
            : detail::fail("parameter_counts", d.str());
}

// Loss fixed points: equal scores cost ln 2 exactly (to 1e-12), loss is
// strictly decreasing in the margin, and both tails are overflow-free.
inline CheckResult check_bpr_fixed_points(std::uint64_t seed) {
  const double ln2 = 0.6931471805599453;
  for (double z : {0.0, 1.0, -17.3, 123456.0})
    if (std::abs(bpr_loss(z, z) - ln2) > 1e-12)
      return detail::fail("bpr_fixed_points", "loss at zero margin is not ln 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> um(-60.0, 60.0);
  std::vector<double> margins;
  for (int j = 0; j < 200; ++j) margins.push_back(um(rng));
  for (double x = -60.0; x <= 60.0; x += 1.0) margins.push_back(x);
  std::sort(margins.begin(), margins.end());
  for (std::size_t j = 1; j < margins.size(); ++j) {
    if (margins[j] == margins[j - 1]) continue;
    if (!(bpr_loss(margins[j], 0.0) < bpr_loss(margins[j - 1], 0.0)))
      return detail::fail("bpr_fixed_points", "loss is not strictly decreasing in margin");
  }
  if (!std::isfinite(bpr_loss(-50.0, 0.0)) || std::abs(bpr_loss(-50.0, 0.0) - 50.0) > 1e-9)
    return detail::fail("bpr_fixed_points", "negative-margin tail is not linear");
  if (bpr_loss(50.0, 0.0) > 1e-12)
    return detail::fail("bpr_fixed_points", "positive-margin tail does not vanish");
  return detail::pass("bpr_fixed_points", "ln 2 fixed point, monotone, stable tails");
}

// Inference with an unchanged graph must reproduce the transductive forward
// bit for bit, and entities with identical revealed neighborhoods must get
// identical embeddings.
inline CheckResult check_inductive_consistency(std::uint64_t seed, std::size_t trials = 20) {
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    InteractionGraph g = detail::random_graph(rng, 3, 12, 0.4);
    NormVariant norm = detail::variant_cycle(t);
    // Without the layer-0 set, user-only models need >= 2 products to have a
    // user-side set; the coupled variant needs >= 1.
    std::uniform_int_distribution<std::size_t> dl(2, 3);
    std::size_t layers = dl(rng);

    std::vector<Model> models;
    models.push_back(make_model(Variant::cf_lgcn_u, false, g.num_users, g.num_items, 3,
                                layers, norm, false, {FusionMode::concat, {}}, seed + t));
    models.push_back(make_model(Variant::cf_lgcn_u, true, g.num_users, g.num_items, 3,
                                layers, norm, false, {FusionMode::mean, {}}, seed + t + 1));
    models.push_back(make_lightgcn_inductive(
        make_model(Variant::lightgcn, false, g.num_users, g.num_items, 3, layers, norm, true,
                   {FusionMode::mean, {}}, seed + t + 2)));
    for (const Model& model : models) {
      NormalizedGraph gn = normalize(g, norm);
      FusedEmbeddings direct = model_forward(gn, model).fused;
      InductiveContext ctx = make_inductive_context(model, g, g, {}, {});
      FusedEmbeddings via_inference = inductive_forward(ctx);
      if (!(direct.users == via_inference.users) || !(direct.items == via_inference.items))
        return detail::fail("inductive_consistency",
                            "unchanged graph did not reproduce the transductive forward");
    }

    // Symmetry: two new items revealed with identical user sets.
    const Model& model = models.front();
    std::size_t n = g.num_items;
    std::vector<Edge> reveal;
    for (std::size_t u = 0; u < std::min<std::size_t>(2, g.num_users); ++u) {
      reveal.emplace_back(u, n);
      reveal.emplace_back(u, n + 1);
    }
    InteractionGraph ext = extend(g, reveal, g.num_users, n + 2);
    InductiveContext ctx = make_inductive_context(model, g, ext, {}, {n, n + 1});
    Matrix items = infer_new_items(ctx);
    for (std::size_t c = 0; c < items.cols(); ++c)
      if (items(n, c) != items(n + 1, c))
        return detail::fail("inductive_consistency",
                            "identical revealed neighborhoods produced different embeddings");
  }
  std::ostringstream d;
  d << trials << " instances, bit-exact";
  return detail::pass("inductive_consistency", d.str());
}

inline std::vector<CheckResult> run_all(std::uint64_t seed = 7) {
  return {check_commutation(seed),         check_lightgcn_decomposition(seed + 1),
          check_gradients(seed + 2),       check_metric_oracle(seed + 3),
          check_parameter_counts(seed + 4), check_bpr_fixed_points(seed + 5),
          check_inductive_consistency(seed + 6)};
}

}  // namespace lightcf::selfcheck
