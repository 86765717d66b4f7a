// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL]/[SKIP] line so the suite doubles as a release report.
#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lightcf/bpr.hpp"
#include "lightcf/data.hpp"
#include "lightcf/inductive.hpp"
#include "lightcf/metrics.hpp"
#include "lightcf/selfcheck.hpp"

using namespace lightcf;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int n, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << detail << std::endl;
}

void run_suite(int n, const selfcheck::CheckResult& r, double elapsed, double budget) {
  std::ostringstream ss;
  ss << r.detail << " (" << elapsed << " s, budget " << budget << " s)";
  bool ok = r.passed && elapsed < budget;
  report(n, ok, ss.str());
  REQUIRE(r.passed);
  REQUIRE(elapsed < budget);
}

// Two 10x10 blocks of users and items; each within-block pair interacts with
// probability 0.8 and every fifth interaction per user is held out for
// testing (a 20% holdout).
struct BlockData {
  std::vector<Edge> train, test;
};

BlockData two_block_dataset(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  BlockData out;
  for (std::size_t u = 0; u < 20; ++u) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      if ((u < 10) != (i < 10)) continue;
      if (unif(rng) >= 0.8) continue;
      ((kept++ % 5 == 4) ? out.test : out.train).push_back({u, i});
    }
  }
  return out;
}

FitResult train_on(const DatasetBundle& data, Model model, const TrainConfig& tc) {
  Evaluator ev;
  bool has_val = false;
  for (const auto& v : data.val_sets) has_val = has_val || !v.empty();
  if (has_val) {
    ev = make_validation_evaluator(data, 5, model.normalization());
  } else {
    auto g = std::make_shared<NormalizedGraph>(normalize(data.graph_train, model.normalization()));
    auto sets = std::make_shared<std::vector<std::vector<std::size_t>>>(data.test_sets);
    ev = [g, sets](const Model& mm) { return evaluate_model(mm, *g, *sets, 5); };
  }
  return fit(std::move(model), data, tc, ev);
}

TrainConfig toy_train_config() {
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.l2_lambda = 1e-4;
  tc.batch_size = 64;
  tc.max_epochs = 200;
  tc.eval_every = 10;
  tc.patience = 20;
  tc.seed = 1;
  return tc;
}

}  // namespace

TEST_CASE("criterion 1: commutation identity") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_commutation(7, 100);
  run_suite(1, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 2: coupled-propagation decomposition") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_lightgcn_decomposition(7, 50);
  run_suite(2, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 3: gradient checks across variants, fusions and depths") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_gradients(7);
  run_suite(3, r, seconds_since(t0), 30.0);
}

TEST_CASE("criterion 4: streaming evaluator equals the brute-force oracle") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_metric_oracle(7, 200);
  run_suite(4, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 5: parameter-count guard") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_parameter_counts(7);
  run_suite(5, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 6: pairwise loss fixed points and monotonicity") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_bpr_fixed_points(7);
  run_suite(6, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 7: inductive consistency and neighborhood symmetry") {
  auto t0 = std::chrono::steady_clock::now();
  selfcheck::CheckResult r = selfcheck::check_inductive_consistency(7, 20);
  run_suite(7, r, seconds_since(t0), 5.0);
}

TEST_CASE("criterion 8: synthetic end-to-end training") {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(8);
  BlockData blocks = two_block_dataset(rng);
  Rng split_rng(8);
  DatasetBundle data =
      transductive_split(blocks.train, blocks.test, 20, 20, split_rng, 0.0);

  Model model = make_model(Variant::cf_lgcn_u, true, 20, 20, 8, 1, NormVariant::symmetric,
                           true, {FusionMode::mean, {}}, 1, 0.1);
  TrainConfig tc = toy_train_config();
  FitResult a = train_on(data, model, tc);
  FitResult b = train_on(data, model, tc);
  double elapsed = seconds_since(t0);

  bool deterministic = a.best_epoch == b.best_epoch && a.best_recall == b.best_recall &&
                       a.best_ndcg == b.best_ndcg && a.log.size() == b.log.size();
  for (std::size_t i = 0; deterministic && i < a.log.size(); ++i)
    deterministic = a.log[i].epoch == b.log[i].epoch &&
                    a.log[i].train_loss == b.log[i].train_loss &&
                    a.log[i].val_recall == b.log[i].val_recall &&
                    a.log[i].val_ndcg == b.log[i].val_ndcg;

  std::ostringstream ss;
  ss << "recall@5 " << a.best_recall << " at epoch " << a.best_epoch << " (need >= 0.9), "
     << (deterministic ? "deterministic" : "NOT deterministic") << ", " << elapsed
     << " s (budget 60 s)";
  bool ok = a.best_recall >= 0.9 && deterministic && elapsed < 60.0;
  report(8, ok, ss.str());
  REQUIRE(a.best_recall >= 0.9);
  REQUIRE(deterministic);
  REQUIRE(elapsed < 60.0);
}

TEST_CASE("criterion 9: inductive serving beats the transductive lower bound") {
  Rng rng(33);
  BlockData blocks = two_block_dataset(rng);
  Rng split_rng(33);
  DatasetBundle base =
      transductive_split(blocks.train, blocks.test, 20, 20, split_rng, 0.10);
  Rng hold_rng(34);
  DatasetBundle ib = inductive_split(base, hold_rng, 0.10, 0.5, 5, 5);
  auto [lower, upper] = lower_upper_bound_views(ib);
  EvalOptions lower_opts = lower_bound_eval_options(*ib.inductive);
  TrainConfig tc = toy_train_config();

  struct Setup {
    const char* label;
    Variant variant;
  };
  bool all_ok = true;
  std::ostringstream ss;
  for (Setup s : {Setup{"cf_lgcn_u", Variant::cf_lgcn_u}, Setup{"lightgcn", Variant::lightgcn}}) {
    // Layer-0 sets are excluded up front so the very same parameters can
    // serve entities that were never trained on.
    Model model = make_model(s.variant, false, 20, 20, 8, 2, NormVariant::symmetric, false,
                             {FusionMode::mean, {}}, 2, 0.1);
    FitResult fitres = train_on(lower, model, tc);

    NormalizedGraph g_lower = normalize(lower.graph_train, fitres.model.normalization());
    EvalResult low = evaluate_model(fitres.model, g_lower, lower.test_sets, 5, lower_opts);

    Model serving =
        s.variant == Variant::lightgcn ? make_lightgcn_inductive(fitres.model) : fitres.model;
    InductiveContext ctx = context_from_bundle(serving, ib, true);
    FusedEmbeddings fused = inductive_forward(ctx);
    EvalResult ind =
        evaluate_embeddings(fused, upper.graph_train, ib.inductive->eval_sets, {5}).front();

    bool ok = ind.recall >= low.recall && ind.ndcg >= low.ndcg;
    all_ok = all_ok && ok;
    ss << s.label << " inductive recall " << ind.recall << " vs lower " << low.recall
       << ", ndcg " << ind.ndcg << " vs " << low.ndcg << "; ";
    REQUIRE(ind.recall >= low.recall);
    REQUIRE(ind.ndcg >= low.ndcg);
  }
  report(9, all_ok, ss.str());
}

TEST_CASE("criterion 10: desk-scale quantitative reproduction") {
  const char* dir = std::getenv("LIGHTCF_DOUBAN_DIR");
  if (!dir || !*dir) {
    std::cout << "[SKIP] criterion 10: set LIGHTCF_DOUBAN_DIR to a directory holding "
                 "train.txt/test.txt to run the long quantitative reproduction"
              << std::endl;
    SUCCEED();
    return;
  }

  IdMap users, items;
  std::ifstream tr(std::string(dir) + "/train.txt"), te(std::string(dir) + "/test.txt");
  REQUIRE(tr.good());
  REQUIRE(te.good());
  std::vector<Edge> train_edges = parse_interactions(tr, users, items);
  std::vector<Edge> test_edges = parse_interactions(te, users, items);
  std::cout << "criterion 10 dataset: " << users.size() << " users, " << items.size()
            << " items, " << train_edges.size() + test_edges.size() << " interactions"
            << std::endl;

  Rng rng(10);
  DatasetBundle data =
      transductive_split(train_edges, test_edges, users.size(), items.size(), rng, 0.10);

  auto env_or = [](const char* name, double dflt) {
    const char* v = std::getenv(name);
    return (v && *v) ? std::atof(v) : dflt;
  };
  TrainConfig tc;
  tc.learning_rate = env_or("LIGHTCF_DOUBAN_LR", 1e-3);
  tc.l2_lambda = env_or("LIGHTCF_DOUBAN_L2", 1e-4);
  tc.batch_size = 2048;
  tc.max_epochs = static_cast<std::size_t>(env_or("LIGHTCF_DOUBAN_MAX_EPOCHS", 1000));
  tc.eval_every = 20;
  tc.patience = 10;
  tc.seed = 10;

  Evaluator ev20 = make_validation_evaluator(data, 20, NormVariant::symmetric);
  NormalizedGraph g = normalize(data.graph_train, NormVariant::symmetric);

  struct Target {
    const char* label;
    Model model;
    double recall, ndcg;
  };
  std::vector<Target> targets;
  targets.push_back({"cf_lgcn_u twin 3-layer concat",
                     make_model(Variant::cf_lgcn_u, true, users.size(), items.size(), 64, 3,
                                NormVariant::symmetric, true, {FusionMode::concat, {}}, 10, 0.1),
                     5.23, 3.28});
  targets.push_back({"lightgcn 3-layer",
                     make_model(Variant::lightgcn, false, users.size(), items.size(), 64, 3,
                                NormVariant::symmetric, true, {FusionMode::mean, {}}, 10, 0.1),
                     4.95, 3.14});

  bool all_ok = true;
  std::ostringstream ss;
  for (Target& t : targets) {
    FitResult fr = fit(std::move(t.model), data, tc, ev20);
    EvalResult res = evaluate_model(fr.model, g, data.test_sets, 20);
    double recall = 100.0 * res.recall, ndcg = 100.0 * res.ndcg;
    bool ok = std::abs(recall - t.recall) <= 0.6 && std::abs(ndcg - t.ndcg) <= 0.5;
    ss << t.label << ": recall@20 " << recall << " (target " << t.recall << " +- 0.6), ndcg@20 "
       << ndcg << " (target " << t.ndcg << " +- 0.5)";
    if (!ok) {
      // Residual gaps are reported against the alternative recall denominator
      // min(k, |test|) to separate metric-definition effects from model quality.
      EvalOptions capped;
      capped.capped_recall_denominator = true;
      EvalResult alt = evaluate_model(fr.model, g, data.test_sets, 20, capped);
      ss << " [capped-denominator recall@20 " << 100.0 * alt.recall << "]";
    }
    ss << "; ";
    all_ok = all_ok && ok;
  }
  report(10, all_ok, ss.str());
  REQUIRE(all_ok);
}
