#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lightcf/inductive.hpp"
#include "lightcf/reference.hpp"

using namespace lightcf;

namespace {

InteractionGraph base_graph() {
  return from_edges(4, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 2}, {2, 3}, {3, 3}, {3, 0}});
}

Model user_model(std::size_t layers, bool include_layer0, FusionMode mode,
                 NormVariant norm = NormVariant::symmetric, std::uint64_t seed = 17) {
  return make_model(Variant::cf_lgcn_u, false, 4, 4, 3, layers, norm, include_layer0,
                    {mode, {}}, seed, 0.5);
}

std::vector<double> table_bytes(const Model& m) {
  std::vector<double> all;
  for (const EmbeddingTable* t : m.tables())
    all.insert(all.end(), t->data(), t->data() + t->size());
  return all;
}

}  // namespace

TEST_CASE("context validation") {
  InteractionGraph g = base_graph();
  Model m = user_model(2, false, FusionMode::concat);

  // Appended entities are implicitly flagged new.
  InteractionGraph ext = extend(g, {{4, 0}, {0, 4}}, 5, 5);
  InductiveContext ctx = make_inductive_context(m, g, ext, {}, {});
  REQUIRE(ctx.new_user == std::vector<char>{0, 0, 0, 0, 1});
  REQUIRE(ctx.new_item == std::vector<char>{0, 0, 0, 0, 1});

  // The extended graph must contain every base edge.
  InteractionGraph missing = from_edges(4, 4, {{0, 0}});
  REQUIRE_THROWS_AS(make_inductive_context(m, g, missing, {}, {}), std::invalid_argument);

  // Explicit flags for in-range entities (e.g. dataset-driven holdouts).
  InductiveContext flagged = make_inductive_context(m, g, g, {1}, {2});
  REQUIRE(flagged.new_user[1] == 1);
  REQUIRE(flagged.new_item[2] == 1);
}

TEST_CASE("new item embedding is the aggregation of its revealed users") {
  // Unnormalized 1-product user-only model: E(i) = sum of U0 over revealed
  // users, independently recomputed from the parameter table.
  Model m = user_model(1, true, FusionMode::mean, NormVariant::none);
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {{0, 4}, {2, 4}}, 4, 5);
  InductiveContext ctx = make_inductive_context(m, g, ext, {}, {});
  Matrix items = infer_new_items(ctx);
  REQUIRE(items.rows() == 5);
  for (std::size_t c = 0; c < 3; ++c)
    REQUIRE_THAT(items(4, c), Catch::Matchers::WithinAbs(
                                  m.nets[0].user0(0, c) + m.nets[0].user0(2, c), 1e-12));
}

TEST_CASE("existing embeddings are reproduced bitwise while serving new items") {
  // Left normalization scales each product by its output side's degree, which
  // a new item leaves untouched for existing rows; symmetric scaling would
  // legitimately shift them (the shared degree changes).
  Model m = user_model(3, true, FusionMode::concat, NormVariant::left);
  InteractionGraph g = base_graph();
  NormalizedGraph gn = normalize(g, m.normalization());
  FusedEmbeddings transductive = model_forward(gn, m).fused;

  InteractionGraph ext = extend(g, {{1, 4}, {3, 4}}, 4, 5);
  InductiveContext ctx = make_inductive_context(m, g, ext, {}, {});
  FusedEmbeddings served = inductive_forward(ctx);

  // Static user embeddings: every product that lands on users runs on the
  // graph without the new entities, so old rows match bit for bit.
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t c = 0; c < served.users.cols(); ++c)
      REQUIRE(served.users(u, c) == transductive.users(u, c));
  // Old items aggregate only old users on the first product and static user
  // sets afterwards: also unchanged.
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < served.items.cols(); ++c)
      REQUIRE(served.items(i, c) == transductive.items(i, c));
}

TEST_CASE("refreshed user embeddings see the extended graph") {
  Model m = user_model(2, false, FusionMode::concat, NormVariant::left);
  InteractionGraph g = base_graph();
  NormalizedGraph gn = normalize(g, m.normalization());
  FusedEmbeddings transductive = model_forward(gn, m).fused;

  InteractionGraph ext = extend(g, {{1, 4}, {3, 4}}, 4, 5);
  InductiveContext stat = make_inductive_context(m, g, ext, {}, {}, false);
  InductiveContext refreshed = make_inductive_context(m, g, ext, {}, {}, true);
  FusedEmbeddings s = inductive_forward(stat);
  FusedEmbeddings r = inductive_forward(refreshed);

  bool user1_static_same = true, user1_refresh_same = true;
  for (std::size_t c = 0; c < s.users.cols(); ++c) {
    user1_static_same = user1_static_same && s.users(1, c) == transductive.users(1, c);
    user1_refresh_same = user1_refresh_same && r.users(1, c) == transductive.users(1, c);
  }
  REQUIRE(user1_static_same);    // static: user 1 ignores the new item
  REQUIRE(!user1_refresh_same);  // refreshed: user 1 aggregates the new item
}

TEST_CASE("new users require a model without the layer-0 set") {
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {{4, 0}, {4, 2}}, 5, 4);

  Model with0 = user_model(2, true, FusionMode::concat);
  InductiveContext bad = make_inductive_context(with0, g, ext, {}, {});
  REQUIRE_THROWS_WITH(inductive_forward(bad), Catch::Matchers::ContainsSubstring("retrain"));

  Model without0 = user_model(2, false, FusionMode::concat);
  InductiveContext ok = make_inductive_context(without0, g, ext, {}, {});
  Matrix users = infer_new_users(ok);
  REQUIRE(users.rows() == 5);
  double norm = 0.0;
  for (std::size_t c = 0; c < users.cols(); ++c) norm += users(4, c) * users(4, c);
  REQUIRE(norm > 0.0);
}

TEST_CASE("twin models substitute graphs in both networks") {
  Model twin = make_model(Variant::cf_lgcn_u, true, 4, 4, 2, 2, NormVariant::symmetric, false,
                          {FusionMode::mean, {}}, 23, 0.5);
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {{4, 1}, {4, 3}}, 5, 4);
  InductiveContext ctx = make_inductive_context(twin, g, ext, {}, {});
  Matrix users = infer_new_users(ctx);
  REQUIRE(users.rows() == 5);
  // The fused row must depend on both networks' tables: zeroing one network
  // changes the inferred embedding.
  Model half = twin;
  half.nets[1].user0.fill(0.0);
  InductiveContext ctx2 = make_inductive_context(half, g, ext, {}, {});
  Matrix users2 = infer_new_users(ctx2);
  bool same = true;
  for (std::size_t c = 0; c < users.cols(); ++c) same = same && users(4, c) == users2(4, c);
  REQUIRE(!same);
}

TEST_CASE("zero-degree new entities embed to zero with a warning") {
  Model m = user_model(2, false, FusionMode::concat);
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {}, 5, 4);  // new user with no revealed edges
  InductiveContext ctx = make_inductive_context(m, g, ext, {}, {});
  Matrix users = infer_new_users(ctx);
  for (std::size_t c = 0; c < users.cols(); ++c) REQUIRE(users(4, c) == 0.0);
}

TEST_CASE("parameter tables are untouched by inference") {
  Model m = user_model(3, true, FusionMode::mean);
  std::vector<double> before = table_bytes(m);
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {{0, 4}, {1, 4}}, 4, 5);
  InductiveContext ctx = make_inductive_context(m, g, ext, {}, {});
  (void)infer_new_items(ctx);
  (void)inductive_forward(ctx);
  REQUIRE(table_bytes(m) == before);
}

TEST_CASE("wrong-kind inference calls are rejected") {
  InteractionGraph g = base_graph();
  Model m = user_model(2, false, FusionMode::concat);

  InteractionGraph new_item = extend(g, {{0, 4}}, 4, 5);
  InductiveContext item_ctx = make_inductive_context(m, g, new_item, {}, {});
  REQUIRE_THROWS_AS(infer_new_users(item_ctx), std::invalid_argument);

  InteractionGraph new_user = extend(g, {{4, 0}}, 5, 4);
  InductiveContext user_ctx = make_inductive_context(m, g, new_user, {}, {});
  REQUIRE_THROWS_AS(infer_new_items(user_ctx), std::invalid_argument);

  Model item_only = make_model(Variant::cf_lgcn_e, false, 4, 4, 3, 2, NormVariant::symmetric,
                               true, {FusionMode::mean, {}}, 2, 0.5);
  InductiveContext e_ctx = make_inductive_context(item_only, g, new_item, {}, {});
  REQUIRE_THROWS_AS(inductive_forward(e_ctx), std::invalid_argument);
}

TEST_CASE("coupled model turns inductive by dropping layer 0") {
  Model lg = make_model(Variant::lightgcn, false, 4, 4, 3, 2, NormVariant::symmetric, true,
                        {FusionMode::mean, {}}, 29, 0.5);
  Model ind = make_lightgcn_inductive(lg);
  REQUIRE(!ind.nets[0].spec.include_layer0);
  REQUIRE(ind.nets[0].user0 == lg.nets[0].user0);

  Model mf = make_model(Variant::lightgcn, false, 4, 4, 3, 0, NormVariant::symmetric, true,
                        {FusionMode::mean, {}}, 29, 0.5);
  REQUIRE_THROWS_AS(make_lightgcn_inductive(mf), std::invalid_argument);
  Model u = user_model(2, true, FusionMode::mean);
  REQUIRE_THROWS_AS(make_lightgcn_inductive(u), std::invalid_argument);

  // Serving entities with the layer-0 term still included is refused.
  InteractionGraph g = base_graph();
  InteractionGraph ext = extend(g, {{0, 4}}, 4, 5);
  InductiveContext keep0 = make_inductive_context(lg, g, ext, {}, {});
  REQUIRE_THROWS_AS(inductive_forward(keep0), std::invalid_argument);

  // With layer 0 dropped: L=1 new-item embedding is the aggregation of its
  // revealed users' U0 rows (weights included).
  Model lg1 = make_lightgcn_inductive(
      make_model(Variant::lightgcn, false, 4, 4, 3, 1, NormVariant::none, true,
                 {FusionMode::mean, {}}, 31, 0.5));
  InteractionGraph ext2 = extend(g, {{1, 4}, {2, 4}}, 4, 5);
  InductiveContext ctx = make_inductive_context(lg1, g, ext2, {}, {});
  Matrix items = infer_all(ctx).items;  // coupled models serve both sides at once
  for (std::size_t c = 0; c < 3; ++c)
    REQUIRE_THAT(items(4, c), Catch::Matchers::WithinAbs(
                                  lg1.nets[0].user0(1, c) + lg1.nets[0].user0(2, c), 1e-12));

  // Appended zero rows contribute nothing to existing entities' embeddings.
  NormalizedGraph gn = normalize(g, NormVariant::none);
  Model lg1_trans = lg1;
  FusedEmbeddings direct = model_forward(gn, lg1_trans).fused;
  FusedEmbeddings served = inductive_forward(ctx);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) REQUIRE(served.items(i, c) == direct.items(i, c));
}

TEST_CASE("unchanged graph reproduces the transductive forward bitwise") {
  InteractionGraph g = base_graph();
  for (FusionMode mode : {FusionMode::mean, FusionMode::concat}) {
    Model m = user_model(3, false, mode, NormVariant::left);
    NormalizedGraph gn = normalize(g, NormVariant::left);
    FusedEmbeddings direct = model_forward(gn, m).fused;
    InductiveContext ctx = make_inductive_context(m, g, g, {}, {});
    FusedEmbeddings served = inductive_forward(ctx);
    REQUIRE(served.users == direct.users);
    REQUIRE(served.items == direct.items);
  }
}

TEST_CASE("lower-bound options exclude held entities") {
  InductiveBundle ind;
  ind.held_users = {3, 1};
  ind.held_items = {2};
  EvalOptions opts = lower_bound_eval_options(ind);
  REQUIRE(opts.excluded_items == std::vector<std::size_t>{2});
  REQUIRE(opts.zero_metric_users == std::vector<std::size_t>{1, 3});  // sorted
}
