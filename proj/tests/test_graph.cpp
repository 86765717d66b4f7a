#include <catch2/catch_amalgamated.hpp>

#include "lightcf/graph.hpp"
#include "lightcf/matrix.hpp"
#include "lightcf/normalize.hpp"

using namespace lightcf;

namespace {
// Shared 2x2 example: user 0 -> item 0; user 1 -> items 0 and 1.
const std::vector<Edge> kEdges = {{0, 0}, {1, 0}, {1, 1}};
}  // namespace

TEST_CASE("matrix basics") {
  Matrix a(2, 3);
  REQUIRE(a.rows() == 2);
  REQUIRE(a.cols() == 3);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == 0.0);

  a(0, 1) = 2.5;
  a(1, 2) = -1.0;
  REQUIRE(a(0, 1) == 2.5);
  REQUIRE(a.row(1)[2] == -1.0);
  REQUIRE(a.max_abs() == 2.5);
  REQUIRE(a.sum_squares() == 2.5 * 2.5 + 1.0);

  Matrix b = a;
  b.add_scaled(a, 2.0);
  REQUIRE(b(0, 1) == 7.5);
  REQUIRE(a == a);
  REQUIRE(!(a == b));

  b.fill(0.0);
  REQUIRE(b.sum_squares() == 0.0);
  REQUIRE(a.all_finite());
  a(0, 0) = std::numeric_limits<double>::infinity();
  REQUIRE(!a.all_finite());
}

TEST_CASE("gaussian init is seed-deterministic") {
  Rng r1(42), r2(42), r3(43);
  Matrix a = Matrix::gaussian(4, 3, 0.1, r1);
  Matrix b = Matrix::gaussian(4, 3, 0.1, r2);
  Matrix c = Matrix::gaussian(4, 3, 0.1, r3);
  REQUIRE(a == b);
  REQUIRE(!(a == c));
  REQUIRE(a.max_abs() < 1.0);  // stddev 0.1 makes > 10 sigma essentially impossible
  REQUIRE(a.max_abs() > 0.0);
}

TEST_CASE("axpy and dot") {
  std::vector<double> y = {1.0, 2.0}, x = {10.0, 20.0};
  axpy(y, x, 0.5);
  REQUIRE(y[0] == 6.0);
  REQUIRE(y[1] == 12.0);
  REQUIRE(dot(y, x) == 6.0 * 10.0 + 12.0 * 20.0);
}

TEST_CASE("graph construction builds both orientations") {
  InteractionGraph g = from_edges(2, 2, kEdges);
  REQUIRE(g.num_users == 2);
  REQUIRE(g.num_items == 2);
  REQUIRE(g.num_edges() == 3);

  REQUIRE(std::vector<std::size_t>(g.items_of(0).begin(), g.items_of(0).end()) ==
          std::vector<std::size_t>{0});
  REQUIRE(std::vector<std::size_t>(g.items_of(1).begin(), g.items_of(1).end()) ==
          std::vector<std::size_t>{0, 1});
  REQUIRE(std::vector<std::size_t>(g.users_of(0).begin(), g.users_of(0).end()) ==
          std::vector<std::size_t>{0, 1});
  REQUIRE(std::vector<std::size_t>(g.users_of(1).begin(), g.users_of(1).end()) ==
          std::vector<std::size_t>{1});

  REQUIRE(g.user_degree(0) == 1);
  REQUIRE(g.user_degree(1) == 2);
  REQUIRE(g.item_degree(0) == 2);
  REQUIRE(g.item_degree(1) == 1);

  REQUIRE(g.has_edge(1, 1));
  REQUIRE(!g.has_edge(0, 1));
  REQUIRE(g.edge_list() == kEdges);  // user-major, item-ascending
}

TEST_CASE("graph construction sorts and deduplicates") {
  InteractionGraph g = from_edges(2, 2, {{1, 1}, {0, 0}, {1, 0}, {1, 1}, {0, 0}});
  REQUIRE(g.num_edges() == 3);
  REQUIRE(g.edge_list() == kEdges);
}

TEST_CASE("graph rejects out-of-range endpoints") {
  REQUIRE_THROWS_AS(from_edges(2, 2, {{2, 0}}), std::out_of_range);
  REQUIRE_THROWS_AS(from_edges(2, 2, {{0, 2}}), std::out_of_range);
  REQUIRE_THROWS_WITH(from_edges(2, 2, {{5, 7}}), Catch::Matchers::ContainsSubstring("(5, 7)"));
}

TEST_CASE("graph extension is an immutable merge") {
  InteractionGraph g = from_edges(2, 2, kEdges);
  InteractionGraph e = extend(g, {{0, 2}, {2, 1}}, 3, 3);
  REQUIRE(e.num_users == 3);
  REQUIRE(e.num_items == 3);
  REQUIRE(e.num_edges() == 5);
  REQUIRE(e.has_edge(0, 0));  // base edges survive
  REQUIRE(e.has_edge(2, 1));
  REQUIRE(g.num_edges() == 3);  // base untouched

  REQUIRE_THROWS_AS(extend(g, {}, 1, 2), std::invalid_argument);  // shrinking
  REQUIRE_THROWS_AS(extend(g, {{2, 0}}, 2, 2), std::out_of_range);
}

TEST_CASE("symmetric normalization weights") {
  NormalizedGraph gn = normalize(from_edges(2, 2, kEdges), NormVariant::symmetric);
  // weight(u,i) = 1/sqrt(deg_u * deg_i), identical in both directions
  for (Direction dir : {Direction::to_users, Direction::to_items}) {
    REQUIRE_THAT(gn.edge_weight(0, 0, dir), Catch::Matchers::WithinAbs(0.7071067811865475, 1e-15));
    REQUIRE_THAT(gn.edge_weight(1, 0, dir), Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(gn.edge_weight(1, 1, dir), Catch::Matchers::WithinAbs(0.7071067811865475, 1e-15));
  }
}

TEST_CASE("left and right normalization depend on direction") {
  InteractionGraph g = from_edges(2, 2, kEdges);
  NormalizedGraph left = normalize(g, NormVariant::left);
  // Aggregating into users, the row entity is the user: 1/deg_u.
  REQUIRE(left.edge_weight(1, 0, Direction::to_users) == 0.5);
  REQUIRE(left.edge_weight(0, 0, Direction::to_users) == 1.0);
  // Aggregating into items, the row entity is the item: 1/deg_i.
  REQUIRE(left.edge_weight(1, 0, Direction::to_items) == 0.5);
  REQUIRE(left.edge_weight(1, 1, Direction::to_items) == 1.0);

  NormalizedGraph right = normalize(g, NormVariant::right);
  // Right normalization divides by the column entity's degree.
  REQUIRE(right.edge_weight(1, 0, Direction::to_users) == 0.5);   // deg_i0 = 2
  REQUIRE(right.edge_weight(1, 1, Direction::to_users) == 1.0);   // deg_i1 = 1
  REQUIRE(right.edge_weight(1, 0, Direction::to_items) == 0.5);   // deg_u1 = 2
  REQUIRE(right.edge_weight(0, 0, Direction::to_items) == 1.0);   // deg_u0 = 1

  NormalizedGraph none = normalize(g, NormVariant::none);
  REQUIRE(none.edge_weight(1, 0, Direction::to_users) == 1.0);
}

TEST_CASE("unnormalized aggregation matches hand sums") {
  NormalizedGraph gn = normalize(from_edges(2, 2, kEdges), NormVariant::none);
  Matrix e(2, 1);
  e(0, 0) = 3.0;
  e(1, 0) = 5.0;
  Matrix u = agg_items_to_users(gn, e);
  REQUIRE(u(0, 0) == 3.0);        // user 0 sees item 0
  REQUIRE(u(1, 0) == 3.0 + 5.0);  // user 1 sees both

  Matrix u0(2, 1);
  u0(0, 0) = 1.0;
  u0(1, 0) = 2.0;
  Matrix e1 = agg_users_to_items(gn, u0);
  REQUIRE(e1(0, 0) == 3.0);  // item 0 seen by users 0,1
  REQUIRE(e1(1, 0) == 2.0);  // item 1 seen by user 1
}

TEST_CASE("zero-degree entities aggregate to zero, never NaN") {
  // item 2 and user 2 are isolated
  NormalizedGraph gn = normalize(from_edges(3, 3, kEdges), NormVariant::symmetric);
  Rng rng(1);
  Matrix u0 = Matrix::gaussian(3, 4, 1.0, rng);
  Matrix e1 = agg_users_to_items(gn, u0);
  Matrix u1 = agg_items_to_users(gn, e1);
  REQUIRE(e1.all_finite());
  REQUIRE(u1.all_finite());
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(e1(2, c) == 0.0);
    REQUIRE(u1(2, c) == 0.0);
  }
}

TEST_CASE("adjoint aggregation transposes the forward operator") {
  // <A x, y> == <x, A^T y> for every normalization variant.
  Rng rng(9);
  for (NormVariant v : {NormVariant::none, NormVariant::left, NormVariant::right,
                        NormVariant::symmetric}) {
    NormalizedGraph gn = normalize(from_edges(3, 4, {{0, 0}, {0, 3}, {1, 1}, {2, 1}, {2, 2}}), v);
    Matrix x = Matrix::gaussian(4, 2, 1.0, rng);   // item-shaped
    Matrix y = Matrix::gaussian(3, 2, 1.0, rng);   // user-shaped
    Matrix ax = agg_items_to_users(gn, x);         // users x d
    Matrix aty = agg_items_to_users_adjoint(gn, y);  // items x d
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * aty.data()[i];
    REQUIRE_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-12));

    Matrix bx = agg_users_to_items(gn, y);           // items x d
    Matrix bty = agg_users_to_items_adjoint(gn, x);  // users x d
    lhs = rhs = 0.0;
    for (std::size_t i = 0; i < bx.size(); ++i) lhs += bx.data()[i] * x.data()[i];
    for (std::size_t i = 0; i < y.size(); ++i) rhs += y.data()[i] * bty.data()[i];
    REQUIRE_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-12));
  }
}

TEST_CASE("normalization variant strings round-trip") {
  for (NormVariant v : {NormVariant::none, NormVariant::left, NormVariant::right,
                        NormVariant::symmetric})
    REQUIRE(norm_variant_from_string(to_string(v)) == v);
  REQUIRE_THROWS_AS(norm_variant_from_string("bogus"), std::invalid_argument);
}
