#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "mastune/graphs.hpp"

using namespace mastune;

TEST(Dag, RejectsSelfLoopAndCycle) {
  EXPECT_THROW(DagTopology::from_edges(0, 3, {{1, 1}}), StructuralError);
  EXPECT_THROW(DagTopology::from_edges(0, 3, {{0, 1}, {1, 2}, {2, 0}}), StructuralError);
  EXPECT_THROW(DagTopology::from_edges(0, 3, {{0, 5}}), StructuralError);
  EXPECT_THROW(DagTopology(0, 0), ValidationError);
}

TEST(Dag, DegreesAndNeighbors) {
  const auto g = DagTopology::from_edges(1, 4, {{0, 2}, {1, 2}, {2, 3}});
  EXPECT_EQ(g.in_degree(2), 2u);
  EXPECT_EQ(g.out_degree(2), 1u);
  EXPECT_EQ(g.in_neighbors(2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(Pool, LargePoolDensity) {
  const GraphPool pool = generate_pool(8, 200, 0.3, 0.75, 7);
  ASSERT_EQ(pool.size(), 200u);
  double mean = 0.0;
  for (const auto& g : pool.graphs) {
    EXPECT_NO_THROW(topo_order(g));
    const double d = density(g);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    mean += d;
  }
  mean /= 200.0;
  EXPECT_GE(mean, 0.40);
  EXPECT_LE(mean, 0.65);
}

TEST(Pool, DensityOneTwoNodes) {
  const GraphPool pool = generate_pool(2, 1, 1.0, 1.0, 3);
  EXPECT_EQ(pool.graphs[0].edge_count(), 1u);
  EXPECT_DOUBLE_EQ(density(pool.graphs[0]), 1.0);
}

TEST(Pool, DensityZeroEmpty) {
  const GraphPool pool = generate_pool(5, 3, 0.0, 0.0, 3);
  ASSERT_EQ(pool.size(), 3u);
  for (const auto& g : pool.graphs) EXPECT_EQ(g.edge_count(), 0u);
}

TEST(Pool, InvalidArguments) {
  EXPECT_THROW(generate_pool(1, 3, 0.3, 0.5, 0), ValidationError);
  EXPECT_THROW(generate_pool(4, 0, 0.3, 0.5, 0), ValidationError);
  EXPECT_THROW(generate_pool(4, 3, 0.6, 0.5, 0), ValidationError);
}

TEST(Pool, SeededReproducible) {
  EXPECT_EQ(generate_pool(6, 20, 0.3, 0.75, 11).fingerprint(), generate_pool(6, 20, 0.3, 0.75, 11).fingerprint());
  EXPECT_NE(generate_pool(6, 20, 0.3, 0.75, 11).fingerprint(), generate_pool(6, 20, 0.3, 0.75, 12).fingerprint());
}

TEST(Pool, JsonRoundTrip) {
  const GraphPool pool = generate_pool(5, 10, 0.3, 0.75, 2);
  EXPECT_EQ(pool_from_json(pool_to_json(pool)).fingerprint(), pool.fingerprint());
  auto j = pool_to_json(pool);
  j["graphs"][0]["edges"].push_back({4, 0});
  j["graphs"][0]["edges"].push_back({0, 4});
  EXPECT_THROW(pool_from_json(j), StructuralError);
}

TEST(Density, Examples) {
  EXPECT_DOUBLE_EQ(density(complete_dag(8)), 1.0);
  EXPECT_EQ(complete_dag(8).edge_count(), 28u);
  EXPECT_DOUBLE_EQ(density(DagTopology(0, 5)), 0.0);
  EXPECT_DOUBLE_EQ(density(DagTopology::from_edges(0, 4, {{0, 1}, {1, 2}, {2, 3}})), 0.5);
}

TEST(Jaccard, Examples) {
  const auto a = DagTopology::from_edges(0, 3, {{0, 1}, {0, 2}});
  const auto b = DagTopology::from_edges(1, 3, {{0, 1}, {1, 2}});
  const auto c = DagTopology::from_edges(2, 3, {{1, 2}});
  EXPECT_DOUBLE_EQ(jaccard(a, a), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(a, c), 0.0);
  EXPECT_DOUBLE_EQ(jaccard(a, b), 1.0 / 3.0);
  EXPECT_THROW(jaccard(a, DagTopology(0, 4)), ShapeError);
}

TEST(TopoOrder, Examples) {
  EXPECT_EQ(topo_order(DagTopology(0, 3)), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(topo_order(DagTopology::from_edges(0, 3, {{0, 1}, {1, 2}})), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(topo_order(DagTopology::from_edges(0, 3, {{2, 0}, {2, 1}})), (std::vector<std::size_t>{2, 0, 1}));
}

// Property: 10k random DAGs of assorted sizes are acyclic and their orders respect every edge.
TEST(Property, RandomDagsAcyclic) {
  Rng rng(2024);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 2 + rng.below(11);
    const DagTopology g = random_dag(t, n, rng.uniform(), rng);
    const auto order = topo_order(g);
    std::vector<std::size_t> pos(n);
    for (std::size_t k = 0; k < n; ++k) pos[order[k]] = k;
    for (auto [i, j] : g.edges()) ASSERT_LT(pos[i], pos[j]);
    ASSERT_LE(g.edge_count(), static_cast<std::size_t>(max_dag_edges(n)));
  }
}

TEST(Property, JaccardAndDensityLaws) {
  Rng rng(77);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng.below(7);
    const DagTopology a = random_dag(0, n, rng.uniform(), rng);
    const DagTopology b = random_dag(1, n, rng.uniform(), rng);
    const double j = jaccard(a, b);
    ASSERT_GE(j, 0.0);
    ASSERT_LE(j, 1.0);
    ASSERT_DOUBLE_EQ(j, jaccard(b, a));
    ASSERT_DOUBLE_EQ(jaccard(a, a), 1.0);
    const double d = density(a);
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 1.0);
  }
}

TEST(Export, CsvAndDot) {
  const GraphPool pool = generate_pool(3, 2, 1.0, 1.0, 1);
  std::ostringstream csv, jac, dot;
  write_pool_csv(csv, pool);
  write_jaccard_csv(jac, {pool.graphs[0]});
  write_dot(dot, pool.graphs[0], {"a", "b", "c"});
  EXPECT_EQ(csv.str().substr(0, 37), "graph_id,num_nodes,edge_count,density");
  EXPECT_NE(csv.str().find("\r\n"), std::string::npos);
  EXPECT_EQ(jac.str(), "graph_id,0\r\n0,1\r\n");
  EXPECT_NE(dot.str().find("digraph"), std::string::npos);
  EXPECT_NE(dot.str().find("label=\"b\""), std::string::npos);
}
