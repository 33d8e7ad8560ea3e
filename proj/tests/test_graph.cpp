#include <doctest.h>

#include "dagcsp/graph.hpp"

#include <algorithm>

using namespace dagcsp;

namespace {

NodeSpec passthrough_node(NodeId id, Index v_dim, int n_out) {
  NodeSpec n;
  n.id = id;
  n.param_box = v_dim > 0 ? Box(Vec::Constant(v_dim, -1), Vec::Constant(v_dim, 1)) : Box::empty();
  n.n_constraints = 0;
  n.model = [n_out](const Vec& v, const Vec&, const Vec&) {
    NodeEval ev;
    for (int k = 0; k < n_out; ++k) ev.outputs.push_back(Vec::Zero(1));
    ev.constraints = Vec();
    (void)v;
    return ev;
  };
  return n;
}

// the worked 5-node topology: 1,2 -> 3 -> 4,5 (ids shifted to 0-based)
GraphSpec example_topology() {
  std::vector<NodeSpec> nodes;
  nodes.push_back(passthrough_node(0, 2, 1));
  nodes.push_back(passthrough_node(1, 2, 1));
  nodes.push_back(passthrough_node(2, 2, 2));
  nodes.push_back(passthrough_node(3, 2, 0));
  nodes.push_back(passthrough_node(4, 2, 0));
  std::vector<EdgeSpec> edges = {{0, 2, 1}, {1, 2, 1}, {2, 3, 1}, {2, 4, 1}};
  return build_graph(std::move(nodes), std::move(edges));
}

}  // namespace

TEST_SUITE_BEGIN("graph");

TEST_CASE("neighbour sets of the 5-node example") {
  const GraphSpec g = example_topology();
  CHECK(g.in_neighbors(2) == std::vector<NodeId>{0, 1});
  CHECK(g.out_neighbors(2) == std::vector<NodeId>{3, 4});
  CHECK(g.in_neighbors(0).empty());
  CHECK(g.out_neighbors(4).empty());
  CHECK(g.input_dim(2) == 2);
}

TEST_CASE("single node graph is both root and leaf") {
  const GraphSpec g = build_graph({passthrough_node(0, 1, 0)}, {});
  const auto [roots, leaves] = roots_and_leaves(g);
  CHECK(roots == std::set<NodeId>{0});
  CHECK(leaves == std::set<NodeId>{0});
}

TEST_CASE("cycles are rejected") {
  std::vector<NodeSpec> nodes = {passthrough_node(0, 1, 1), passthrough_node(1, 1, 1)};
  std::vector<EdgeSpec> edges = {{0, 1, 1}, {1, 0, 1}};
  CHECK_THROWS_AS(build_graph(std::move(nodes), std::move(edges)), CycleDetected);
}

TEST_CASE("self-loops and duplicate edges are rejected") {
  CHECK_THROWS_AS(build_graph({passthrough_node(0, 1, 1)}, {{0, 0, 1}}), CycleDetected);
  std::vector<NodeSpec> nodes = {passthrough_node(0, 1, 2), passthrough_node(1, 1, 0)};
  CHECK_THROWS(build_graph(std::move(nodes), {{0, 1, 1}, {0, 1, 1}}));
}

TEST_CASE("topological order of the example and simple chains") {
  const GraphSpec g = example_topology();
  CHECK(topological_order(g) == std::vector<NodeId>{0, 1, 2, 3, 4});

  // no edges: ascending id
  const GraphSpec iso = build_graph(
      {passthrough_node(0, 1, 0), passthrough_node(1, 1, 0), passthrough_node(2, 1, 0)}, {});
  CHECK(topological_order(iso) == std::vector<NodeId>{0, 1, 2});

  // reversed chain 2 -> 1 -> 0
  const GraphSpec rev = build_graph(
      {passthrough_node(0, 1, 0), passthrough_node(1, 1, 1), passthrough_node(2, 1, 1)},
      {{2, 1, 1}, {1, 0, 1}});
  CHECK(topological_order(rev) == std::vector<NodeId>{2, 1, 0});
}

TEST_CASE("topological order is a valid permutation respecting edges") {
  const GraphSpec g = example_topology();
  const auto order = topological_order(g);
  std::vector<int> pos(static_cast<std::size_t>(g.node_count()));
  for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  for (const auto& e : g.edges()) CHECK(pos[static_cast<std::size_t>(e.from)] < pos[static_cast<std::size_t>(e.to)]);
  std::vector<NodeId> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<NodeId>{0, 1, 2, 3, 4});
}

TEST_CASE("roots and leaves of the example") {
  const GraphSpec g = example_topology();
  const auto [roots, leaves] = roots_and_leaves(g);
  CHECK(roots == std::set<NodeId>{0, 1});
  CHECK(leaves == std::set<NodeId>{3, 4});

  const GraphSpec chain = build_graph(
      {passthrough_node(0, 1, 1), passthrough_node(1, 1, 1), passthrough_node(2, 1, 0)},
      {{0, 1, 1}, {1, 2, 1}});
  const auto [r2, l2] = roots_and_leaves(chain);
  CHECK(r2 == std::set<NodeId>{0});
  CHECK(l2 == std::set<NodeId>{2});
}

TEST_CASE("adjacency matrix") {
  const GraphSpec g = example_topology();
  const auto a = adjacency_matrix(g);
  CHECK(a(2, 3) == 1);
  CHECK(a(2, 4) == 1);
  CHECK(a(0, 2) == 1);
  CHECK(a.sum() == 4);

  const GraphSpec iso = build_graph({passthrough_node(0, 1, 0), passthrough_node(1, 1, 0)}, {});
  CHECK(adjacency_matrix(iso).sum() == 0);

  const GraphSpec pair = build_graph({passthrough_node(0, 1, 1), passthrough_node(1, 1, 0)}, {{0, 1, 1}});
  const auto ap = adjacency_matrix(pair);
  CHECK(ap(0, 1) == 1);
  CHECK(ap.sum() == 1);
}

TEST_CASE("adjacency permuted by topological order is strictly upper triangular") {
  const GraphSpec rev = build_graph(
      {passthrough_node(0, 1, 0), passthrough_node(1, 1, 1), passthrough_node(2, 1, 1)},
      {{2, 1, 1}, {1, 0, 1}});
  const auto order = topological_order(rev);
  const auto a = adjacency_matrix(rev);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) CHECK(a(order[i], order[j]) == 0);
}

TEST_CASE("lift_coupling requires a coupling box") {
  const GraphSpec g = example_topology();
  CHECK_THROWS_AS(lift_coupling(g), MissingCouplingBox);
}

TEST_SUITE_END();
