#include "dagcsp/graph.hpp"

#include <algorithm>
#include <queue>

namespace dagcsp {

Index GraphSpec::input_dim(NodeId i) const {
  Index d = 0;
  for (int e : in_edges_[i]) d += edges_[e].dim;
  return d;
}

Index GraphSpec::output_dim(NodeId i) const {
  Index d = 0;
  for (int e : out_edges_[i]) d += edges_[e].dim;
  return d;
}

Index GraphSpec::joint_param_dim() const {
  Index d = 0;
  for (const auto& n : nodes_) d += n.param_box.dim();
  return d;
}

Index GraphSpec::input_offset(NodeId node, int edge_index) const {
  Index at = 0;
  for (int e : in_edges_[node]) {
    if (e == edge_index) return at;
    at += edges_[e].dim;
  }
  throw Error("edge is not an in-edge of node " + std::to_string(node));
}

Box GraphSpec::joint_param_box() const {
  std::vector<Box> boxes;
  boxes.reserve(nodes_.size());
  for (const auto& n : nodes_)
    if (n.param_box.dim() > 0) boxes.push_back(n.param_box);
  if (boxes.empty()) return Box::empty();
  return box_product(boxes);
}

NodeEval GraphSpec::eval_node(NodeId i, const Vec& v, const Vec& u, const Vec& z) const {
  const NodeSpec& n = node(i);
  if (v.size() != n.param_box.dim()) throw DimensionMismatch("eval_node: bad v dim");
  if (u.size() != input_dim(i)) throw DimensionMismatch("eval_node: bad u dim");
  NodeEval ev = n.model(v, u, z);
  if (static_cast<int>(ev.outputs.size()) != static_cast<int>(out_edges_[i].size()))
    throw DimensionMismatch("eval_node: model returned wrong number of outputs");
  for (std::size_t k = 0; k < ev.outputs.size(); ++k)
    if (ev.outputs[k].size() != edges_[out_edges_[i][k]].dim)
      throw DimensionMismatch("eval_node: output dim disagrees with edge dim");
  if (ev.constraints.size() != n.n_constraints)
    throw DimensionMismatch("eval_node: constraint row count mismatch");
  return ev;
}

std::uint64_t GraphSpec::structure_hash() const {
  std::uint64_t h = mix_seed(0x5851f42d4c957f2dull, name);
  h = mix_seed(h, static_cast<std::uint64_t>(nodes_.size()));
  for (const auto& n : nodes_) {
    h = mix_seed(h, static_cast<std::uint64_t>(n.param_box.dim()));
    h = mix_seed(h, static_cast<std::uint64_t>(n.n_constraints));
  }
  for (const auto& e : edges_) {
    h = mix_seed(h, static_cast<std::uint64_t>(e.from) * 1000003u +
                        static_cast<std::uint64_t>(e.to));
    h = mix_seed(h, static_cast<std::uint64_t>(e.dim));
  }
  h = mix_seed(h, static_cast<std::uint64_t>(coupling_dim()));
  h = mix_seed(h, static_cast<std::uint64_t>(eps_dims_));
  h = mix_seed(h, static_cast<std::uint64_t>(lifted_ ? 1 : 0));
  return h;
}

GraphSpec build_graph(std::vector<NodeSpec> nodes, std::vector<EdgeSpec> edges,
                      std::optional<Box> coupling_box, int eps_dims) {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw Error("graph needs at least one node");
  for (int i = 0; i < n; ++i)
    if (nodes[i].id != i)
      throw Error("node ids must be contiguous 0..N-1 (node " + std::to_string(i) + ")");

  std::set<std::pair<NodeId, NodeId>> seen;
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
      throw Error("edge endpoint out of range");
    if (e.from == e.to) throw CycleDetected("self-loop on node " + std::to_string(e.from));
    if (e.dim < 1) throw DimensionMismatch("edge payload dim must be positive");
    if (!seen.insert({e.from, e.to}).second)
      throw Error("duplicate edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
  }

  GraphSpec g;
  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  if (eps_dims > 0 && !coupling_box) throw MissingCouplingBox("eps dims without coupling box");
  if (coupling_box && coupling_box->dim() < eps_dims)
    throw DimensionMismatch("eps dims exceed coupling box dim");
  g.coupling_box_ = std::move(coupling_box);
  g.eps_dims_ = eps_dims;

  g.in_edges_.assign(n, {});
  g.out_edges_.assign(n, {});
  g.in_nbrs_.assign(n, {});
  g.out_nbrs_.assign(n, {});
  for (int e = 0; e < static_cast<int>(g.edges_.size()); ++e) {
    g.in_edges_[g.edges_[e].to].push_back(e);
    g.out_edges_[g.edges_[e].from].push_back(e);
  }
  auto by_from = [&](int a, int b) { return g.edges_[a].from < g.edges_[b].from; };
  auto by_to = [&](int a, int b) { return g.edges_[a].to < g.edges_[b].to; };
  for (int i = 0; i < n; ++i) {
    std::sort(g.in_edges_[i].begin(), g.in_edges_[i].end(), by_from);
    std::sort(g.out_edges_[i].begin(), g.out_edges_[i].end(), by_to);
    for (int e : g.in_edges_[i]) g.in_nbrs_[i].push_back(g.edges_[e].from);
    for (int e : g.out_edges_[i]) g.out_nbrs_[i].push_back(g.edges_[e].to);
  }

  // acyclicity (Kahn); topological_order relies on this having passed
  std::vector<int> indeg(n, 0);
  for (const auto& e : g.edges_) indeg[e.to]++;
  std::priority_queue<int, std::vector<int>, std::greater<>> q;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) q.push(i);
  int visited = 0;
  while (!q.empty()) {
    int u = q.top();
    q.pop();
    ++visited;
    for (int e : g.out_edges_[u])
      if (--indeg[g.edges_[e].to] == 0) q.push(g.edges_[e].to);
  }
  if (visited != n) throw CycleDetected("edge set admits no topological order");
  return g;
}

std::vector<NodeId> topological_order(const GraphSpec& graph) {
  const int n = graph.node_count();
  std::vector<int> indeg(n, 0);
  for (const auto& e : graph.edges()) indeg[e.to]++;
  std::priority_queue<int, std::vector<int>, std::greater<>> q;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) q.push(i);
  std::vector<NodeId> order;
  order.reserve(n);
  while (!q.empty()) {
    int u = q.top();
    q.pop();
    order.push_back(u);
    for (int e : graph.out_edges(u))
      if (--indeg[graph.edges()[e].to] == 0) q.push(graph.edges()[e].to);
  }
  return order;
}

std::pair<std::set<NodeId>, std::set<NodeId>> roots_and_leaves(const GraphSpec& graph) {
  std::set<NodeId> roots, leaves;
  for (int i = 0; i < graph.node_count(); ++i) {
    if (graph.in_neighbors(i).empty()) roots.insert(i);
    if (graph.out_neighbors(i).empty()) leaves.insert(i);
  }
  return {roots, leaves};
}

Eigen::MatrixXi adjacency_matrix(const GraphSpec& graph) {
  const int n = graph.node_count();
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (const auto& e : graph.edges()) a(e.from, e.to) = 1;
  return a;
}

GraphSpec lift_coupling(const GraphSpec& graph) {
  if (!graph.coupling_box()) throw MissingCouplingBox("graph has no coupling box to lift");
  GraphSpec g = graph;
  g.lifted_ = true;
  return g;
}

}  // namespace dagcsp
