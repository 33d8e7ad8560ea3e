#pragma once

#include "dagcsp/domains.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dagcsp {

using NodeId = int;

struct EdgeSpec {
  NodeId from = -1;
  NodeId to = -1;
  int dim = 1;  // length of the payload y_from^to
};

// One model invocation yields the payloads for every out-edge plus the local
// constraint values; callers count it as a single constituent evaluation.
struct NodeEval {
  std::vector<Vec> outputs;  // aligned with GraphSpec::out_edges(node) order
  Vec constraints;           // feasible iff all <= 0 (may be empty)
};

// v: local parameters, u: concatenated in-edge payloads, z: coupling copy
// (empty unless the graph is lifted). Must be deterministic and re-entrant.
using NodeFn = std::function<NodeEval(const Vec& v, const Vec& u, const Vec& z)>;

struct NodeSpec {
  NodeId id = -1;
  Box param_box;           // K_{v_i}; may be 0-dim
  int n_constraints = 0;   // rows of G_i
  NodeFn model;
  bool cheap = false;      // true: embed the true map in coupling NLPs instead of a regressor
  std::string name;
};

class GraphSpec {
 public:
  GraphSpec() = default;

  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const std::vector<EdgeSpec>& edges() const { return edges_; }
  const NodeSpec& node(NodeId i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // edge indices sorted by the opposite endpoint; fixes the layout of u_i and y_i
  const std::vector<int>& in_edges(NodeId i) const { return in_edges_[i]; }
  const std::vector<int>& out_edges(NodeId i) const { return out_edges_[i]; }
  const std::vector<NodeId>& in_neighbors(NodeId i) const { return in_nbrs_[i]; }
  const std::vector<NodeId>& out_neighbors(NodeId i) const { return out_nbrs_[i]; }

  Index input_dim(NodeId i) const;   // sum of in-edge payload dims
  Index output_dim(NodeId i) const;  // sum of out-edge payload dims
  Index param_dim(NodeId i) const { return node(i).param_box.dim(); }
  Index joint_param_dim() const;

  // offset of an edge's payload within the receiving node's u vector
  Index input_offset(NodeId node, int edge_index) const;

  bool lifted() const { return lifted_; }
  const std::optional<Box>& coupling_box() const { return coupling_box_; }
  int eps_dims() const { return eps_dims_; }
  Index coupling_dim() const { return coupling_box_ ? coupling_box_->dim() : 0; }

  Box joint_param_box() const;  // prod_i K_{v_i}

  NodeEval eval_node(NodeId i, const Vec& v, const Vec& u, const Vec& z) const;

  // stable identity for persisted runs (topology + dims + name)
  std::uint64_t structure_hash() const;

  std::string name;

 private:
  friend GraphSpec build_graph(std::vector<NodeSpec>, std::vector<EdgeSpec>,
                               std::optional<Box>, int);
  friend GraphSpec lift_coupling(const GraphSpec&);

  std::vector<NodeSpec> nodes_;
  std::vector<EdgeSpec> edges_;
  std::vector<std::vector<int>> in_edges_, out_edges_;
  std::vector<std::vector<NodeId>> in_nbrs_, out_nbrs_;
  std::optional<Box> coupling_box_;
  int eps_dims_ = 0;
  bool lifted_ = false;
};

// Validates ids, endpoints, and acyclicity; caches neighbour sets.
GraphSpec build_graph(std::vector<NodeSpec> nodes, std::vector<EdgeSpec> edges,
                      std::optional<Box> coupling_box = std::nullopt, int eps_dims = 0);

// Kahn's algorithm, ties broken by ascending id.
std::vector<NodeId> topological_order(const GraphSpec& graph);

std::pair<std::set<NodeId>, std::set<NodeId>> roots_and_leaves(const GraphSpec& graph);

// a_{ik} = 1 iff edge (i,k) exists.
Eigen::MatrixXi adjacency_matrix(const GraphSpec& graph);

// Marks the graph as lifted: every node's subproblem gains a local copy of the
// coupling parameters and each edge forwards the copy by identity.
GraphSpec lift_coupling(const GraphSpec& graph);

}  // namespace dagcsp
