#include "dagcsp/propagate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <unordered_map>

namespace dagcsp {

namespace {

using nlohmann::json;

json box_to_json(const Box& b) {
  json j;
  j["lo"] = std::vector<double>(b.lo.data(), b.lo.data() + b.lo.size());
  j["hi"] = std::vector<double>(b.hi.data(), b.hi.data() + b.hi.size());
  return j;
}

Box box_from_json(const json& j) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  return Box(Eigen::Map<const Vec>(lo.data(), static_cast<Index>(lo.size())),
             Eigen::Map<const Vec>(hi.data(), static_cast<Index>(hi.size())));
}

// Column layout of a node's subproblem: v, then in-edge payloads, then the
// coupling copy (z, eps) when the graph is lifted.
std::vector<ColumnRole> subproblem_roles(const GraphSpec& g, NodeId i) {
  std::vector<ColumnRole> roles;
  Index at = 0;
  if (g.param_dim(i) > 0) {
    roles.push_back({RoleKind::Param, i, -1, at, g.param_dim(i)});
    at += g.param_dim(i);
  }
  for (int e : g.in_edges(i)) {
    roles.push_back({RoleKind::Input, i, g.edges()[e].from, at, g.edges()[e].dim});
    at += g.edges()[e].dim;
  }
  if (g.lifted()) {
    const Index nz = g.coupling_dim() - g.eps_dims();
    if (nz > 0) roles.push_back({RoleKind::LiftZ, -1, -1, at, nz});
    if (g.eps_dims() > 0) roles.push_back({RoleKind::LiftEps, -1, -1, at + nz, g.eps_dims()});
  }
  return roles;
}

Index subproblem_dim(const GraphSpec& g, NodeId i) {
  return g.param_dim(i) + g.input_dim(i) + (g.lifted() ? g.coupling_dim() : 0);
}

struct Slices {
  Index dv, du, dz;
};

Slices node_slices(const GraphSpec& g, NodeId i) {
  return {g.param_dim(i), g.input_dim(i), g.lifted() ? g.coupling_dim() : 0};
}

// ---- embedded coupling NLPs --------------------------------------------------------

Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x,
                std::int64_t* evals) {
  const Vec f0 = fn(x);
  Mat J(f0.size(), x.size());
  for (Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (fn(xp) - fn(xm)) / (2 * h);
    if (evals) *evals += 2;
  }
  if (evals) *evals += 1;
  return J;
}

struct NodeBlock {
  const NodeState* state = nullptr;
  std::vector<int> decision_of;  // xs position -> decision index, or -1
  Vec base;                      // pinned values; decision/tie slots overwritten
  bool hinge = false;            // contributes max(0, g) instead of g

  // a node whose subproblem had a single class carries no classifier; its
  // region is the box alone and its decision value is taken as -1
  double decision(const Vec& xs) const {
    return state->has_classifier ? svm_decision(state->classifier, xs) : -1.0;
  }
  Vec decision_grad(const Vec& xs) const {
    return state->has_classifier ? svm_gradient(state->classifier, xs)
                                 : Vec::Zero(xs.size());
  }
};

struct TieMap {
  int src_block = 0;
  int dst_block = -1;  // -1: residual against residual_target
  Index dst_offset = 0;
  Index rows = 0;
  const KrrRegressor* reg = nullptr;
  std::function<Vec(const Vec&)> value_fn;  // used when reg == nullptr
  Vec residual_target;
};

struct CouplingNlp {
  Box decision_box;
  std::vector<NodeBlock> blocks;
  std::vector<TieMap> ties;
  double penalty_weight = 1e3;
  mutable std::int64_t true_fn_evals = 0;

  Index decisions() const { return decision_box.dim(); }

  double eval(const Vec& x, Vec& grad) const {
    std::vector<Vec> xs(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      xs[b] = blocks[b].base;
      for (Index p = 0; p < xs[b].size(); ++p)
        if (blocks[b].decision_of[static_cast<std::size_t>(p)] >= 0)
          xs[b][p] = x[blocks[b].decision_of[static_cast<std::size_t>(p)]];
    }

    std::vector<Vec> tie_vals(ties.size());
    std::vector<Mat> tie_jacs(ties.size());
    for (std::size_t t = 0; t < ties.size(); ++t) {
      const TieMap& tie = ties[t];
      const Vec& src = xs[static_cast<std::size_t>(tie.src_block)];
      if (tie.reg) {
        tie_vals[t] = krr_predict(*tie.reg, src);
        tie_jacs[t] = krr_jacobian(*tie.reg, src);
      } else {
        tie_vals[t] = tie.value_fn(src);
        ++true_fn_evals;
        tie_jacs[t] = fd_jacobian(tie.value_fn, src, &true_fn_evals);
      }
      if (tie.dst_block >= 0)
        xs[static_cast<std::size_t>(tie.dst_block)].segment(tie.dst_offset, tie.rows) =
            tie_vals[t];
    }

    std::vector<double> gval(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b)
      gval[b] = blocks[b].decision(xs[b]);

    double val = gval[0];
    std::size_t arg = 0;
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      const double h = std::max(0.0, gval[b]);
      if (h > val) {
        val = h;
        arg = b;
      }
    }

    double pen = 0.0;
    for (std::size_t t = 0; t < ties.size(); ++t)
      if (ties[t].dst_block < 0)
        pen += penalty_weight * (ties[t].residual_target - tie_vals[t]).squaredNorm();

    grad = Vec::Zero(decisions());
    auto add_xs_grad = [&](std::size_t b, const Vec& gxs) {
      const NodeBlock& blk = blocks[b];
      for (Index p = 0; p < gxs.size(); ++p)
        if (blk.decision_of[static_cast<std::size_t>(p)] >= 0)
          grad[blk.decision_of[static_cast<std::size_t>(p)]] += gxs[p];
      // chain through ties feeding this block
      for (std::size_t t = 0; t < ties.size(); ++t) {
        const TieMap& tie = ties[t];
        if (tie.dst_block != static_cast<int>(b)) continue;
        const Vec sub = gxs.segment(tie.dst_offset, tie.rows);
        const Vec gsrc = tie_jacs[t].transpose() * sub;
        const NodeBlock& srcb = blocks[static_cast<std::size_t>(tie.src_block)];
        for (Index p = 0; p < gsrc.size(); ++p)
          if (srcb.decision_of[static_cast<std::size_t>(p)] >= 0)
            grad[srcb.decision_of[static_cast<std::size_t>(p)]] += gsrc[p];
      }
    };

    const bool branch_active = (arg == 0) || (gval[arg] > 0);
    if (branch_active) add_xs_grad(arg, blocks[arg].decision_grad(xs[arg]));

    for (std::size_t t = 0; t < ties.size(); ++t) {
      const TieMap& tie = ties[t];
      if (tie.dst_block >= 0) continue;
      const Vec r = tie.residual_target - tie_vals[t];
      const Vec gsrc = -2.0 * penalty_weight * (tie_jacs[t].transpose() * r);
      const NodeBlock& srcb = blocks[static_cast<std::size_t>(tie.src_block)];
      for (Index p = 0; p < gsrc.size(); ++p)
        if (srcb.decision_of[static_cast<std::size_t>(p)] >= 0)
          grad[srcb.decision_of[static_cast<std::size_t>(p)]] += gsrc[p];
    }
    return val + pen;
  }

  // worst per-dimension residual scaled by tolerance widths; <= 1 passes
  double residual_score(const Vec& x, const std::vector<Vec>& tolerances) const {
    std::vector<Vec> xs(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      xs[b] = blocks[b].base;
      for (Index p = 0; p < xs[b].size(); ++p)
        if (blocks[b].decision_of[static_cast<std::size_t>(p)] >= 0)
          xs[b][p] = x[blocks[b].decision_of[static_cast<std::size_t>(p)]];
    }
    double worst = 0.0;
    std::size_t rt = 0;
    for (std::size_t t = 0; t < ties.size(); ++t) {
      const TieMap& tie = ties[t];
      if (tie.dst_block >= 0) continue;
      const Vec& src = xs[static_cast<std::size_t>(tie.src_block)];
      Vec val;
      if (tie.reg) {
        val = krr_predict(*tie.reg, src);
      } else {
        val = tie.value_fn(src);
        ++true_fn_evals;
      }
      const Vec r = (tie.residual_target - val).cwiseAbs();
      const Vec& tol = tolerances[rt++];
      for (Index d = 0; d < r.size(); ++d) worst = std::max(worst, r[d] / tol[d]);
    }
    return worst;
  }
};

struct BlockBuilder {
  CouplingNlp nlp;
  std::vector<double> lo, hi;

  int add_block(const NodeState* state, bool hinge) {
    NodeBlock blk;
    blk.state = state;
    blk.hinge = hinge;
    blk.base = Vec::Zero(state->vu_box.dim());
    blk.decision_of.assign(static_cast<std::size_t>(state->vu_box.dim()), -1);
    nlp.blocks.push_back(std::move(blk));
    return static_cast<int>(nlp.blocks.size()) - 1;
  }

  void decide(int block, Index xs_begin, Index count) {
    NodeBlock& blk = nlp.blocks[static_cast<std::size_t>(block)];
    const Box& b = blk.state->vu_box;
    for (Index p = xs_begin; p < xs_begin + count; ++p) {
      blk.decision_of[static_cast<std::size_t>(p)] = static_cast<int>(lo.size());
      lo.push_back(b.lo[p]);
      hi.push_back(b.hi[p]);
    }
  }

  void pin(int block, Index xs_begin, const Vec& values) {
    NodeBlock& blk = nlp.blocks[static_cast<std::size_t>(block)];
    blk.base.segment(xs_begin, values.size()) = values;
  }

  CouplingNlp finish(double penalty_weight) {
    nlp.penalty_weight = penalty_weight;
    nlp.decision_box =
        Box(Eigen::Map<const Vec>(lo.data(), static_cast<Index>(lo.size())),
            Eigen::Map<const Vec>(hi.data(), static_cast<Index>(hi.size())));
    return std::move(nlp);
  }
};

// true constituent map of one edge as a tie target (cheap-node route)
std::function<Vec(const Vec&)> true_edge_fn(const GraphSpec& g, NodeId node, int edge) {
  const Slices s = node_slices(g, node);
  int out_pos = 0;
  for (int e : g.out_edges(node)) {
    if (e == edge) break;
    ++out_pos;
  }
  return [&g, node, edge, s, out_pos](const Vec& xs) {
    const Vec v = xs.head(s.dv);
    const Vec u = xs.segment(s.dv, s.du);
    const Vec z = s.dz > 0 ? xs.tail(s.dz) : Vec();
    return g.eval_node(node, v, u, z).outputs[static_cast<std::size_t>(out_pos)];
  };
}

struct CheckContext {
  const GraphSpec* graph = nullptr;
  std::vector<int> topo_pos;
  NlpConfig nlp;
  bool coupling_b_on = true;
};

const KrrRegressor* edge_regressor(const NodeState& st, int edge) {
  const auto it = st.regressors.find(edge);
  return it == st.regressors.end() ? nullptr : &it->second;
}

// Does a feasible setting of the in-neighbour j reproduce the candidate's
// input slice for edge e under the (surrogate) constituent map?
bool upstream_coupling_ok(const CheckContext& ctx, NodeId node, int edge,
                          const Vec& u_target, const Vec& zc,
                          const std::vector<NodeState>& states, const Vec& res_tol,
                          std::int64_t* nlp_solves, std::int64_t* true_evals) {
  const GraphSpec& g = *ctx.graph;
  const NodeId j = g.edges()[edge].from;
  const NodeState& Sj = states[static_cast<std::size_t>(j)];
  if (Sj.samples.size() == 0) return true;  // state not populated (e.g. spec-op use)

  const Slices sj = node_slices(g, j);
  for (Index d = 0; d < zc.size(); ++d)
    if (zc[d] < Sj.vu_box.lo[sj.dv + sj.du + d] ||
        zc[d] > Sj.vu_box.hi[sj.dv + sj.du + d])
      return false;

  BlockBuilder bb;
  const int b0 = bb.add_block(&Sj, false);
  bb.decide(b0, 0, sj.dv + sj.du);
  if (sj.dz > 0) bb.pin(b0, sj.dv + sj.du, zc);

  // main reachability tie: u_target = F_j^node(v_j, u_j)
  {
    TieMap tie;
    tie.src_block = b0;
    tie.dst_block = -1;
    tie.rows = g.edges()[edge].dim;
    tie.residual_target = u_target;
    if (g.node(j).cheap)
      tie.value_fn = true_edge_fn(g, j, edge);
    else
      tie.reg = edge_regressor(Sj, edge);
    if (!tie.reg && !tie.value_fn) return true;  // no surrogate available
    bb.nlp.ties.push_back(std::move(tie));
  }

  // earlier-ordered sibling terms (constraint (b)): tightening when j has
  // several children
  if (ctx.coupling_b_on) {
    for (int e2 : g.out_edges(j)) {
      if (e2 == edge) continue;
      const NodeId k = g.edges()[e2].to;
      if (ctx.topo_pos[static_cast<std::size_t>(k)] >=
          ctx.topo_pos[static_cast<std::size_t>(node)])
        continue;
      const NodeState& Sk = states[static_cast<std::size_t>(k)];
      if (!Sk.has_classifier) continue;
      const KrrRegressor* reg = edge_regressor(Sj, e2);
      std::function<Vec(const Vec&)> vfn;
      if (g.node(j).cheap) vfn = true_edge_fn(g, j, e2);
      if (!reg && !vfn) continue;

      const Slices sk = node_slices(g, k);
      const int b = bb.add_block(&Sk, true);
      bb.decide(b, 0, sk.dv);
      const Index tied_at = sk.dv + g.input_offset(k, e2);
      for (int e3 : g.in_edges(k)) {
        if (e3 == e2) continue;
        bb.decide(b, sk.dv + g.input_offset(k, e3), g.edges()[e3].dim);
      }
      if (sk.dz > 0) bb.pin(b, sk.dv + sk.du, zc);

      TieMap tie;
      tie.src_block = b0;
      tie.dst_block = b;
      tie.dst_offset = tied_at;
      tie.rows = g.edges()[e2].dim;
      tie.reg = reg;
      tie.value_fn = std::move(vfn);
      bb.nlp.ties.push_back(std::move(tie));
    }
  }

  CouplingNlp nlp = bb.finish(ctx.nlp.penalty_weight);
  auto obj = [&nlp](const Vec& x, Vec& grad) { return nlp.eval(x, grad); };
  const NlpResult r =
      multistart_minimize(obj, nlp.decision_box, ctx.nlp.n_starts, 0, ctx.nlp.tol,
                          ctx.nlp.max_iter, 0.5 * ctx.nlp.feas_tol);
  if (nlp_solves) *nlp_solves += 1;
  if (true_evals) *true_evals += nlp.true_fn_evals;
  if (r.f_star > ctx.nlp.feas_tol) return false;
  return nlp.residual_score(r.x_star, {res_tol}) <= 1.0;
}

// Does the candidate's exact output admit a feasible completion of the
// out-neighbour k (its remaining inputs and parameters)?
bool downstream_coupling_ok(const CheckContext& ctx, NodeId node, int edge,
                            const Vec& y_pin, const Vec& zc,
                            const std::vector<NodeState>& states,
                            std::int64_t* nlp_solves, std::int64_t* true_evals) {
  const GraphSpec& g = *ctx.graph;
  const NodeId k = g.edges()[edge].to;
  const NodeState& Sk = states[static_cast<std::size_t>(k)];
  if (Sk.samples.size() == 0) return true;  // state not populated

  const Slices sk = node_slices(g, k);
  // the pinned slices must lie inside the neighbour's search domain at all
  const Index pin_at = sk.dv + g.input_offset(k, edge);
  for (Index d = 0; d < y_pin.size(); ++d)
    if (y_pin[d] < Sk.vu_box.lo[pin_at + d] || y_pin[d] > Sk.vu_box.hi[pin_at + d])
      return false;
  for (Index d = 0; d < zc.size(); ++d)
    if (zc[d] < Sk.vu_box.lo[sk.dv + sk.du + d] ||
        zc[d] > Sk.vu_box.hi[sk.dv + sk.du + d])
      return false;
  if (!Sk.has_classifier) return true;  // box membership is the whole region

  BlockBuilder bb;
  const int b0 = bb.add_block(&Sk, false);
  bb.decide(b0, 0, sk.dv);
  bb.pin(b0, pin_at, y_pin);
  if (sk.dz > 0) bb.pin(b0, sk.dv + sk.du, zc);

  for (int e2 : g.in_edges(k)) {
    if (e2 == edge) continue;
    const NodeId j = g.edges()[e2].from;
    const bool later = ctx.topo_pos[static_cast<std::size_t>(j)] >
                       ctx.topo_pos[static_cast<std::size_t>(node)];
    const NodeState& Sj = states[static_cast<std::size_t>(j)];
    const KrrRegressor* reg = later ? edge_regressor(Sj, e2) : nullptr;
    std::function<Vec(const Vec&)> vfn;
    if (later && g.node(j).cheap) vfn = true_edge_fn(g, j, e2);

    // co-parent term (constraint (b)): solved later nodes constrain the slice
    if (ctx.coupling_b_on && later && Sj.has_classifier && (reg || vfn)) {
      const Slices sj = node_slices(g, j);
      const int b = bb.add_block(&Sj, true);
      bb.decide(b, 0, sj.dv + sj.du);
      if (sj.dz > 0) bb.pin(b, sj.dv + sj.du, zc);
      TieMap tie;
      tie.src_block = b;
      tie.dst_block = b0;
      tie.dst_offset = sk.dv + g.input_offset(k, e2);
      tie.rows = g.edges()[e2].dim;
      tie.reg = reg;
      tie.value_fn = std::move(vfn);
      bb.nlp.ties.push_back(std::move(tie));
    } else {
      bb.decide(b0, sk.dv + g.input_offset(k, e2), g.edges()[e2].dim);
    }
  }

  CouplingNlp nlp = bb.finish(ctx.nlp.penalty_weight);
  if (nlp.decisions() == 0) {
    // fully pinned subproblem; a direct classifier evaluation decides
    Vec grad;
    const double f = nlp.eval(Vec(), grad);
    if (true_evals) *true_evals += nlp.true_fn_evals;
    return f <= ctx.nlp.feas_tol;
  }
  auto obj = [&nlp](const Vec& x, Vec& grad) { return nlp.eval(x, grad); };
  const NlpResult r =
      multistart_minimize(obj, nlp.decision_box, ctx.nlp.n_starts, 0, ctx.nlp.tol,
                          ctx.nlp.max_iter, 0.5 * ctx.nlp.feas_tol);
  if (nlp_solves) *nlp_solves += 1;
  if (true_evals) *true_evals += nlp.true_fn_evals;
  return r.f_star <= ctx.nlp.feas_tol;
}

Vec residual_tolerance(const Box& input_box, Index offset, Index rows, double frac) {
  Vec tol(rows);
  for (Index d = 0; d < rows; ++d)
    tol[d] = std::max(frac * std::max(input_box.width()[offset + d], 1e-6), 1e-12);
  return tol;
}

bool coupling_b_active(CouplingBMode mode) { return mode != CouplingBMode::Off; }

}  // namespace

// ---- NodeState / PropagationState ---------------------------------------------------

bool NodeState::region_contains(const Vec& vu, double tol) const {
  if (!contains(vu_box, vu)) return false;
  if (!has_classifier) return true;
  return svm_decision(classifier, vu) <= tol;
}

const PassState& PropagationState::final_pass() const {
  if (passes.empty()) throw Error("propagation state has no passes");
  return passes.back();
}

const NodeState& PropagationState::node_state(std::size_t pass, NodeId node) const {
  return passes.at(pass).nodes.at(static_cast<std::size_t>(node));
}

// ---- search-domain estimation -------------------------------------------------------

std::map<NodeId, Box> estimate_backward_domains(const GraphSpec& graph, int n_sobol,
                                                double inflation, EvalCounter& counter,
                                                int workers) {
  if (n_sobol < 2) throw Error("estimate_backward_domains needs n_sobol >= 2");
  const Index dv = graph.joint_param_dim();
  const Index dz = graph.coupling_dim();
  Box joint = graph.joint_param_box();
  if (dz > 0) joint = joint.concat(*graph.coupling_box());

  const Mat pts = scale_to_box(sobol(static_cast<int>(dv + dz), n_sobol, 0), joint);
  const auto topo = topological_order(graph);

  std::map<NodeId, Mat> u_rows;
  for (int i = 0; i < graph.node_count(); ++i)
    if (graph.input_dim(i) > 0) u_rows[i] = Mat(n_sobol, graph.input_dim(i));

  std::vector<Index> v_offset(static_cast<std::size_t>(graph.node_count()), 0);
  {
    Index at = 0;
    for (const auto& n : graph.nodes()) {
      v_offset[static_cast<std::size_t>(n.id)] = at;
      at += n.param_box.dim();
    }
  }

  int evaluated_nodes = 0;
  for (int i = 0; i < graph.node_count(); ++i)
    if (!graph.out_edges(i).empty()) ++evaluated_nodes;

  parallel_for(static_cast<std::size_t>(n_sobol), workers, [&](std::size_t row) {
    const Vec z = dz > 0 ? pts.row(static_cast<Index>(row)).tail(dz).transpose() : Vec();
    std::vector<Vec> edge_payload(graph.edges().size());
    for (NodeId i : topo) {
      Vec u(graph.input_dim(i));
      Index at = 0;
      for (int e : graph.in_edges(i)) {
        u.segment(at, graph.edges()[e].dim) = edge_payload[static_cast<std::size_t>(e)];
        at += graph.edges()[e].dim;
      }
      if (u.size() > 0) u_rows.at(i).row(static_cast<Index>(row)) = u.transpose();
      if (graph.out_edges(i).empty()) continue;
      const Vec v = pts.row(static_cast<Index>(row))
                        .segment(v_offset[static_cast<std::size_t>(i)], graph.param_dim(i))
                        .transpose();
      NodeEval ev = graph.eval_node(i, v, u, z);
      int k = 0;
      for (int e : graph.out_edges(i))
        edge_payload[static_cast<std::size_t>(e)] = ev.outputs[static_cast<std::size_t>(k++)];
    }
  });
  counter.constituent_evals +=
      static_cast<std::int64_t>(n_sobol) * static_cast<std::int64_t>(evaluated_nodes);

  std::map<NodeId, Box> out;
  for (int i = 0; i < graph.node_count(); ++i) {
    if (graph.input_dim(i) == 0) {
      out[i] = Box::empty();
    } else {
      out[i] = interval_hull(u_rows.at(i), inflation);
    }
  }
  return out;
}

Box forward_input_domain(const GraphSpec& graph, NodeId node,
                         const std::vector<NodeState>& upstream_states, double inflation) {
  std::vector<Box> parts;
  for (int e : graph.in_edges(node)) {
    const NodeId j = graph.edges()[e].from;
    const NodeState& Sj = upstream_states[static_cast<std::size_t>(j)];
    const Index feas = Sj.samples.feasible_count();
    if (feas == 0)
      throw EmptyUpstreamSolution("node " + std::to_string(j) +
                                  " has no feasible samples for forward domain");
    Index off = 0;
    for (int e2 : graph.out_edges(j)) {
      if (e2 == e) break;
      off += graph.edges()[e2].dim;
    }
    Mat img(feas, graph.edges()[e].dim);
    Index at = 0;
    for (Index r = 0; r < Sj.samples.size(); ++r)
      if (Sj.samples.labels[r] == -1)
        img.row(at++) = Sj.cached_outputs.row(r).segment(off, graph.edges()[e].dim);
    parts.push_back(interval_hull(img, inflation));
  }
  if (parts.empty()) return Box::empty();
  return box_product(parts);
}

// ---- spec-surface feasibility tests ------------------------------------------------

namespace {

CheckContext make_context(const GraphSpec& graph, const NlpConfig& cfg) {
  CheckContext ctx;
  ctx.graph = &graph;
  ctx.nlp = cfg;
  ctx.coupling_b_on = coupling_b_active(cfg.coupling_b);
  const auto topo = topological_order(graph);
  ctx.topo_pos.assign(static_cast<std::size_t>(graph.node_count()), 0);
  for (std::size_t p = 0; p < topo.size(); ++p)
    ctx.topo_pos[static_cast<std::size_t>(topo[p])] = static_cast<int>(p);
  return ctx;
}

}  // namespace

bool feasibility_forward(const GraphSpec& graph, NodeId node, const Vec& v, const Vec& u,
                         const Vec& z_copy, const std::vector<NodeState>& pass_states,
                         const NlpConfig& nlp_cfg, EvalCounter& counter) {
  const NodeEval ev = graph.eval_node(node, v, u, z_copy);
  counter.constituent_evals += 1;
  counter.constraint_evals += 1;
  if (ev.constraints.size() > 0 && ev.constraints.maxCoeff() > 0) return false;

  const CheckContext ctx = make_context(graph, nlp_cfg);
  const NodeState& self = pass_states[static_cast<std::size_t>(node)];
  for (int e : graph.in_edges(node)) {
    const Index off = graph.input_offset(node, e);
    const Vec target = u.segment(off, graph.edges()[e].dim);
    const Vec res_tol = residual_tolerance(
        self.input_box.dim() > 0 ? self.input_box
                                 : interval_hull(target.transpose(), 0.0),
        self.input_box.dim() > 0 ? off : 0, graph.edges()[e].dim, nlp_cfg.res_tol_frac);
    if (!upstream_coupling_ok(ctx, node, e, target, z_copy, pass_states, res_tol,
                              &counter.nlp_solves, &counter.constituent_evals))
      return false;
  }
  return true;
}

bool feasibility_backward(const GraphSpec& graph, NodeId node, const Vec& v, const Vec& u,
                          const Vec& z_copy, const std::vector<NodeState>& pass_states,
                          const NlpConfig& nlp_cfg, EvalCounter& counter) {
  const NodeEval ev = graph.eval_node(node, v, u, z_copy);
  counter.constituent_evals += 1;
  counter.constraint_evals += 1;
  if (ev.constraints.size() > 0 && ev.constraints.maxCoeff() > 0) return false;

  const CheckContext ctx = make_context(graph, nlp_cfg);
  int k = 0;
  for (int e : graph.out_edges(node)) {
    const Vec y = ev.outputs[static_cast<std::size_t>(k++)];
    if (!downstream_coupling_ok(ctx, node, e, y, z_copy, pass_states,
                                &counter.nlp_solves, &counter.constituent_evals))
      return false;
  }
  return true;
}

// ---- the propagation engine ---------------------------------------------------------

namespace {

struct OutputCache {
  std::mutex mu;
  std::unordered_map<std::string, NodeEval> map;

  static std::string key(const Vec& x) {
    return std::string(reinterpret_cast<const char*>(x.data()),
                       static_cast<std::size_t>(x.size()) * sizeof(double));
  }
  void put(const Vec& x, NodeEval ev) {
    std::lock_guard<std::mutex> lock(mu);
    map[key(x)] = std::move(ev);
  }
  const NodeEval* get(const Vec& x) {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = map.find(key(x));
    return it == map.end() ? nullptr : &it->second;
  }
};

SampleSet subsample_balanced(const SampleSet& s, Index cap, std::uint64_t seed) {
  if (s.size() <= cap) return s;
  std::vector<Index> feas, infeas;
  for (Index i = 0; i < s.size(); ++i)
    (s.labels[i] == -1 ? feas : infeas).push_back(i);
  SplitMix64 rng(mix_seed(seed, "subsample"));
  auto shuffle = [&rng](std::vector<Index>& v) {
    for (Index i = static_cast<Index>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  };
  shuffle(feas);
  shuffle(infeas);
  const Index half = cap / 2;
  const Index nf = std::min<Index>(static_cast<Index>(feas.size()), half);
  const Index ni = std::min<Index>(static_cast<Index>(infeas.size()), cap - nf);
  std::vector<Index> keep(feas.begin(), feas.begin() + nf);
  keep.insert(keep.end(), infeas.begin(), infeas.begin() + ni);
  std::sort(keep.begin(), keep.end());
  SampleSet out;
  out.points.resize(static_cast<Index>(keep.size()), s.dim());
  out.labels.resize(static_cast<Index>(keep.size()));
  for (Index i = 0; i < out.size(); ++i) {
    out.points.row(i) = s.points.row(keep[static_cast<std::size_t>(i)]);
    out.labels[i] = s.labels[keep[static_cast<std::size_t>(i)]];
  }
  out.n_evaluations = s.n_evaluations;
  out.roles = s.roles;
  return out;
}

void train_node_surrogates(const GraphSpec& graph, NodeState& ns,
                           const SurrogateConfig& cfg, std::uint64_t seed) {
  // classifier on the balanced, capped sample set
  try {
    SampleSet balanced =
        augment_balance(ns.samples, cfg.jitter_fraction, mix_seed(seed, "balance"));
    balanced = subsample_balanced(balanced, cfg.max_classifier_points,
                                  mix_seed(seed, "clf-cap"));
    auto [clf, report] =
        train_svm(balanced, cfg.svm_grid, cfg.k_folds, mix_seed(seed, "svm"), cfg.smo);
    ns.classifier = std::move(clf);
    ns.classifier_cv = std::move(report);
    ns.has_classifier = true;
  } catch (const SingleClassDataset&) {
    ns.has_classifier = false;  // trivially feasible (or infeasible) node
  }

  // out-edge regressors from the cached outputs
  if (graph.node(ns.node).cheap) return;
  const Index n = ns.samples.size();
  if (n < 4 || graph.out_edges(ns.node).empty()) return;
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (n > cfg.max_regressor_points) {
    SplitMix64 rng(mix_seed(seed, "reg-cap"));
    for (Index i = n - 1; i > 0; --i)
      std::swap(rows[static_cast<std::size_t>(i)],
                rows[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    rows.resize(static_cast<std::size_t>(cfg.max_regressor_points));
    std::sort(rows.begin(), rows.end());
  }
  Mat X(static_cast<Index>(rows.size()), ns.samples.dim());
  for (Index i = 0; i < X.rows(); ++i)
    X.row(i) = ns.samples.points.row(rows[static_cast<std::size_t>(i)]);
  Index off = 0;
  for (int e : graph.out_edges(ns.node)) {
    const Index dim = graph.edges()[e].dim;
    Mat Y(static_cast<Index>(rows.size()), dim);
    for (Index i = 0; i < Y.rows(); ++i)
      Y.row(i) = ns.cached_outputs.row(rows[static_cast<std::size_t>(i)]).segment(off, dim);
    auto [reg, report] = train_krr(X, Y, cfg.krr_grid, cfg.k_folds,
                                   mix_seed(seed, "krr", static_cast<std::uint64_t>(e)));
    ns.regressors[e] = std::move(reg);
    ns.regressor_cv[e] = std::move(report);
    off += dim;
  }
}

}  // namespace

PropagationState propagate(const GraphSpec& graph, const std::string& directions,
                           const SamplerConfig& sampler_cfg, const NlpConfig& nlp_cfg,
                           const SurrogateConfig& surrogate_cfg,
                           const DomainConfig& domain_cfg, std::uint64_t seed,
                           int workers) {
  if (directions.empty()) throw ConfigError("directions must be nonempty");
  for (char c : directions)
    if (c != 'f' && c != 'b')
      throw ConfigError("directions may only contain 'f' and 'b'");

  PropagationState state;
  state.directions = directions;
  state.seed = seed;
  state.graph_hash = graph.structure_hash();
  state.case_name = graph.name;

  const auto topo = topological_order(graph);
  CheckContext ctx = make_context(graph, nlp_cfg);
  const bool lifted = graph.lifted();
  const Box zc_box = lifted ? *graph.coupling_box() : Box::empty();

  std::map<NodeId, Box> backward_boxes;

  for (std::size_t t = 0; t < directions.size(); ++t) {
    const char letter = directions[t];
    PassState pass;
    pass.letter = letter;
    pass.tag = directions.substr(0, t + 1);
    pass.nodes.assign(static_cast<std::size_t>(graph.node_count()), NodeState{});
    const std::vector<NodeState>* prev = t > 0 ? &state.passes[t - 1].nodes : nullptr;

    if (letter == 'b' && t == 0)
      backward_boxes = estimate_backward_domains(graph, domain_cfg.n_sobol,
                                                 domain_cfg.inflation, state.counter,
                                                 workers);

    std::vector<NodeId> order = topo;
    if (letter == 'b') std::reverse(order.begin(), order.end());

    for (NodeId i : order) {
      NodeState ns;
      ns.node = i;
      ns.direction_tag = pass.tag;

      const Slices sl = node_slices(graph, i);
      if (t == 0) {
        ns.input_box = (letter == 'f')
                           ? forward_input_domain(graph, i, pass.nodes, domain_cfg.inflation)
                           : backward_boxes.at(i);
        Box box = graph.node(i).param_box;
        if (ns.input_box.dim() > 0) box = box.concat(ns.input_box);
        if (lifted) box = box.concat(zc_box);
        ns.vu_box = std::move(box);
      } else {
        const NodeState& prev_ns = (*prev)[static_cast<std::size_t>(i)];
        const Mat feas = prev_ns.samples.feasible_points();
        if (feas.rows() == 0)
          throw EmptySubproblemSolution("node " + std::to_string(i) +
                                        " entered a pass with no feasible samples");
        Box hull = interval_hull(feas, domain_cfg.inflation);
        // v and coupling parts may not escape their a priori domains
        Box vpart(hull.lo.head(sl.dv), hull.hi.head(sl.dv));
        vpart = vpart.intersect(graph.node(i).param_box);
        hull.lo.head(sl.dv) = vpart.lo;
        hull.hi.head(sl.dv) = vpart.hi;
        if (lifted) {
          Box zpart(hull.lo.tail(sl.dz), hull.hi.tail(sl.dz));
          zpart = zpart.intersect(zc_box);
          hull.lo.tail(sl.dz) = zpart.lo;
          hull.hi.tail(sl.dz) = zpart.hi;
        }
        ns.vu_box = hull;
        ns.input_box =
            sl.du > 0 ? Box(hull.lo.segment(sl.dv, sl.du), hull.hi.segment(sl.dv, sl.du))
                      : Box::empty();
      }

      OutputCache cache;
      auto feasibility = [&](const Vec& x) -> CandidateResult {
        CandidateResult res;
        const Vec v = x.head(sl.dv);
        const Vec u = x.segment(sl.dv, sl.du);
        const Vec zc = sl.dz > 0 ? x.tail(sl.dz) : Vec();
        NodeEval ev = graph.eval_node(i, v, u, zc);
        res.constituent_evals = 1;
        const bool local_ok =
            ev.constraints.size() == 0 || ev.constraints.maxCoeff() <= 0;
        cache.put(x, std::move(ev));
        if (!local_ok) return res;

        if (letter == 'f' || (prev && letter == 'b')) {
          const std::vector<NodeState>& states =
              (letter == 'f') ? pass.nodes : *prev;
          for (int e : graph.in_edges(i)) {
            const Index off = graph.input_offset(i, e);
            const Vec target = u.segment(off, graph.edges()[e].dim);
            const Box& ibox = (letter == 'f')
                                  ? ns.input_box
                                  : states[static_cast<std::size_t>(i)].input_box;
            const Vec res_tol = residual_tolerance(ibox, off, graph.edges()[e].dim,
                                                   nlp_cfg.res_tol_frac);
            if (!upstream_coupling_ok(ctx, i, e, target, zc, states, res_tol,
                                      &res.nlp_solves, &res.constituent_evals))
              return res;
          }
        }
        if (letter == 'b' || (prev && letter == 'f')) {
          const std::vector<NodeState>& states =
              (letter == 'b') ? pass.nodes : *prev;
          const NodeEval* cached = cache.get(x);
          int kk = 0;
          for (int e : graph.out_edges(i)) {
            const Vec y = cached->outputs[static_cast<std::size_t>(kk++)];
            if (!downstream_coupling_ok(ctx, i, e, y, zc, states, &res.nlp_solves,
                                        &res.constituent_evals))
              return res;
          }
        }
        res.feasible = true;
        return res;
      };

      SamplerConfig cfg = sampler_cfg;
      cfg.seed = mix_seed(seed, "node", static_cast<std::uint64_t>(t) * 1024 +
                                            static_cast<std::uint64_t>(i));
      cfg.workers = workers;
      try {
        ns.samples = sample_feasible(feasibility, ns.vu_box, cfg, state.counter);
      } catch (const BudgetExhaustedEmpty& e) {
        throw EmptySubproblemSolution("node " + std::to_string(i) + " (pass " + pass.tag +
                                      "): " + e.what());
      }
      ns.samples.roles = subproblem_roles(graph, i);

      // collect the per-sample node outputs observed during sampling
      const Index out_dim = graph.output_dim(i);
      ns.cached_outputs.resize(ns.samples.size(), out_dim);
      for (Index r = 0; r < ns.samples.size(); ++r) {
        const Vec row = ns.samples.points.row(r).transpose();
        const NodeEval* ev = cache.get(row);
        NodeEval local;
        if (!ev) {  // cache miss cannot happen for sampler-returned rows
          const Vec v = row.head(sl.dv);
          const Vec u = row.segment(sl.dv, sl.du);
          const Vec zc = sl.dz > 0 ? row.tail(sl.dz) : Vec();
          local = graph.eval_node(i, v, u, zc);
          ev = &local;
        }
        Index off = 0;
        for (std::size_t k = 0; k < ev->outputs.size(); ++k) {
          ns.cached_outputs.row(r).segment(off, ev->outputs[k].size()) =
              ev->outputs[k].transpose();
          off += ev->outputs[k].size();
        }
      }

      train_node_surrogates(graph, ns, surrogate_cfg,
                            mix_seed(seed, "surrogate",
                                     static_cast<std::uint64_t>(t) * 1024 +
                                         static_cast<std::uint64_t>(i)));
      pass.nodes[static_cast<std::size_t>(i)] = std::move(ns);
    }
    state.passes.push_back(std::move(pass));
  }
  return state;
}

SampleSet reduced_coupling_domain(const PropagationState& state, const GraphSpec& graph) {
  if (!graph.lifted()) throw NotLiftedRun("reduced coupling domain needs a lifted run");
  const auto topo = topological_order(graph);
  const NodeId terminal = topo.back();
  const NodeState& ns = state.final_pass().nodes[static_cast<std::size_t>(terminal)];
  return project(ns.samples, [](const ColumnRole& r) {
    return r.kind == RoleKind::LiftZ || r.kind == RoleKind::LiftEps;
  });
}

// ---- persistence --------------------------------------------------------------------

void PropagationState::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json meta;
  meta["directions"] = directions;
  meta["seed"] = seed;
  meta["graph_hash"] = graph_hash;
  meta["config_hash"] = config_hash;
  meta["case"] = case_name;
  meta["counter"] = {{"constituent_evals", counter.constituent_evals},
                     {"constraint_evals", counter.constraint_evals},
                     {"nlp_solves", counter.nlp_solves}};
  json passes_j = json::array();
  for (const auto& p : passes) passes_j.push_back({{"letter", std::string(1, p.letter)},
                                                   {"tag", p.tag}});
  meta["passes"] = passes_j;
  std::ofstream(dir / "meta.json") << meta.dump(2);

  for (std::size_t t = 0; t < passes.size(); ++t) {
    for (const auto& ns : passes[t].nodes) {
      const std::string stem =
          "pass" + std::to_string(t) + "_node" + std::to_string(ns.node);
      write_csv(ns.samples, dir / (stem + "_samples.csv"));
      json j;
      j["node"] = ns.node;
      j["direction_tag"] = ns.direction_tag;
      j["vu_box"] = box_to_json(ns.vu_box);
      j["input_box"] = box_to_json(ns.input_box);
      j["n_evaluations"] = ns.samples.n_evaluations;
      j["has_classifier"] = ns.has_classifier;
      if (ns.has_classifier) {
        j["classifier"] = json::parse(svm_to_json(ns.classifier));
        j["classifier_cv"] = {{"fold_metrics", ns.classifier_cv.fold_metrics},
                              {"final_train_metric", ns.classifier_cv.final_train_metric}};
      }
      json regs = json::object();
      for (const auto& [edge, reg] : ns.regressors)
        regs[std::to_string(edge)] = json::parse(krr_to_json(reg));
      j["regressors"] = regs;
      json regcv = json::object();
      for (const auto& [edge, cv] : ns.regressor_cv)
        regcv[std::to_string(edge)] = {{"fold_metrics", cv.fold_metrics},
                                       {"final_train_metric", cv.final_train_metric}};
      j["regressor_cv"] = regcv;
      std::ofstream(dir / (stem + "_state.json")) << j.dump(2);
    }
  }
}

PropagationState PropagationState::load(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw IoError("missing propagation state at " + dir.string());
  json meta = json::parse(meta_in);

  PropagationState state;
  state.directions = meta.at("directions").get<std::string>();
  state.seed = meta.at("seed").get<std::uint64_t>();
  state.graph_hash = meta.at("graph_hash").get<std::uint64_t>();
  state.config_hash = meta.at("config_hash").get<std::uint64_t>();
  state.case_name = meta.value("case", "");
  state.counter.constituent_evals = meta.at("counter").at("constituent_evals").get<std::int64_t>();
  state.counter.constraint_evals = meta.at("counter").at("constraint_evals").get<std::int64_t>();
  state.counter.nlp_solves = meta.at("counter").at("nlp_solves").get<std::int64_t>();

  const auto passes_j = meta.at("passes");
  for (std::size_t t = 0; t < passes_j.size(); ++t) {
    PassState pass;
    pass.letter = passes_j[t].at("letter").get<std::string>()[0];
    pass.tag = passes_j[t].at("tag").get<std::string>();
    for (int i = 0;; ++i) {
      const std::string stem = "pass" + std::to_string(t) + "_node" + std::to_string(i);
      const auto state_path = dir / (stem + "_state.json");
      if (!std::filesystem::exists(state_path)) break;
      std::ifstream in(state_path);
      json j = json::parse(in);
      NodeState ns;
      ns.node = j.at("node").get<int>();
      ns.direction_tag = j.at("direction_tag").get<std::string>();
      ns.vu_box = box_from_json(j.at("vu_box"));
      ns.input_box = box_from_json(j.at("input_box"));
      ns.samples = read_csv(dir / (stem + "_samples.csv"));
      ns.samples.n_evaluations = j.at("n_evaluations").get<std::int64_t>();
      ns.has_classifier = j.at("has_classifier").get<bool>();
      if (ns.has_classifier) {
        ns.classifier = svm_from_json(j.at("classifier").dump());
        ns.classifier_cv.fold_metrics =
            j.at("classifier_cv").at("fold_metrics").get<std::vector<double>>();
        ns.classifier_cv.final_train_metric =
            j.at("classifier_cv").at("final_train_metric").get<double>();
      }
      for (const auto& [key, value] : j.at("regressors").items())
        ns.regressors[std::stoi(key)] = krr_from_json(value.dump());
      pass.nodes.push_back(std::move(ns));
    }
    state.passes.push_back(std::move(pass));
  }
  return state;
}

}  // namespace dagcsp
