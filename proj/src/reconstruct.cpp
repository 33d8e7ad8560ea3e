#include "dagcsp/reconstruct.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace dagcsp {

bool CompositeEval::feasible(double tol) const {
  for (const auto& g : constraints)
    if (g.size() > 0 && g.maxCoeff() > tol) return false;
  return true;
}

double CompositeEval::max_violation() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& g : constraints)
    if (g.size() > 0) worst = std::max(worst, g.maxCoeff());
  return worst;
}

CompositeEval evaluate_composite(const GraphSpec& graph, const Vec& v, const Vec& z) {
  if (v.size() != graph.joint_param_dim())
    throw DimensionMismatch("evaluate_composite: joint parameter dim mismatch");
  if (z.size() != graph.coupling_dim() && !(z.size() == 0 && graph.coupling_dim() == 0))
    throw DimensionMismatch("evaluate_composite: coupling dim mismatch");

  const int n = graph.node_count();
  CompositeEval out;
  out.inputs.resize(static_cast<std::size_t>(n));
  out.outputs.resize(static_cast<std::size_t>(n));
  out.constraints.resize(static_cast<std::size_t>(n));

  std::vector<Index> v_offset(static_cast<std::size_t>(n), 0);
  {
    Index at = 0;
    for (const auto& node : graph.nodes()) {
      v_offset[static_cast<std::size_t>(node.id)] = at;
      at += node.param_box.dim();
    }
  }

  std::vector<Vec> edge_payload(graph.edges().size());
  for (NodeId i : topological_order(graph)) {
    Vec u(graph.input_dim(i));
    Index at = 0;
    for (int e : graph.in_edges(i)) {
      u.segment(at, graph.edges()[e].dim) = edge_payload[static_cast<std::size_t>(e)];
      at += graph.edges()[e].dim;
    }
    const Vec vi =
        v.segment(v_offset[static_cast<std::size_t>(i)], graph.param_dim(i));
    NodeEval ev = graph.eval_node(i, vi, u, z);
    out.n_evaluations += 1;
    int k = 0;
    for (int e : graph.out_edges(i))
      edge_payload[static_cast<std::size_t>(e)] = ev.outputs[static_cast<std::size_t>(k++)];

    Vec y(graph.output_dim(i));
    at = 0;
    for (std::size_t q = 0; q < ev.outputs.size(); ++q) {
      y.segment(at, ev.outputs[q].size()) = ev.outputs[q];
      at += ev.outputs[q].size();
    }
    out.inputs[static_cast<std::size_t>(i)] = std::move(u);
    out.outputs[static_cast<std::size_t>(i)] = std::move(y);
    out.constraints[static_cast<std::size_t>(i)] = std::move(ev.constraints);
  }
  return out;
}

namespace {

std::vector<ColumnRole> joint_roles(const GraphSpec& graph) {
  std::vector<ColumnRole> roles;
  Index at = 0;
  for (const auto& n : graph.nodes()) {
    if (n.param_box.dim() == 0) continue;
    roles.push_back({RoleKind::Param, n.id, -1, at, n.param_box.dim()});
    at += n.param_box.dim();
  }
  if (graph.lifted() && graph.coupling_dim() > 0) {
    const Index nz = graph.coupling_dim() - graph.eps_dims();
    if (nz > 0) roles.push_back({RoleKind::LiftZ, -1, -1, at, nz});
    if (graph.eps_dims() > 0)
      roles.push_back({RoleKind::LiftEps, -1, -1, at + nz, graph.eps_dims()});
  }
  return roles;
}

}  // namespace

ReconstructionResult reconstruct(const GraphSpec& graph, const PropagationState& state,
                                 Index target_feasible, std::int64_t budget,
                                 std::uint64_t seed, int workers, bool adaptive) {
  if (graph.structure_hash() != state.graph_hash)
    throw GraphMismatch("propagation state belongs to a different graph");
  if (target_feasible < 1) throw Error("reconstruct needs target_feasible >= 1");

  const PassState& fin = state.final_pass();
  const int n = graph.node_count();

  // per-node feasible sample rows (v projections)
  std::vector<Mat> node_v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const NodeState& ns = fin.nodes[static_cast<std::size_t>(i)];
    if (graph.param_dim(i) == 0) continue;
    const Index feas = ns.samples.feasible_count();
    if (feas == 0)
      throw EmptySubproblemSolution("node " + std::to_string(i) +
                                    " has no feasible samples to reconstruct from");
    Mat rows(feas, graph.param_dim(i));
    Index at = 0;
    for (Index r = 0; r < ns.samples.size(); ++r)
      if (ns.samples.labels[r] == -1)
        rows.row(at++) = ns.samples.points.row(r).head(graph.param_dim(i));
    node_v[static_cast<std::size_t>(i)] = std::move(rows);
  }

  Mat reduced_z;
  const Index dz = graph.lifted() ? graph.coupling_dim() : 0;
  if (dz > 0) {
    const SampleSet reduced = reduced_coupling_domain(state, graph);
    const Index feas = reduced.feasible_count();
    if (feas == 0)
      throw EmptySubproblemSolution("reduced coupling domain has no feasible samples");
    reduced_z = reduced.feasible_points();
  }

  const Index dv = graph.joint_param_dim();
  auto draw_candidate = [&](std::int64_t t) -> Vec {
    SplitMix64 rng(mix_seed(seed, "reconstruct", static_cast<std::uint64_t>(t)));
    Vec x(dv + dz);
    Index at = 0;
    for (int i = 0; i < n; ++i) {
      if (graph.param_dim(i) == 0) continue;
      const Mat& rows = node_v[static_cast<std::size_t>(i)];
      x.segment(at, rows.cols()) =
          rows.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(rows.rows()))))
              .transpose();
      at += rows.cols();
    }
    if (dz > 0)
      x.tail(dz) = reduced_z
                       .row(static_cast<Index>(
                           rng.below(static_cast<std::uint64_t>(reduced_z.rows()))))
                       .transpose();
    return x;
  };

  ReconstructionResult out;
  out.counter = state.counter;  // decomposition cost carries into the ratio
  out.source = RunSource::Decomposition;
  out.directions = state.directions;
  out.graph_hash = state.graph_hash;
  out.seed = seed;

  std::vector<Vec> points;
  std::vector<int> labels;
  Index feas_found = 0;
  std::int64_t recon_evals = 0;

  if (!adaptive) {
    const std::int64_t block =
        std::max<std::int64_t>(64, 64 * std::max(1, workers));
    std::int64_t base = 0;
    while (feas_found < target_feasible && recon_evals < budget) {
      std::vector<Vec> cand(static_cast<std::size_t>(block));
      std::vector<char> ok(static_cast<std::size_t>(block));
      parallel_for(static_cast<std::size_t>(block), workers, [&](std::size_t j) {
        cand[j] = draw_candidate(base + static_cast<std::int64_t>(j));
        const Vec v = cand[j].head(dv);
        const Vec z = dz > 0 ? cand[j].tail(dz) : Vec();
        ok[j] = evaluate_composite(graph, v, z).feasible() ? 1 : 0;
      });
      for (std::int64_t j = 0; j < block; ++j) {
        recon_evals += n;
        out.counter.constituent_evals += n;
        out.counter.constraint_evals += 1;
        points.push_back(std::move(cand[static_cast<std::size_t>(j)]));
        labels.push_back(ok[static_cast<std::size_t>(j)] ? -1 : +1);
        if (ok[static_cast<std::size_t>(j)]) ++feas_found;
        if (feas_found >= target_feasible || recon_evals >= budget) break;
      }
      base += block;
    }
  } else {
    // multiplicative upweighting of node samples seen in joint-feasible draws
    std::vector<Vec> weights(static_cast<std::size_t>(n));
    Vec zw;
    for (int i = 0; i < n; ++i)
      if (graph.param_dim(i) > 0)
        weights[static_cast<std::size_t>(i)] =
            Vec::Ones(node_v[static_cast<std::size_t>(i)].rows());
    if (dz > 0) zw = Vec::Ones(reduced_z.rows());
    auto weighted_pick = [](SplitMix64& rng, const Vec& w) -> Index {
      const double u = rng.uniform() * w.sum();
      double acc = 0;
      for (Index q = 0; q < w.size(); ++q) {
        acc += w[q];
        if (u <= acc) return q;
      }
      return w.size() - 1;
    };
    std::int64_t t = 0;
    while (feas_found < target_feasible && recon_evals < budget) {
      SplitMix64 rng(mix_seed(seed, "reconstruct-adaptive", static_cast<std::uint64_t>(t++)));
      Vec x(dv + dz);
      std::vector<Index> picked(static_cast<std::size_t>(n), -1);
      Index at = 0;
      for (int i = 0; i < n; ++i) {
        if (graph.param_dim(i) == 0) continue;
        const Index q = weighted_pick(rng, weights[static_cast<std::size_t>(i)]);
        picked[static_cast<std::size_t>(i)] = q;
        x.segment(at, graph.param_dim(i)) =
            node_v[static_cast<std::size_t>(i)].row(q).transpose();
        at += graph.param_dim(i);
      }
      Index zq = -1;
      if (dz > 0) {
        zq = weighted_pick(rng, zw);
        x.tail(dz) = reduced_z.row(zq).transpose();
      }
      const bool ok =
          evaluate_composite(graph, x.head(dv), dz > 0 ? Vec(x.tail(dz)) : Vec())
              .feasible();
      recon_evals += n;
      out.counter.constituent_evals += n;
      out.counter.constraint_evals += 1;
      points.push_back(x);
      labels.push_back(ok ? -1 : +1);
      if (ok) {
        ++feas_found;
        for (int i = 0; i < n; ++i)
          if (picked[static_cast<std::size_t>(i)] >= 0) {
            double& w = weights[static_cast<std::size_t>(i)][picked[static_cast<std::size_t>(i)]];
            w = std::min(w * 1.25, 64.0);
          }
        if (zq >= 0) zw[zq] = std::min(zw[zq] * 1.25, 64.0);
      }
    }
  }
  if (feas_found == 0)
    throw BudgetExhaustedEmpty("reconstruction found no joint-feasible point in budget");

  out.joint_samples.points.resize(static_cast<Index>(points.size()), dv + dz);
  out.joint_samples.labels.resize(static_cast<Index>(points.size()));
  for (Index i = 0; i < out.joint_samples.size(); ++i) {
    out.joint_samples.points.row(i) = points[static_cast<std::size_t>(i)];
    out.joint_samples.labels[i] = labels[static_cast<std::size_t>(i)];
  }
  out.joint_samples.roles = joint_roles(graph);
  out.joint_samples.n_evaluations = out.counter.constituent_evals;
  out.feasible_count = feas_found;
  out.acceptance_ratio = acceptance_ratio(feas_found, out.counter);
  return out;
}

ReconstructionResult simultaneous(const GraphSpec& graph, const SamplerConfig& sampler_cfg) {
  const Index dv = graph.joint_param_dim();
  const Index dz = graph.coupling_dim();
  Box joint = graph.joint_param_box();
  if (dz > 0) joint = joint.concat(*graph.coupling_box());

  const int n = graph.node_count();
  auto feasibility = [&](const Vec& x) -> CandidateResult {
    const Vec v = x.head(dv);
    const Vec z = dz > 0 ? x.tail(dz) : Vec();
    CandidateResult r;
    r.constituent_evals = n;
    r.feasible = evaluate_composite(graph, v, z).feasible();
    return r;
  };

  ReconstructionResult out;
  out.source = RunSource::Simultaneous;
  out.graph_hash = graph.structure_hash();
  out.seed = sampler_cfg.seed;
  out.joint_samples = sample_feasible(feasibility, joint, sampler_cfg, out.counter);
  out.joint_samples.roles = joint_roles(graph);
  out.feasible_count = out.joint_samples.feasible_count();
  out.acceptance_ratio = acceptance_ratio(out.feasible_count, out.counter);
  return out;
}

CompareReport compare_runs(const ReconstructionResult& a, const ReconstructionResult& b) {
  if (a.graph_hash != b.graph_hash)
    throw GraphMismatch("compared runs were produced on different graphs");
  CompareReport r;
  r.ar_a = a.acceptance_ratio;
  r.ar_b = b.acceptance_ratio;
  r.evals_a = a.counter.constituent_evals;
  r.evals_b = b.counter.constituent_evals;
  r.feasible_a = a.feasible_count;
  r.feasible_b = b.feasible_count;
  r.source_a = a.source == RunSource::Decomposition ? "decomposition(" + a.directions + ")"
                                                    : "simultaneous";
  r.source_b = b.source == RunSource::Decomposition ? "decomposition(" + b.directions + ")"
                                                    : "simultaneous";
  if (b.acceptance_ratio > 0) {
    r.ar_ratio = a.acceptance_ratio / b.acceptance_ratio;
  } else {
    r.ratio_infinite = true;
    r.ar_ratio = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::string CompareReport::to_json() const {
  nlohmann::json j;
  j["ar_a"] = ar_a;
  j["ar_b"] = ar_b;
  if (ratio_infinite)
    j["ar_ratio"] = "inf";
  else
    j["ar_ratio"] = ar_ratio;
  j["evals_a"] = evals_a;
  j["evals_b"] = evals_b;
  j["feasible_a"] = feasible_a;
  j["feasible_b"] = feasible_b;
  j["source_a"] = source_a;
  j["source_b"] = source_b;
  return j.dump(2);
}

}  // namespace dagcsp
