#include <doctest.h>

#include "dagcsp/models.hpp"
#include "dagcsp/propagate.hpp"
#include "dagcsp/reconstruct.hpp"

using namespace dagcsp;

namespace {

GraphSpec mini_chain() {
  std::vector<NodeSpec> nodes(2);
  nodes[0].id = 0;
  nodes[0].param_box = Box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  nodes[0].n_constraints = 1;
  nodes[0].model = [](const Vec& v, const Vec&, const Vec&) {
    NodeEval ev;
    const double y = v[0] + v[1];
    ev.outputs = {Vec::Constant(1, y)};
    ev.constraints = Vec::Constant(1, y);
    return ev;
  };
  nodes[1].id = 1;
  nodes[1].param_box = Box(Vec::Constant(1, -1), Vec::Constant(1, 1));
  nodes[1].n_constraints = 1;
  nodes[1].model = [](const Vec& v, const Vec& u, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, v[0] + u[0]);
    return ev;
  };
  GraphSpec g = build_graph(std::move(nodes), {{0, 1, 1}});
  g.name = "mini_chain";
  return g;
}

GraphSpec trivial_graph() {
  std::vector<NodeSpec> nodes(2);
  for (int i = 0; i < 2; ++i) {
    nodes[static_cast<std::size_t>(i)].id = i;
    nodes[static_cast<std::size_t>(i)].param_box = Box(Vec::Constant(1, -1), Vec::Constant(1, 1));
    nodes[static_cast<std::size_t>(i)].n_constraints = 1;
  }
  nodes[0].model = [](const Vec&, const Vec&, const Vec&) {
    NodeEval ev;
    ev.outputs = {Vec::Constant(1, 0.0)};
    ev.constraints = Vec::Constant(1, -1.0);
    return ev;
  };
  nodes[1].model = [](const Vec&, const Vec&, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, -1.0);
    return ev;
  };
  GraphSpec g = build_graph(std::move(nodes), {{0, 1, 1}});
  g.name = "trivial";
  return g;
}

SamplerConfig small_sampler(int target) {
  SamplerConfig cfg;
  cfg.target_feasible = target;
  cfg.max_evaluations = 200 * target;
  return cfg;
}

NlpConfig fast_nlp() {
  NlpConfig cfg;
  cfg.n_starts = 3;
  cfg.max_iter = 40;
  return cfg;
}

SurrogateConfig small_surrogates() {
  SurrogateConfig cfg;
  cfg.max_classifier_points = 400;
  cfg.max_regressor_points = 200;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("reconstruct");

TEST_CASE("evaluate_composite wires outputs to inputs") {
  const GraphSpec g = linear_example_graph();
  SplitMix64 rng(4);
  Vec v(10);
  for (int i = 0; i < 10; ++i) v[i] = rng.uniform(-1, 1);
  const CompositeEval ev = evaluate_composite(g, v);
  // node 2 receives exactly the two upstream scalars
  const double y0 = v[0] - v[1];
  const double y1 = 0.5 * v[2] + 0.5 * v[3];
  CHECK(ev.inputs[2][0] == doctest::Approx(y0).epsilon(1e-12));
  CHECK(ev.inputs[2][1] == doctest::Approx(y1).epsilon(1e-12));
  CHECK(ev.n_evaluations == 5);

  // graph without edges: evaluations are independent of ordering
  GraphSpec iso;
  {
    std::vector<NodeSpec> nodes(2);
    for (int i = 0; i < 2; ++i) {
      nodes[static_cast<std::size_t>(i)].id = i;
      nodes[static_cast<std::size_t>(i)].param_box = Box(Vec::Constant(1, 0), Vec::Constant(1, 1));
      nodes[static_cast<std::size_t>(i)].n_constraints = 1;
      nodes[static_cast<std::size_t>(i)].model = [i](const Vec& vv, const Vec&, const Vec&) {
        NodeEval e;
        e.constraints = Vec::Constant(1, vv[0] - i);
        return e;
      };
    }
    iso = build_graph(std::move(nodes), {});
  }
  const CompositeEval ev2 = evaluate_composite(iso, (Vec(2) << 0.25, 0.75).finished());
  CHECK(ev2.constraints[0][0] == doctest::Approx(0.25));
  CHECK(ev2.constraints[1][0] == doctest::Approx(-0.25));
}

TEST_CASE("reconstruction from a propagated state") {
  const GraphSpec g = mini_chain();
  const PropagationState state = propagate(g, "f", small_sampler(250), fast_nlp(),
                                           small_surrogates(), DomainConfig{}, 21, 2);
  const ReconstructionResult r = reconstruct(g, state, 150, 200000, 17, 2);
  CHECK(r.feasible_count == 150);
  CHECK(r.source == RunSource::Decomposition);
  CHECK(r.directions == "f");

  // soundness: every feasible-labeled joint sample re-satisfies all constraints
  for (Index i = 0; i < r.joint_samples.size(); ++i) {
    if (r.joint_samples.labels[i] != -1) continue;
    const CompositeEval ev =
        evaluate_composite(g, r.joint_samples.points.row(i).transpose());
    CHECK(ev.feasible());
  }

  // the ratio denominator carries the propagation cost
  CHECK(r.counter.constituent_evals > state.counter.constituent_evals);
  CHECK(r.acceptance_ratio ==
        doctest::Approx(150.0 / static_cast<double>(r.counter.constituent_evals)));
}

TEST_CASE("reconstruction adaptive flag stays sound") {
  const GraphSpec g = mini_chain();
  const PropagationState state = propagate(g, "f", small_sampler(200), fast_nlp(),
                                           small_surrogates(), DomainConfig{}, 23, 2);
  const ReconstructionResult r = reconstruct(g, state, 120, 200000, 3, 1, true);
  CHECK(r.feasible_count == 120);
  for (Index i = 0; i < r.joint_samples.size(); ++i) {
    if (r.joint_samples.labels[i] != -1) continue;
    CHECK(evaluate_composite(g, r.joint_samples.points.row(i).transpose()).feasible());
  }
}

TEST_CASE("always-feasible constraints accept every draw") {
  const GraphSpec g = trivial_graph();
  const PropagationState state = propagate(g, "f", small_sampler(80), fast_nlp(),
                                           small_surrogates(), DomainConfig{}, 1, 1);
  const ReconstructionResult r = reconstruct(g, state, 60, 100000, 2, 1);
  // every draw from the product set is jointly feasible
  CHECK(r.joint_samples.size() == 60);
  CHECK((r.joint_samples.labels.array() == -1).all());
}

TEST_CASE("a single sample per node makes every draw identical") {
  const GraphSpec g = mini_chain();
  PropagationState state;
  state.directions = "f";
  state.graph_hash = g.structure_hash();
  PassState pass;
  pass.letter = 'f';
  pass.tag = "f";
  pass.nodes.resize(2);
  // node 0: one feasible point (-0.5, -0.25), output -0.75
  pass.nodes[0].node = 0;
  pass.nodes[0].samples.points = (Mat(1, 2) << -0.5, -0.25).finished();
  pass.nodes[0].samples.labels = Eigen::VectorXi::Constant(1, -1);
  pass.nodes[0].samples.n_evaluations = 1;
  pass.nodes[0].samples.roles = {{RoleKind::Param, 0, -1, 0, 2}};
  // node 1: one feasible point v=0.25 with u=-0.75
  pass.nodes[1].node = 1;
  pass.nodes[1].samples.points = (Mat(1, 2) << 0.25, -0.75).finished();
  pass.nodes[1].samples.labels = Eigen::VectorXi::Constant(1, -1);
  pass.nodes[1].samples.n_evaluations = 1;
  pass.nodes[1].samples.roles = {{RoleKind::Param, 1, -1, 0, 1},
                                 {RoleKind::Input, 1, 0, 1, 1}};
  state.passes.push_back(std::move(pass));
  state.counter.constituent_evals = 2;

  const ReconstructionResult r = reconstruct(g, state, 5, 1000, 9, 1);
  for (Index i = 0; i < r.joint_samples.size(); ++i) {
    CHECK(r.joint_samples.points(i, 0) == -0.5);
    CHECK(r.joint_samples.points(i, 1) == -0.25);
    CHECK(r.joint_samples.points(i, 2) == 0.25);
    CHECK(r.joint_samples.labels[i] == -1);  // (-0.75) + 0.25 <= 0
  }
}

TEST_CASE("simultaneous on a single-node graph equals rejection sampling") {
  NodeSpec n;
  n.id = 0;
  n.param_box = Box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  n.n_constraints = 1;
  n.model = [](const Vec& v, const Vec&, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, v.squaredNorm() - 0.4);
    return ev;
  };
  GraphSpec g = build_graph({n}, {});
  g.name = "disc";

  SamplerConfig cfg = small_sampler(90);
  cfg.seed = 31;
  const ReconstructionResult sim = simultaneous(g, cfg);

  EvalCounter counter;
  const SampleSet direct = rejection_sample(
      [&](const Vec& v) {
        CandidateResult r;
        r.constituent_evals = 1;
        r.feasible = v.squaredNorm() <= 0.4;
        return r;
      },
      g.node(0).param_box, cfg, counter);
  CHECK(sim.joint_samples.points == direct.points);
  CHECK(sim.joint_samples.labels == direct.labels);
  CHECK(sim.counter.constituent_evals == counter.constituent_evals);
}

TEST_CASE("infeasible constraints exhaust the baseline budget") {
  NodeSpec n;
  n.id = 0;
  n.param_box = Box(Vec::Constant(1, -1), Vec::Constant(1, 1));
  n.n_constraints = 1;
  n.model = [](const Vec&, const Vec&, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, 1.0);
    return ev;
  };
  GraphSpec g = build_graph({n}, {});
  SamplerConfig cfg = small_sampler(10);
  cfg.max_evaluations = 64;
  CHECK_THROWS_AS(simultaneous(g, cfg), BudgetExhaustedEmpty);
}

TEST_CASE("compare_runs") {
  const GraphSpec g = mini_chain();
  const PropagationState state = propagate(g, "f", small_sampler(150), fast_nlp(),
                                           small_surrogates(), DomainConfig{}, 2, 2);
  const ReconstructionResult dec = reconstruct(g, state, 100, 100000, 5, 2);

  const CompareReport self = compare_runs(dec, dec);
  CHECK(self.ar_ratio == doctest::Approx(1.0));
  CHECK(self.to_json().find("ar_ratio") != std::string::npos);

  ReconstructionResult zero = dec;
  zero.acceptance_ratio = 0.0;
  const CompareReport inf_report = compare_runs(dec, zero);
  CHECK(inf_report.ratio_infinite);
  CHECK(inf_report.to_json().find("\"inf\"") != std::string::npos);

  ReconstructionResult other = dec;
  other.graph_hash = 999;
  CHECK_THROWS_AS(compare_runs(dec, other), GraphMismatch);
}

TEST_SUITE_END();
