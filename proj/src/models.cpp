#include "dagcsp/models.hpp"

#include "dagcsp/reconstruct.hpp"

#include <algorithm>
#include <cmath>

namespace dagcsp {

double arrhenius(double k0, double E, double T) {
  if (T <= 0) throw NonpositiveTemperature("arrhenius needs T > 0");
  constexpr double R = 8.314e-3;  // kJ mol^-1 K^-1
  return k0 * std::exp(-E / (R * T));
}

Vec rk4_integrate(const OdeRhs& rhs, const Vec& x0, double t_end, int n_steps) {
  if (n_steps < 1) throw Error("rk4_integrate needs n_steps >= 1");
  const double h = t_end / n_steps;
  Vec x = x0;
  double t = 0.0;
  for (int s = 0; s < n_steps; ++s) {
    const Vec k1 = rhs(t, x);
    const Vec k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
    const Vec k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
    const Vec k4 = rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    if (!x.allFinite()) throw NonFiniteState("state became non-finite during integration");
  }
  return x;
}

Vec reactor_endpoint(const ReactorParams& params, int reactor, double tau, double T,
                     const Vec& c_init) {
  const double k1 = arrhenius(params.k0[reactor][0], params.E[reactor][0], T);
  const double k2 = arrhenius(params.k0[reactor][1], params.E[reactor][1], T);
  // the linear B->C rate can reach ~2 min^-1 at the temperature upper bound;
  // keep lambda*h <= 0.5 or the fixed-step scheme goes unstable at long tau
  const double stiff_rate = k2 + 4.0 * k1 * std::max(c_init[0], 0.0);
  const int n_steps =
      std::max(params.rk4_steps, static_cast<int>(std::ceil(2.0 * tau * stiff_rate)));
  const double h = tau / n_steps;
  Eigen::Vector3d c = c_init;
  auto rhs = [k1, k2](const Eigen::Vector3d& x) {
    const double r1 = k1 * x[0] * x[0];
    const double r2 = k2 * x[1];
    return Eigen::Vector3d(-2.0 * r1, r1 - r2, r2);
  };
  for (int s = 0; s < n_steps; ++s) {
    const Eigen::Vector3d a1 = rhs(c);
    const Eigen::Vector3d a2 = rhs(c + 0.5 * h * a1);
    const Eigen::Vector3d a3 = rhs(c + 0.5 * h * a2);
    const Eigen::Vector3d a4 = rhs(c + h * a3);
    c += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  }
  if (!c.allFinite()) throw NonFiniteState("reactor state became non-finite");
  return c;
}

namespace {

Box square_box(double lo, double hi, Index d) {
  return Box(Vec::Constant(d, lo), Vec::Constant(d, hi));
}

}  // namespace

GraphSpec linear_example_graph() {
  // frozen coefficient fixtures; oracle feasible fraction 0.0123 at 1e6 Sobol
  // points (seed 0). The negative input couplings keep the joint set small
  // enough that the decomposition comparison stays meaningful.
  const Eigen::RowVector2d A13(1.0, -1.0);
  const Eigen::RowVector2d A23(0.5, 0.5);
  const Eigen::RowVector2d A34(1.0, 0.5);
  const Eigen::RowVector2d A35(-0.5, 1.0);
  const Eigen::RowVector2d A4(1.0, 1.0);
  const Eigen::RowVector2d A5(1.0, -0.5);
  const Eigen::RowVector2d B34(-0.35, -0.35);
  const Eigen::RowVector2d B35(-0.35, -0.35);
  const double B4 = 1.0, B5 = 1.0;

  std::vector<NodeSpec> nodes(5);
  for (int i = 0; i < 5; ++i) {
    nodes[static_cast<std::size_t>(i)].id = i;
    nodes[static_cast<std::size_t>(i)].param_box = square_box(-1, 1, 2);
  }
  nodes[0].n_constraints = 1;
  nodes[0].model = [A13](const Vec& v, const Vec&, const Vec&) {
    NodeEval ev;
    const double y = A13.dot(v);
    ev.outputs = {Vec::Constant(1, y)};
    ev.constraints = Vec::Constant(1, y);
    return ev;
  };
  nodes[1].n_constraints = 1;
  nodes[1].model = [A23](const Vec& v, const Vec&, const Vec&) {
    NodeEval ev;
    const double y = A23.dot(v);
    ev.outputs = {Vec::Constant(1, y)};
    ev.constraints = Vec::Constant(1, y);
    return ev;
  };
  nodes[2].n_constraints = 2;
  nodes[2].model = [A34, A35, B34, B35](const Vec& v, const Vec& u, const Vec&) {
    NodeEval ev;
    const double y4 = A34.dot(v) + B34.dot(u);
    const double y5 = A35.dot(v) + B35.dot(u);
    ev.outputs = {Vec::Constant(1, y4), Vec::Constant(1, y5)};
    ev.constraints = (Vec(2) << y4, y5).finished();
    return ev;
  };
  nodes[3].n_constraints = 1;
  nodes[3].model = [A4, B4](const Vec& v, const Vec& u, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, A4.dot(v) + B4 * u[0]);
    return ev;
  };
  nodes[4].n_constraints = 1;
  nodes[4].model = [A5, B5](const Vec& v, const Vec& u, const Vec&) {
    NodeEval ev;
    ev.constraints = Vec::Constant(1, A5.dot(v) + B5 * u[0]);
    return ev;
  };

  std::vector<EdgeSpec> edges = {{0, 2, 1}, {1, 2, 1}, {2, 3, 1}, {2, 4, 1}};
  GraphSpec g = build_graph(std::move(nodes), std::move(edges));
  g.name = "linear5";
  return g;
}

GraphSpec reactor_graph(const ReactorParams& params) {
  std::vector<NodeSpec> nodes(2);
  Vec lo(2), hi(2);
  lo << 300, 300;
  hi << 900, 700;

  nodes[0].id = 0;
  nodes[0].param_box = Box(lo, hi);
  nodes[0].n_constraints = 1;
  nodes[0].model = [params](const Vec& v, const Vec&, const Vec&) {
    const Vec c = reactor_endpoint(params, 0, v[0], v[1], params.c0);
    NodeEval ev;
    // component C is removed completely by the separation step
    ev.outputs = {(Vec(2) << c[0], c[1]).finished()};
    ev.constraints = Vec::Constant(1, c[2] / (c[0] + c[1] + c[2]) - params.purity_C1);
    return ev;
  };

  nodes[1].id = 1;
  nodes[1].param_box = Box(lo, hi);
  nodes[1].n_constraints = 1;
  nodes[1].model = [params](const Vec& v, const Vec& u, const Vec&) {
    const Vec c0 = (Vec(3) << u[0], u[1], 0.0).finished();
    const Vec c = reactor_endpoint(params, 1, v[0], v[1], c0);
    NodeEval ev;
    ev.constraints = Vec::Constant(1, params.purity_B2 - c[1] / (c[0] + c[1] + c[2]));
    return ev;
  };

  GraphSpec g = build_graph(std::move(nodes), {{0, 1, 2}});
  g.name = "reactors";
  return g;
}

double nonconvex_target(const Vec& z) {
  double f = 0.0;
  for (Index m = 0; m < z.size(); ++m) f += z[m] * z[m] * z[m] - z[m] * z[m];
  for (Index m = 0; m < z.size(); ++m)
    for (Index n = m + 1; n < z.size(); ++n) f -= z[m] * z[n];
  return f;
}

GraphSpec approximator_graph() {
  std::vector<NodeSpec> nodes(6);
  for (int i = 0; i < 6; ++i) nodes[static_cast<std::size_t>(i)].id = i;

  auto term_node = [](NodeSpec& n, Box box,
                      std::function<double(const Vec&, const Vec&)> term) {
    n.param_box = std::move(box);
    n.n_constraints = 0;
    n.model = [term](const Vec& v, const Vec&, const Vec& zc) {
      NodeEval ev;
      // zc carries (z1, z2, eps); only z enters the basis terms
      ev.outputs = {Vec::Constant(1, term(v, zc.head(2)))};
      ev.constraints = Vec();
      return ev;
    };
  };

  // constant offset
  term_node(nodes[0], square_box(-1, 1, 1), [](const Vec& v, const Vec&) { return v[0]; });
  // -sum_m T_m log(z_m + 1)
  term_node(nodes[1], square_box(0, 1, 2), [](const Vec& v, const Vec& z) {
    return -(v[0] * std::log(z[0] + 1.0) + v[1] * std::log(z[1] + 1.0));
  });
  // sum_m z_m S_m log(z_m + 1)
  term_node(nodes[2], square_box(0, 1, 2), [](const Vec& v, const Vec& z) {
    return z[0] * v[0] * std::log(z[0] + 1.0) + z[1] * v[1] * std::log(z[1] + 1.0);
  });
  // p' z
  term_node(nodes[3], square_box(-1, 1, 2),
            [](const Vec& v, const Vec& z) { return v.dot(z); });
  // z' (L L') z with lower-triangular L = [[L11, 0], [L21, L22]]
  term_node(nodes[4], square_box(-1, 1, 3), [](const Vec& v, const Vec& z) {
    const double l11 = v[0], l21 = v[1], l22 = v[2];
    const double q11 = l11 * l11;
    const double q12 = l11 * l21;
    const double q22 = l21 * l21 + l22 * l22;
    return q11 * z[0] * z[0] + 2.0 * q12 * z[0] * z[1] + q22 * z[1] * z[1];
  });

  // summation node carrying the pointwise-error constraint
  nodes[5].param_box = Box::empty();
  nodes[5].n_constraints = 1;
  nodes[5].model = [](const Vec&, const Vec& u, const Vec& zc) {
    NodeEval ev;
    const double fbar = u.sum();
    const double eps = zc[2];
    ev.constraints =
        Vec::Constant(1, std::abs(fbar - nonconvex_target(zc.head(2))) - eps);
    return ev;
  };

  std::vector<EdgeSpec> edges;
  for (int i = 0; i < 5; ++i) edges.push_back({i, 5, 1});

  Vec zlo(3), zhi(3);
  zlo << -0.5, 0.0, 0.0;
  zhi << 1.0, 0.3, 0.25;
  GraphSpec g = build_graph(std::move(nodes), std::move(edges), Box(zlo, zhi), 1);
  g.name = "funcapprox";
  return lift_coupling(g);
}

GraphSpec make_case(const std::string& name) {
  if (name == "linear5") return linear_example_graph();
  if (name == "reactors") return reactor_graph();
  if (name == "funcapprox") return approximator_graph();
  throw ConfigError("unknown case '" + name + "' (expected linear5|reactors|funcapprox)");
}

SampleSet brute_force_oracle(const GraphSpec& graph, int n_points, std::uint64_t seed) {
  const Index dv = graph.joint_param_dim();
  const Index dz = graph.coupling_dim();
  const Index d = dv + dz;
  if (d > 14)
    throw DimensionGuard("oracle joint dimension " + std::to_string(d) + " exceeds 14");

  Box joint = graph.joint_param_box();
  if (dz > 0) joint = joint.concat(*graph.coupling_box());

  const std::int64_t skip =
      static_cast<std::int64_t>(mix_seed(seed, "oracle") % (1u << 20));
  const Mat pts = scale_to_box(sobol(static_cast<int>(d), n_points, skip), joint);

  SampleSet out;
  out.points = pts;
  out.labels.resize(n_points);
  parallel_for(static_cast<std::size_t>(n_points), default_workers(), [&](std::size_t i) {
    const Vec v = pts.row(static_cast<Index>(i)).head(dv).transpose();
    const Vec z = dz > 0 ? pts.row(static_cast<Index>(i)).tail(dz).transpose() : Vec();
    const CompositeEval ev = evaluate_composite(graph, v, z);
    out.labels[static_cast<Index>(i)] = ev.feasible() ? -1 : +1;
  });
  out.n_evaluations =
      static_cast<std::int64_t>(n_points) * static_cast<std::int64_t>(graph.node_count());

  Index at = 0;
  for (const auto& n : graph.nodes()) {
    if (n.param_box.dim() == 0) continue;
    out.roles.push_back({RoleKind::Param, n.id, -1, at, n.param_box.dim()});
    at += n.param_box.dim();
  }
  if (dz > 0) {
    const Index nz = dz - graph.eps_dims();
    if (nz > 0) out.roles.push_back({RoleKind::LiftZ, -1, -1, at, nz});
    if (graph.eps_dims() > 0)
      out.roles.push_back({RoleKind::LiftEps, -1, -1, at + nz, graph.eps_dims()});
  }
  return out;
}

SipResult sip_solve(const SvmClassifier& classifier, const Box& K_v, const Box& K_z,
                    const Box& K_eps, const SipConfig& cfg) {
  const Index nv = K_v.dim(), nz = K_z.dim();
  if (K_eps.dim() != 1) throw DimensionMismatch("sip_solve expects a scalar eps box");
  if (classifier.dim() != nv + nz + 1)
    throw DimensionMismatch("classifier dimension disagrees with (v, z, eps)");

  // initial discretization: uniform grid over K_z
  std::vector<Vec> zset;
  {
    const int g = std::max(2, cfg.init_grid);
    Index total = 1;
    for (Index j = 0; j < nz; ++j) total *= g;
    for (Index t = 0; t < total; ++t) {
      Vec z(nz);
      Index rem = t;
      for (Index j = 0; j < nz; ++j) {
        const Index q = rem % g;
        rem /= g;
        z[j] = K_z.lo[j] + (K_z.hi[j] - K_z.lo[j]) * static_cast<double>(q) / (g - 1);
      }
      zset.push_back(z);
    }
  }

  auto clf_input = [&](const Vec& v, const Vec& z, double eps) {
    Vec x(nv + nz + 1);
    x << v, z, eps;
    return x;
  };

  const Box master_box = K_v.concat(K_eps);
  SipResult res;
  Vec v_star = master_box.midpoint().head(nv);
  double eps_star = K_eps.hi[0];

  for (int it = 0; it < cfg.max_iterations; ++it) {
    res.iterations = it + 1;

    // master: min eps + w * sum max(0, G)^2 over the current z-set
    auto master = [&](const Vec& x, Vec& grad) {
      const Vec v = x.head(nv);
      const double eps = x[nv];
      grad = Vec::Zero(nv + 1);
      grad[nv] = 1.0;
      double f = eps;
      for (const Vec& z : zset) {
        const Vec in = clf_input(v, z, eps);
        const double g = svm_decision(classifier, in);
        if (g > 0) {
          f += cfg.penalty_weight * g * g;
          const Vec gg = svm_gradient(classifier, in);
          grad.head(nv) += 2.0 * cfg.penalty_weight * g * gg.head(nv);
          grad[nv] += 2.0 * cfg.penalty_weight * g * gg[nv + nz];
        }
      }
      return f;
    };
    const NlpResult m = multistart_minimize(master, master_box, cfg.n_starts, cfg.seed,
                                            cfg.tol, cfg.max_iter);
    v_star = m.x_star.head(nv);
    eps_star = m.x_star[nv];

    double master_viol = 0.0;
    for (const Vec& z : zset)
      master_viol =
          std::max(master_viol, svm_decision(classifier, clf_input(v_star, z, eps_star)));
    if (master_viol > 5e-2)
      throw NoFeasibleApproximator(
          "master problem infeasible near the eps upper bound (violation " +
          std::to_string(master_viol) + ")");

    // separation: max over z of the classifier value at (v*, eps*)
    auto separation = [&](const Vec& z, Vec& grad) {
      const Vec in = clf_input(v_star, z, eps_star);
      const Vec gg = svm_gradient(classifier, in);
      grad = -gg.segment(nv, nz);
      return -svm_decision(classifier, in);
    };
    const NlpResult s = multistart_minimize(separation, K_z, cfg.n_starts, cfg.seed,
                                            cfg.tol, cfg.max_iter);
    const double worst = -s.f_star;
    if (worst <= cfg.viol_tol) break;
    zset.push_back(s.x_star);
  }

  res.v_star = v_star;
  res.eps_star = eps_star;
  res.discretization_points.resize(static_cast<Index>(zset.size()), nz);
  for (Index i = 0; i < res.discretization_points.rows(); ++i)
    res.discretization_points.row(i) = zset[static_cast<std::size_t>(i)].transpose();
  return res;
}

}  // namespace dagcsp
