#pragma once

#include "dagcsp/graph.hpp"
#include "dagcsp/optim.hpp"
#include "dagcsp/samplers.hpp"
#include "dagcsp/surrogates.hpp"

#include <functional>
#include <string>

namespace dagcsp {

// ---- serial batch reactor network -------------------------------------------------

// Arrhenius kinetics per reactor: 2A -> B -> C, rates k1 (second order in A)
// and k2 (first order in B). Slot [r][0] is the A->B step, [r][1] the B->C step.
// The shipped reactor-2 B->C pre-exponential is 3.0e-4: with the published
// 5.03 the B-purity target is unreachable anywhere in the search box.
struct ReactorParams {
  // pre-exponential factors (m^3 kmol^-1 min^-1) and activation energies
  // (kJ mol^-1) per reactor
  double k0[2][2] = {{1.66e-4, 0.50}, {9.66e-3, 3.0e-4}};
  double E[2][2] = {{1.50, 5.00}, {2.50, 5.00}};
  double gas_constant = 8.314e-3;  // kJ mol^-1 K^-1
  Vec c0 = (Vec(3) << 2.0, 0.0, 0.0).finished();
  double purity_C1 = 0.240;  // upper bound on C fraction after reactor 1
  double purity_B2 = 0.825;  // lower bound on B fraction after reactor 2
  int rk4_steps = 200;       // floor; scaled up when the linear rate is stiff
};

double arrhenius(double k0, double E, double T);

using OdeRhs = std::function<Vec(double t, const Vec& x)>;

// Classical fixed-step 4th-order Runge-Kutta; returns the trajectory endpoint.
Vec rk4_integrate(const OdeRhs& rhs, const Vec& x0, double t_end, int n_steps = 200);

// Concentration endpoint [cA, cB, cC] of reactor `j` (0 or 1) run for batch
// time tau at temperature T from initial state c_init.
Vec reactor_endpoint(const ReactorParams& params, int reactor, double tau, double T,
                     const Vec& c_init);

// ---- case studies -----------------------------------------------------------------

// 5-node affine DAG (two roots feeding a bottleneck that feeds two leaves)
// with frozen coefficient fixtures; every node's constraint is its output.
GraphSpec linear_example_graph();

// Two batch reactors in series with a C-removing separation between them.
GraphSpec reactor_graph(const ReactorParams& params = {});

// Target for the function-approximation study.
double nonconvex_target(const Vec& z);

// 6-node approximator DAG with (z, eps) coupling lifts: five basis-term nodes
// feeding a summation node that carries the pointwise-error constraint.
GraphSpec approximator_graph();

GraphSpec make_case(const std::string& name);

// ---- verification oracle ----------------------------------------------------------

// Labels n_points Sobol points of the joint domain by full composite
// evaluation; ground truth for projection and inclusion tests.
SampleSet brute_force_oracle(const GraphSpec& graph, int n_points, std::uint64_t seed);

// ---- semi-infinite program on a trained (v, z, eps) classifier --------------------

struct SipConfig {
  double viol_tol = 1e-3;
  int max_iterations = 25;
  int init_grid = 3;  // initial discretization: init_grid^n_z points
  int n_starts = 8;
  int max_iter = 150;
  double tol = 1e-7;
  double penalty_weight = 1e3;
  std::uint64_t seed = 0;
};

struct SipResult {
  Vec v_star;
  double eps_star = 0.0;
  Mat discretization_points;  // rows are z values
  int iterations = 0;
};

// Exchange algorithm: minimize eps over (v, eps) against the current z-set,
// then maximize the classifier over z and grow the set until no violation.
SipResult sip_solve(const SvmClassifier& classifier, const Box& K_v, const Box& K_z,
                    const Box& K_eps, const SipConfig& cfg = {});

}  // namespace dagcsp
