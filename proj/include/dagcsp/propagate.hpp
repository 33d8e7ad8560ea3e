#pragma once

#include "dagcsp/graph.hpp"
#include "dagcsp/optim.hpp"
#include "dagcsp/samplers.hpp"
#include "dagcsp/surrogates.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dagcsp {

struct SurrogateConfig {
  SvmGrid svm_grid;
  KrrGrid krr_grid;
  int k_folds = 2;
  double jitter_fraction = 0.01;  // data-augmentation jitter, fraction of range
  Index max_classifier_points = 2000;  // balanced-set cap before SMO
  Index max_regressor_points = 600;
  SmoParams smo;
};

enum class CouplingBMode { Auto, On, Off };

// Knobs for the embedded coupling NLPs.
struct NlpConfig {
  int n_starts = 6;
  int max_iter = 80;
  double tol = 1e-6;
  double penalty_weight = 1e3;
  double feas_tol = 1e-3;      // on classifier values; SVM margin scale is +-1
  double res_tol_frac = 1e-2;  // residual tolerance as a fraction of input-box width
  CouplingBMode coupling_b = CouplingBMode::Auto;
};

struct DomainConfig {
  int n_sobol = 8192;
  double inflation = 0.05;
};

// Per-node, per-pass record: sampling box, solved subproblem samples, trained
// classifier, and out-edge regressors.
struct NodeState {
  NodeId node = -1;
  std::string direction_tag;
  Box vu_box;     // sampling box over (v, u[, z-copy])
  Box input_box;  // payload-only input domain K_u^(d)
  SampleSet samples;
  Mat cached_outputs;  // node outputs per sample row (concatenated out-edge order)
  SvmClassifier classifier;
  bool has_classifier = false;
  CvReport classifier_cv;
  std::map<int, KrrRegressor> regressors;  // keyed by edge index
  std::map<int, CvReport> regressor_cv;

  // membership in the parameterised local feasible set: inside the sampling
  // box and classifier decision below tol
  bool region_contains(const Vec& vu, double tol) const;
};

struct PassState {
  char letter = 'f';
  std::string tag;  // cumulative direction string, e.g. "fb"
  std::vector<NodeState> nodes;
};

struct PropagationState {
  std::string directions;
  std::uint64_t seed = 0;
  std::vector<PassState> passes;
  EvalCounter counter;
  std::uint64_t graph_hash = 0;
  std::uint64_t config_hash = 0;
  std::string case_name;

  const PassState& final_pass() const;
  const NodeState& node_state(std::size_t pass, NodeId node) const;

  void save(const std::filesystem::path& dir) const;
  static PropagationState load(const std::filesystem::path& dir);
};

// Forward-evaluates the composite at n_sobol Sobol points of K_v (x K_z) and
// hulls the observed inputs of every node; root nodes get a 0-dim box.
std::map<NodeId, Box> estimate_backward_domains(const GraphSpec& graph, int n_sobol,
                                                double inflation, EvalCounter& counter,
                                                int workers = 1);

// Interval hull (inflated) of the images of upstream feasible samples under
// the true constituent maps, concatenated in in-edge order.
Box forward_input_domain(const GraphSpec& graph, NodeId node,
                         const std::vector<NodeState>& upstream_states, double inflation);

// Spec-surface feasibility tests. Both evaluate the node's true constraints
// first (one constituent evaluation) and short-circuit before any NLP solve.
bool feasibility_forward(const GraphSpec& graph, NodeId node, const Vec& v, const Vec& u,
                         const Vec& z_copy, const std::vector<NodeState>& pass_states,
                         const NlpConfig& nlp_cfg, EvalCounter& counter);

bool feasibility_backward(const GraphSpec& graph, NodeId node, const Vec& v, const Vec& u,
                          const Vec& z_copy, const std::vector<NodeState>& pass_states,
                          const NlpConfig& nlp_cfg, EvalCounter& counter);

PropagationState propagate(const GraphSpec& graph, const std::string& directions,
                           const SamplerConfig& sampler_cfg, const NlpConfig& nlp_cfg,
                           const SurrogateConfig& surrogate_cfg,
                           const DomainConfig& domain_cfg, std::uint64_t seed,
                           int workers = 1);

// Projection of the terminal node's samples (last in precedence order) onto
// the z(,eps) columns; the reduced domain used by lifted reconstruction.
SampleSet reduced_coupling_domain(const PropagationState& state, const GraphSpec& graph);

}  // namespace dagcsp
