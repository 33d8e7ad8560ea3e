#pragma once

#include "dagcsp/domains.hpp"

#include <cstdint>
#include <functional>
#include <utility>

namespace dagcsp {

enum class SamplerPolicy { SobolRejection, AdaptiveMixture };

struct SamplerConfig {
  int target_feasible = 1000;          // K
  std::int64_t max_evaluations = 200000;
  std::uint64_t seed = 0;
  SamplerPolicy policy = SamplerPolicy::SobolRejection;
  int mixture_components = 8;
  double refine_fraction = 0.5;
  int workers = 1;
};

struct EvalCounter {
  std::int64_t constituent_evals = 0;
  std::int64_t constraint_evals = 0;  // candidate feasibility checks
  std::int64_t nlp_solves = 0;

  EvalCounter& operator+=(const EvalCounter& o) {
    constituent_evals += o.constituent_evals;
    constraint_evals += o.constraint_evals;
    nlp_solves += o.nlp_solves;
    return *this;
  }
};

// Must be pure and re-entrant; candidate evaluation may fan out across threads.
struct CandidateResult {
  bool feasible = false;
  std::int64_t constituent_evals = 0;
  std::int64_t nlp_solves = 0;
};
using FeasibilityFn = std::function<CandidateResult(const Vec&)>;

// First n points (after `skip`) of the Sobol sequence with Joe-Kuo direction
// numbers, Gray-code order, x_0 = 0. Deterministic.
Mat sobol(int dim, int n, std::int64_t skip = 0);

int sobol_max_dim();

Mat scale_to_box(const Mat& unit_points, const Box& box);

struct SampleDiagnostics {
  std::int64_t phase1_evals = 0;
  std::int64_t phase2_evals = 0;
  Index phase1_feasible = 0;
  Index phase2_feasible = 0;
  bool mixture_used = false;
};

SampleSet rejection_sample(const FeasibilityFn& feasibility, const Box& box,
                           const SamplerConfig& config, EvalCounter& counter);

// Sobol screening over refine_fraction of the budget, then candidates drawn
// from a diagonal Gaussian mixture fitted to the feasible screen points.
// Falls back to pure rejection when the screen finds too few feasible points.
SampleSet adaptive_sample(const FeasibilityFn& feasibility, const Box& box,
                          const SamplerConfig& config, EvalCounter& counter,
                          SampleDiagnostics* diagnostics = nullptr);

SampleSet sample_feasible(const FeasibilityFn& feasibility, const Box& box,
                          const SamplerConfig& config, EvalCounter& counter,
                          SampleDiagnostics* diagnostics = nullptr);

double acceptance_ratio(std::int64_t n_accepted, const EvalCounter& counter);

// Diagonal-covariance Gaussian mixture used by the adaptive policy.
struct GaussianMixture {
  Mat means;      // k x d
  Mat variances;  // k x d
  Vec weights;    // k

  int components() const { return static_cast<int>(means.rows()); }
  Vec draw(SplitMix64& rng, const Box& box) const;
};

// k-means initialization, fixed 20 EM iterations.
GaussianMixture fit_gaussian_mixture(const Mat& points, int components, std::uint64_t seed);

}  // namespace dagcsp
