#include "dagcsp/samplers.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

namespace dagcsp {

namespace {

// Joe-Kuo (new-joe-kuo-6) primitive polynomials and initial direction numbers,
// dimensions 2..32. Dimension 1 is the van der Corput sequence.
struct JoeKuoRow {
  int s;
  std::uint32_t a;
  std::array<std::uint32_t, 7> m;
};

constexpr std::array<JoeKuoRow, 31> kJoeKuo = {{
    {1, 0, {1}},                       // dim 2
    {2, 1, {1, 3}},                    // dim 3
    {3, 1, {1, 3, 1}},                 // dim 4
    {3, 2, {1, 1, 1}},                 // dim 5
    {4, 1, {1, 1, 3, 3}},              // dim 6
    {4, 4, {1, 3, 5, 13}},             // dim 7
    {5, 2, {1, 1, 5, 5, 17}},          // dim 8
    {5, 4, {1, 1, 5, 5, 5}},           // dim 9
    {5, 7, {1, 1, 7, 11, 19}},         // dim 10
    {5, 11, {1, 1, 5, 1, 1}},          // dim 11
    {5, 13, {1, 1, 1, 3, 11}},         // dim 12
    {5, 14, {1, 3, 5, 5, 31}},         // dim 13
    {6, 1, {1, 3, 3, 9, 7, 49}},       // dim 14
    {6, 13, {1, 1, 1, 15, 21, 21}},    // dim 15
    {6, 16, {1, 3, 1, 13, 27, 49}},    // dim 16
    {6, 19, {1, 1, 1, 15, 7, 5}},      // dim 17
    {6, 22, {1, 3, 1, 15, 13, 25}},    // dim 18
    {6, 25, {1, 1, 5, 5, 19, 61}},     // dim 19
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},   // dim 20
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},    // dim 21
    {7, 7, {1, 1, 3, 13, 7, 35, 63}},     // dim 22
    {7, 8, {1, 3, 5, 9, 1, 25, 53}},      // dim 23
    {7, 14, {1, 3, 1, 13, 9, 35, 107}},   // dim 24
    {7, 19, {1, 3, 1, 5, 27, 61, 31}},    // dim 25
    {7, 21, {1, 1, 5, 11, 19, 41, 61}},   // dim 26
    {7, 28, {1, 3, 5, 3, 3, 13, 69}},     // dim 27
    {7, 31, {1, 1, 7, 13, 1, 19, 1}},     // dim 28
    {7, 32, {1, 3, 7, 5, 13, 19, 59}},    // dim 29
    {7, 37, {1, 1, 3, 9, 25, 29, 41}},    // dim 30
    {7, 41, {1, 3, 5, 13, 23, 1, 55}},    // dim 31
    {7, 42, {1, 3, 7, 3, 13, 59, 17}},    // dim 32
}};

constexpr int kMaxBit = 52;  // keeps every point exactly representable as double

// Direction integers V[k], k = 0..kMaxBit-1, pre-shifted into the top bits.
std::vector<std::uint64_t> direction_integers(int dim_index) {
  std::vector<std::uint64_t> v(kMaxBit);
  if (dim_index == 0) {
    for (int k = 0; k < kMaxBit; ++k) v[k] = 1ull << (kMaxBit - 1 - k);
    return v;
  }
  const JoeKuoRow& row = kJoeKuo[static_cast<std::size_t>(dim_index - 1)];
  const int s = row.s;
  for (int k = 0; k < std::min(s, kMaxBit); ++k)
    v[k] = static_cast<std::uint64_t>(row.m[static_cast<std::size_t>(k)])
           << (kMaxBit - 1 - k);
  for (int k = s; k < kMaxBit; ++k) {
    v[k] = v[k - s] ^ (v[k - s] >> s);
    for (int i = 1; i < s; ++i)
      if ((row.a >> (s - 1 - i)) & 1u) v[k] ^= v[k - i];
  }
  return v;
}

int rightmost_zero_bit(std::uint64_t n) {
  int c = 0;
  while (n & 1ull) {
    n >>= 1;
    ++c;
  }
  return c;
}

}  // namespace

int sobol_max_dim() { return static_cast<int>(kJoeKuo.size()) + 1; }

Mat sobol(int dim, int n, std::int64_t skip) {
  if (dim < 1 || n < 1) throw Error("sobol: dim and n must be positive");
  if (dim > sobol_max_dim())
    throw DimensionUnsupported("sobol: dimension " + std::to_string(dim) +
                               " exceeds the shipped direction-number table (" +
                               std::to_string(sobol_max_dim()) + ")");
  if (skip < 0) throw Error("sobol: negative skip");

  std::vector<std::vector<std::uint64_t>> v(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) v[static_cast<std::size_t>(d)] = direction_integers(d);

  // state at index `skip` from the Gray code of the index
  std::vector<std::uint64_t> x(static_cast<std::size_t>(dim), 0);
  const std::uint64_t g = static_cast<std::uint64_t>(skip) ^
                          (static_cast<std::uint64_t>(skip) >> 1);
  for (int b = 0; b < kMaxBit; ++b)
    if ((g >> b) & 1ull)
      for (int d = 0; d < dim; ++d) x[static_cast<std::size_t>(d)] ^= v[static_cast<std::size_t>(d)][b];

  constexpr double scale = 1.0 / static_cast<double>(1ull << kMaxBit);
  Mat out(n, dim);
  std::uint64_t index = static_cast<std::uint64_t>(skip);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d)
      out(i, d) = static_cast<double>(x[static_cast<std::size_t>(d)]) * scale;
    const int c = rightmost_zero_bit(index);
    if (c >= kMaxBit) throw Error("sobol: sequence exhausted");
    for (int d = 0; d < dim; ++d) x[static_cast<std::size_t>(d)] ^= v[static_cast<std::size_t>(d)][c];
    ++index;
  }
  return out;
}

Mat scale_to_box(const Mat& unit_points, const Box& box) {
  if (unit_points.cols() != box.dim())
    throw DimensionMismatch("scale_to_box: point/box dim mismatch");
  Mat out = unit_points;
  const Vec w = box.width();
  for (Index c = 0; c < out.cols(); ++c)
    out.col(c) = (out.col(c).array() * w[c] + box.lo[c]).matrix();
  return out;
}

namespace {

// Shared driver: evaluates candidates in index order (possibly in parallel),
// commits them serially so the result is identical to a sequential run.
// next_candidate(i) must be deterministic in i alone.
SampleSet run_sampler(const std::function<Vec(std::int64_t)>& next_candidate,
                      const FeasibilityFn& feasibility, const Box& box,
                      const SamplerConfig& config, std::int64_t eval_budget,
                      EvalCounter& counter, std::int64_t& evals_used, Index& n_feasible,
                      std::vector<Vec>& points, std::vector<int>& labels,
                      std::int64_t start_index = 0) {
  const int workers = std::max(1, config.workers);
  const std::int64_t block = std::max<std::int64_t>(64, 64 * workers);
  std::int64_t base = start_index;

  while (n_feasible < config.target_feasible && evals_used < eval_budget) {
    const std::int64_t m = block;
    std::vector<Vec> cand(static_cast<std::size_t>(m));
    std::vector<CandidateResult> res(static_cast<std::size_t>(m));
    parallel_for(static_cast<std::size_t>(m), workers, [&](std::size_t j) {
      cand[j] = next_candidate(base + static_cast<std::int64_t>(j));
      res[j] = feasibility(cand[j]);
    });
    for (std::int64_t j = 0; j < m; ++j) {
      const CandidateResult& r = res[static_cast<std::size_t>(j)];
      evals_used += r.constituent_evals;
      counter.constituent_evals += r.constituent_evals;
      counter.constraint_evals += 1;
      counter.nlp_solves += r.nlp_solves;
      points.push_back(std::move(cand[static_cast<std::size_t>(j)]));
      labels.push_back(r.feasible ? -1 : +1);
      if (r.feasible) ++n_feasible;
      if (n_feasible >= config.target_feasible || evals_used >= eval_budget) break;
    }
    base += m;
  }

  SampleSet out;
  out.points.resize(static_cast<Index>(points.size()), box.dim());
  out.labels.resize(static_cast<Index>(points.size()));
  for (Index i = 0; i < out.points.rows(); ++i) {
    out.points.row(i) = points[static_cast<std::size_t>(i)];
    out.labels[i] = labels[static_cast<std::size_t>(i)];
  }
  out.n_evaluations = std::max<std::int64_t>(evals_used, out.size());
  out.roles = {ColumnRole{RoleKind::Param, -1, -1, 0, box.dim()}};
  return out;
}

std::int64_t sobol_start(const SamplerConfig& config) {
  return static_cast<std::int64_t>(mix_seed(config.seed, "sobol-skip") % (1u << 20));
}

}  // namespace

SampleSet rejection_sample(const FeasibilityFn& feasibility, const Box& box,
                           const SamplerConfig& config, EvalCounter& counter) {
  if (config.target_feasible < 1) throw Error("target_feasible must be positive");
  if (config.max_evaluations < config.target_feasible)
    throw Error("max_evaluations below target_feasible");

  const std::int64_t skip = sobol_start(config);
  const int d = static_cast<int>(box.dim());
  auto next = [&, skip](std::int64_t i) -> Vec {
    Mat u = sobol(d, 1, skip + i);
    return scale_to_box(u, box).row(0).transpose();
  };

  std::vector<Vec> points;
  std::vector<int> labels;
  std::int64_t evals = 0;
  Index feas = 0;
  SampleSet out = run_sampler(next, feasibility, box, config, config.max_evaluations,
                              counter, evals, feas, points, labels);
  if (feas == 0)
    throw BudgetExhaustedEmpty("rejection sampling found no feasible point within budget");
  return out;
}

Vec GaussianMixture::draw(SplitMix64& rng, const Box& box) const {
  const Index d = means.cols();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double u = rng.uniform();
    int c = 0;
    double acc = 0;
    for (; c < components(); ++c) {
      acc += weights[c];
      if (u <= acc) break;
    }
    c = std::min(c, components() - 1);
    Vec x(d);
    for (Index j = 0; j < d; ++j)
      x[j] = means(c, j) + std::sqrt(variances(c, j)) * rng.normal();
    if (contains(box, x)) return x;
  }
  // heavily truncated component; fall back to uniform in the box
  Vec x(d);
  for (Index j = 0; j < d; ++j) x[j] = rng.uniform(box.lo[j], box.hi[j]);
  return x;
}

GaussianMixture fit_gaussian_mixture(const Mat& points, int components, std::uint64_t seed) {
  const Index n = points.rows(), d = points.cols();
  if (n == 0) throw EmptyPointSet("gaussian mixture fit on empty set");
  const int k = std::max(1, std::min<int>(components, static_cast<int>(n)));

  const Vec range = points.colwise().maxCoeff() - points.colwise().minCoeff();
  Vec var_floor(d);
  for (Index j = 0; j < d; ++j) {
    const double r = std::max(range[j], 1e-9);
    var_floor[j] = std::max(1e-12, (1e-3 * r) * (1e-3 * r));
  }

  // k-means++ seeding
  SplitMix64 rng(mix_seed(seed, "kmeans"));
  Mat centers(k, d);
  centers.row(0) = points.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vec d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0) {
      double u = rng.uniform() * total, acc = 0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 10; ++iter) {
    for (Index i = 0; i < n; ++i) {
      Index best;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Mat sums = Mat::Zero(k, d);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assign[static_cast<std::size_t>(i)]]++;
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
  }

  GaussianMixture gm;
  gm.means = centers;
  gm.variances = Mat::Zero(k, d);
  gm.weights = Vec::Zero(k);
  {
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Index i = 0; i < n; ++i) {
      const int c = assign[static_cast<std::size_t>(i)];
      counts[c]++;
      gm.variances.row(c) +=
          (points.row(i) - gm.means.row(c)).array().square().matrix();
    }
    for (int c = 0; c < k; ++c) {
      gm.weights[c] = std::max(1, counts[c]);
      if (counts[c] > 0) gm.variances.row(c) /= counts[c];
      gm.variances.row(c) = gm.variances.row(c).cwiseMax(var_floor.transpose());
    }
    gm.weights /= gm.weights.sum();
  }

  // EM, diagonal covariances, fixed iteration count
  Mat resp(n, k);
  for (int iter = 0; iter < 20; ++iter) {
    for (Index i = 0; i < n; ++i) {
      Vec logp(k);
      for (int c = 0; c < k; ++c) {
        double lp = std::log(std::max(gm.weights[c], 1e-300));
        for (Index j = 0; j < d; ++j) {
          const double diff = points(i, j) - gm.means(c, j);
          lp += -0.5 * std::log(2.0 * M_PI * gm.variances(c, j)) -
                0.5 * diff * diff / gm.variances(c, j);
        }
        logp[c] = lp;
      }
      const double mx = logp.maxCoeff();
      Vec w = (logp.array() - mx).exp();
      resp.row(i) = (w / w.sum()).transpose();
    }
    for (int c = 0; c < k; ++c) {
      const double nc = resp.col(c).sum();
      if (nc < 1e-12) continue;
      Vec mean = (resp.col(c).transpose() * points).transpose() / nc;
      Vec var = Vec::Zero(d);
      for (Index i = 0; i < n; ++i)
        var += resp(i, c) * (points.row(i).transpose() - mean).array().square().matrix();
      var /= nc;
      gm.means.row(c) = mean.transpose();
      gm.variances.row(c) = var.cwiseMax(var_floor).transpose();
      gm.weights[c] = nc / static_cast<double>(n);
    }
    gm.weights /= gm.weights.sum();
  }
  return gm;
}

SampleSet adaptive_sample(const FeasibilityFn& feasibility, const Box& box,
                          const SamplerConfig& config, EvalCounter& counter,
                          SampleDiagnostics* diagnostics) {
  if (config.target_feasible < 1) throw Error("target_feasible must be positive");
  if (config.refine_fraction <= 0 || config.refine_fraction > 1)
    throw Error("refine_fraction must lie in (0,1]");

  const std::int64_t skip = sobol_start(config);
  const int d = static_cast<int>(box.dim());
  auto sobol_candidate = [&, skip](std::int64_t i) -> Vec {
    Mat u = sobol(d, 1, skip + i);
    return scale_to_box(u, box).row(0).transpose();
  };

  std::vector<Vec> points;
  std::vector<int> labels;
  std::int64_t evals = 0;
  Index feas = 0;

  const std::int64_t phase1_budget = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(config.refine_fraction *
                                   static_cast<double>(config.max_evaluations)));
  run_sampler(sobol_candidate, feasibility, box, config, phase1_budget, counter, evals,
              feas, points, labels);
  if (diagnostics) {
    diagnostics->phase1_evals = evals;
    diagnostics->phase1_feasible = feas;
  }

  bool mixture_used = false;
  if (feas < config.target_feasible && evals < config.max_evaluations) {
    std::function<Vec(std::int64_t)> next = sobol_candidate;  // fallback: keep rejecting
    std::int64_t start_index = static_cast<std::int64_t>(points.size());
    if (feas >= config.mixture_components) {
      Mat feas_pts(feas, d);
      Index at = 0;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (labels[i] == -1) feas_pts.row(at++) = points[i];
      GaussianMixture gm =
          fit_gaussian_mixture(feas_pts, config.mixture_components, config.seed);
      mixture_used = true;
      start_index = 0;  // fresh stream, seeded independently of the screen
      next = [gm, box, seed = config.seed](std::int64_t i) -> Vec {
        SplitMix64 rng(mix_seed(seed, "adaptive-draw", static_cast<std::uint64_t>(i)));
        return gm.draw(rng, box);
      };
    }
    const std::int64_t before_evals = evals;
    const Index before_feas = feas;
    run_sampler(next, feasibility, box, config, config.max_evaluations, counter, evals,
                feas, points, labels, start_index);
    if (diagnostics) {
      diagnostics->phase2_evals = evals - before_evals;
      diagnostics->phase2_feasible = feas - before_feas;
      diagnostics->mixture_used = mixture_used;
    }
  }

  if (feas == 0)
    throw BudgetExhaustedEmpty("adaptive sampling found no feasible point within budget");

  SampleSet out;
  out.points.resize(static_cast<Index>(points.size()), box.dim());
  out.labels.resize(static_cast<Index>(points.size()));
  for (Index i = 0; i < out.points.rows(); ++i) {
    out.points.row(i) = points[static_cast<std::size_t>(i)];
    out.labels[i] = labels[static_cast<std::size_t>(i)];
  }
  out.n_evaluations = std::max<std::int64_t>(evals, out.size());
  out.roles = {ColumnRole{RoleKind::Param, -1, -1, 0, box.dim()}};
  return out;
}

SampleSet sample_feasible(const FeasibilityFn& feasibility, const Box& box,
                          const SamplerConfig& config, EvalCounter& counter,
                          SampleDiagnostics* diagnostics) {
  if (config.policy == SamplerPolicy::AdaptiveMixture)
    return adaptive_sample(feasibility, box, config, counter, diagnostics);
  SampleSet s = rejection_sample(feasibility, box, config, counter);
  if (diagnostics) {
    diagnostics->phase1_evals = s.n_evaluations;
    diagnostics->phase1_feasible = s.feasible_count();
  }
  return s;
}

double acceptance_ratio(std::int64_t n_accepted, const EvalCounter& counter) {
  if (counter.constituent_evals <= 0)
    throw DivisionByZero("acceptance ratio with zero constituent evaluations");
  return static_cast<double>(n_accepted) / static_cast<double>(counter.constituent_evals);
}

}  // namespace dagcsp
