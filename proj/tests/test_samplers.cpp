#include <doctest.h>

#include "dagcsp/samplers.hpp"

#include <cmath>

using namespace dagcsp;

TEST_SUITE_BEGIN("samplers");

// Frozen from an independent Joe-Kuo reference generator (Gray-code order,
// x_0 = 0); the values are exact dyadics.
TEST_CASE("sobol matches the reference sequence") {
  const double expected2[8][2] = {
      {0, 0},         {0.5, 0.5},     {0.75, 0.25},  {0.25, 0.75},
      {0.375, 0.375}, {0.875, 0.875}, {0.625, 0.125}, {0.125, 0.625},
  };
  const Mat p2 = sobol(2, 8, 0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 2; ++j) CHECK(p2(i, j) == expected2[i][j]);

  const double expected10_row6[10] = {0.625, 0.125, 0.875, 0.625, 0.625,
                                      0.875, 0.125, 0.125, 0.125, 0.375};
  const Mat p10 = sobol(10, 8, 0);
  for (int j = 0; j < 10; ++j) CHECK(p10(6, j) == expected10_row6[j]);

  const double expected13_row7[13] = {0.125, 0.625, 0.375, 0.125, 0.125, 0.375, 0.625,
                                      0.625, 0.625, 0.875, 0.625, 0.125, 0.625};
  const Mat p13 = sobol(13, 8, 0);
  for (int j = 0; j < 13; ++j) CHECK(p13(7, j) == expected13_row7[j]);
}

TEST_CASE("sobol deep skip matches the reference sequence") {
  const double expected[3][3] = {
      {0.2197265625, 0.0966796875, 0.5185546875},
      {0.7197265625, 0.5966796875, 0.0185546875},
      {0.9697265625, 0.3466796875, 0.7685546875},
  };
  const Mat p = sobol(3, 3, 1000);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(p(i, j) == expected[i][j]);
}

TEST_CASE("sobol basic contracts") {
  const Mat p = sobol(1, 1, 0);
  CHECK(p(0, 0) >= 0.0);
  CHECK(p(0, 0) < 1.0);
  CHECK(sobol(4, 16, 3) == sobol(4, 16, 3));
  CHECK_THROWS_AS(sobol(sobol_max_dim() + 1, 1, 0), DimensionUnsupported);
}

TEST_CASE("sobol beats pseudo-random star discrepancy at n=1024, d=2") {
  // box-counting estimate: max deviation between empirical and uniform measure
  // over a family of anchored boxes
  auto discrepancy = [](const Mat& pts) {
    double worst = 0;
    const int grid = 16;
    for (int a = 1; a <= grid; ++a)
      for (int b = 1; b <= grid; ++b) {
        const double x = static_cast<double>(a) / grid, y = static_cast<double>(b) / grid;
        Index cnt = 0;
        for (Index i = 0; i < pts.rows(); ++i)
          if (pts(i, 0) < x && pts(i, 1) < y) ++cnt;
        worst = std::max(worst, std::abs(static_cast<double>(cnt) / static_cast<double>(pts.rows()) - x * y));
      }
    return worst;
  };
  const double ds = discrepancy(sobol(2, 1024, 0));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitMix64 rng(seed);
    Mat r(1024, 2);
    for (Index i = 0; i < 1024; ++i) {
      r(i, 0) = rng.uniform();
      r(i, 1) = rng.uniform();
    }
    CHECK(ds < discrepancy(r));
  }
}

TEST_CASE("scale_to_box") {
  Mat u(2, 2);
  u << 0.5, 0.5, 0.0, 1.0;
  Vec lo(2), hi(2);
  lo << -1, -1;
  hi << 1, 1;
  Mat p = scale_to_box(u, Box(lo, hi));
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 0.0);

  lo << 2, -1;
  hi << 4, 0;
  p = scale_to_box(u, Box(lo, hi));
  CHECK(p(1, 0) == 2.0);
  CHECK(p(1, 1) == 0.0);

  const Mat unit = scale_to_box(u, Box::unit(2));
  CHECK(unit == u);

  CHECK_THROWS_AS(scale_to_box(u, Box::unit(3)), DimensionMismatch);
}

TEST_CASE("rejection sampling always-feasible") {
  SamplerConfig cfg;
  cfg.target_feasible = 100;
  cfg.max_evaluations = 1000;
  EvalCounter counter;
  auto feas = [](const Vec&) { return CandidateResult{true, 1}; };
  const SampleSet s = rejection_sample(feas, Box::unit(2), cfg, counter);
  CHECK(s.feasible_count() == 100);
  CHECK(s.size() == 100);
  CHECK(counter.constituent_evals == 100);
}

TEST_CASE("rejection sampling half-space acceptance is binomial") {
  SamplerConfig cfg;
  cfg.target_feasible = 50;
  cfg.max_evaluations = 10000;
  EvalCounter counter;
  auto feas = [](const Vec& x) { return CandidateResult{x[0] >= 0.0, 1}; };
  const Box box(Vec::Constant(1, -1), Vec::Constant(1, 1));
  const SampleSet s = rejection_sample(feas, box, cfg, counter);
  CHECK(s.feasible_count() == 50);
  // expected ~100 candidate evaluations at acceptance 0.5; allow 3 sigma
  const double expect = 100, sigma = std::sqrt(100 * 0.5 * 0.5) * 2;
  CHECK(static_cast<double>(s.size()) > expect - 3 * sigma);
  CHECK(static_cast<double>(s.size()) < expect + 3 * sigma);
}

TEST_CASE("rejection sampling exhausted budget throws") {
  SamplerConfig cfg;
  cfg.target_feasible = 10;
  cfg.max_evaluations = 100;
  EvalCounter counter;
  auto feas = [](const Vec&) { return CandidateResult{false, 1}; };
  CHECK_THROWS_AS(rejection_sample(feas, Box::unit(2), cfg, counter), BudgetExhaustedEmpty);
}

TEST_CASE("sampled points lie in the box and feasible labels re-check") {
  SamplerConfig cfg;
  cfg.target_feasible = 60;
  cfg.max_evaluations = 40000;
  cfg.policy = SamplerPolicy::AdaptiveMixture;
  cfg.seed = 3;
  EvalCounter counter;
  auto inside_disc = [](const Vec& x) {
    return CandidateResult{x.squaredNorm() <= 0.09, 1};
  };
  const Box box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  const SampleSet s = adaptive_sample(inside_disc, box, cfg, counter);
  for (Index i = 0; i < s.size(); ++i) {
    const Vec p = s.points.row(i).transpose();
    CHECK(contains(box, p));
    if (s.labels[i] == -1) CHECK(inside_disc(p).feasible);
  }
}

TEST_CASE("adaptive sampling refines acceptance on a small disc") {
  const Box box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  auto inside_disc = [](const Vec& x) {
    return CandidateResult{x.squaredNorm() <= 0.09, 1};
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SamplerConfig cfg;
    cfg.target_feasible = 1000;  // more than the screen phase can deliver
    cfg.max_evaluations = 20000;
    cfg.refine_fraction = 0.25;
    cfg.policy = SamplerPolicy::AdaptiveMixture;
    cfg.seed = seed;
    EvalCounter counter;
    SampleDiagnostics diag;
    adaptive_sample(inside_disc, box, cfg, counter, &diag);
    REQUIRE(diag.mixture_used);
    REQUIRE(diag.phase2_evals > 0);
    const double rate1 = static_cast<double>(diag.phase1_feasible) / static_cast<double>(diag.phase1_evals);
    const double rate2 = static_cast<double>(diag.phase2_feasible) / static_cast<double>(diag.phase2_evals);
    CHECK(rate2 > rate1);
  }
}

TEST_CASE("adaptive sampling equals rejection when everything is feasible") {
  SamplerConfig cfg;
  cfg.target_feasible = 64;
  cfg.max_evaluations = 1000;
  cfg.policy = SamplerPolicy::AdaptiveMixture;
  EvalCounter c1, c2;
  auto feas = [](const Vec&) { return CandidateResult{true, 1}; };
  const SampleSet a = adaptive_sample(feas, Box::unit(2), cfg, c1);
  const SampleSet r = rejection_sample(feas, Box::unit(2), cfg, c2);
  CHECK(a.points == r.points);
}

TEST_CASE("adaptive sampling is reproducible for a fixed seed") {
  SamplerConfig cfg;
  cfg.target_feasible = 80;
  cfg.max_evaluations = 30000;
  cfg.policy = SamplerPolicy::AdaptiveMixture;
  cfg.seed = 11;
  auto inside_disc = [](const Vec& x) {
    return CandidateResult{x.squaredNorm() <= 0.09, 1};
  };
  const Box box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  EvalCounter c1, c2;
  const SampleSet a = adaptive_sample(inside_disc, box, cfg, c1);
  const SampleSet b = adaptive_sample(inside_disc, box, cfg, c2);
  CHECK(a.points == b.points);
  CHECK(a.labels == b.labels);
  CHECK(c1.constituent_evals == c2.constituent_evals);
}

TEST_CASE("parallel evaluation does not change results") {
  SamplerConfig cfg;
  cfg.target_feasible = 70;
  cfg.max_evaluations = 30000;
  cfg.policy = SamplerPolicy::AdaptiveMixture;
  cfg.seed = 5;
  auto inside_disc = [](const Vec& x) {
    return CandidateResult{x.squaredNorm() <= 0.25, 1};
  };
  const Box box(Vec::Constant(2, -1), Vec::Constant(2, 1));
  EvalCounter c1, c2;
  cfg.workers = 1;
  const SampleSet a = adaptive_sample(inside_disc, box, cfg, c1);
  cfg.workers = 4;
  const SampleSet b = adaptive_sample(inside_disc, box, cfg, c2);
  CHECK(a.points == b.points);
  CHECK(c1.constituent_evals == c2.constituent_evals);
}

TEST_CASE("acceptance ratio") {
  EvalCounter c;
  c.constituent_evals = 1000;
  CHECK(acceptance_ratio(7, c) == doctest::Approx(0.007));
  CHECK(acceptance_ratio(0, c) == 0.0);
  EvalCounter zero;
  CHECK_THROWS_AS(acceptance_ratio(1, zero), DivisionByZero);
}

TEST_SUITE_END();
