#include "dagcsp/optim.hpp"

#include "dagcsp/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace dagcsp {

namespace {

constexpr int kMemory = 10;
constexpr double kArmijoC1 = 1e-4;
constexpr double kWolfeC2 = 0.9;

struct Pair {
  Vec s, y;
  double rho;
};

Vec two_loop(const std::deque<Pair>& mem, const Vec& g) {
  Vec q = g;
  std::vector<double> alpha(mem.size());
  for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
    alpha[static_cast<std::size_t>(i)] =
        mem[static_cast<std::size_t>(i)].rho * mem[static_cast<std::size_t>(i)].s.dot(q);
    q -= alpha[static_cast<std::size_t>(i)] * mem[static_cast<std::size_t>(i)].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
    q *= gamma;
  }
  for (std::size_t i = 0; i < mem.size(); ++i) {
    const double beta = mem[i].rho * mem[i].y.dot(q);
    q += (alpha[i] - beta) * mem[i].s;
  }
  return q;
}

}  // namespace

NlpResult box_minimize(const ObjFn& objective, const Box& box, const Vec& x0, double tol,
                       int max_iter, double stop_below) {
  const Index d = box.dim();
  if (x0.size() != d) throw DimensionMismatch("box_minimize: x0/box dim mismatch");

  Vec x = box.clamp(x0);
  Vec g(d);
  double f = objective(x, g);

  std::deque<Pair> mem;
  NlpResult res;
  res.iterations = 0;

  auto pg_norm = [&](const Vec& xx, const Vec& gg) {
    return (box.clamp(xx - gg) - xx).lpNorm<Eigen::Infinity>();
  };

  const Vec width = box.width();
  const double bound_eps = 1e-12;

  for (int it = 0; it < max_iter; ++it) {
    if (f <= stop_below) {
      res.converged = true;
      break;
    }
    if (pg_norm(x, g) <= tol) {
      res.converged = true;
      break;
    }
    res.iterations = it + 1;

    // freeze coordinates pinned at a bound with the gradient pushing outward
    Vec gr = g;
    for (Index i = 0; i < d; ++i) {
      const double span = std::max(width[i], 1.0);
      if ((x[i] <= box.lo[i] + bound_eps * span && g[i] > 0) ||
          (x[i] >= box.hi[i] - bound_eps * span && g[i] < 0))
        gr[i] = 0.0;
    }

    Vec dvec = -two_loop(mem, gr);
    for (Index i = 0; i < d; ++i)
      if (gr[i] == 0.0) dvec[i] = 0.0;
    double slope = dvec.dot(gr);
    if (!(slope < 0)) {  // not a descent direction; restart from steepest descent
      mem.clear();
      dvec = -gr;
      slope = dvec.dot(gr);
      if (!(slope < 0)) break;  // gradient vanishes on the free set
    }

    // line search on phi(a) = f(P(x + a d))
    auto phi = [&](double a, Vec& gout) {
      Vec xt = box.clamp(x + a * dvec);
      return objective(xt, gout);
    };

    double a = 1.0;
    double best_a = 0.0, best_f = f;
    Vec g_trial(d);
    bool accepted = false;
    double a_lo = 0.0, a_hi = std::numeric_limits<double>::infinity();
    for (int ls = 0; ls < 30; ++ls) {
      const double ft = phi(a, g_trial);
      if (ft < best_f) {
        best_f = ft;
        best_a = a;
      }
      if (ft > f + kArmijoC1 * a * slope) {
        a_hi = a;
        // quadratic interpolation, safeguarded
        const double denom = 2.0 * (ft - f - a * slope);
        double an = denom > 0 ? -slope * a * a / denom : 0.5 * a;
        a = std::clamp(an, 0.1 * a, 0.9 * a);
        continue;
      }
      const Vec xt = box.clamp(x + a * dvec);
      const bool interior_step = ((xt - x) - a * dvec).lpNorm<Eigen::Infinity>() <
                                 1e-14 * std::max(1.0, a * dvec.lpNorm<Eigen::Infinity>());
      const double dphi = interior_step ? g_trial.dot(dvec) : g_trial.dot((xt - x) / a);
      if (std::abs(dphi) <= kWolfeC2 * std::abs(slope) || !interior_step) {
        accepted = true;
        best_a = a;
        best_f = ft;
        break;
      }
      if (dphi < 0) {
        a_lo = a;
        a = std::isfinite(a_hi) ? 0.5 * (a_lo + a_hi) : 2.0 * a;
      } else {
        a_hi = a;
        a = 0.5 * (a_lo + a_hi);
      }
    }
    if (!accepted && best_a == 0.0) break;  // no progress possible along d

    const Vec x_new = box.clamp(x + best_a * dvec);
    Vec g_new(d);
    const double f_new = objective(x_new, g_new);

    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > kMemory) mem.pop_front();
    }
    x = x_new;
    g = g_new;
    f = f_new;
    if (s.lpNorm<Eigen::Infinity>() < 1e-16) break;
  }

  if (f <= stop_below || pg_norm(x, g) <= tol) res.converged = true;
  res.x_star = x;
  res.f_star = f;
  return res;
}

NlpResult multistart_minimize(const ObjFn& objective, const Box& box, int n_starts,
                              std::uint64_t seed, double tol, int max_iter,
                              double stop_below) {
  if (n_starts < 1) throw Error("multistart needs at least one start");
  // skip=1+seed: row 0 of the sequence is the box corner, row 1 the midpoint
  const Mat starts =
      scale_to_box(sobol(static_cast<int>(box.dim()), n_starts,
                         1 + static_cast<std::int64_t>(seed % (1u << 16))),
                   box);
  NlpResult best;
  bool have = false;
  for (int s = 0; s < n_starts; ++s) {
    NlpResult r = box_minimize(objective, box, starts.row(s).transpose(), tol, max_iter,
                               stop_below);
    if (!have || r.f_star < best.f_star) {
      best = r;
      have = true;
    }
    if (best.f_star <= stop_below) break;
  }
  return best;
}

ObjFn penalty_objective(ObjFn base, ResidualFn residuals, double weight) {
  if (weight <= 0) throw Error("penalty weight must be positive");
  return [base = std::move(base), residuals = std::move(residuals), weight](
             const Vec& x, Vec& grad) -> double {
    double f = base(x, grad);
    Vec r;
    Mat J;
    residuals(x, r, J);
    if (r.size() > 0) {
      f += weight * r.squaredNorm();
      grad += 2.0 * weight * (J.transpose() * r);
    }
    return f;
  };
}

}  // namespace dagcsp
