#include "dagcsp/surrogates.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dagcsp {

namespace {

Vec standardize(const Box& box, const Vec& x) {
  return ((x - box.lo).array() / box.width().array()).matrix();
}

Mat standardize_rows(const Box& box, const Mat& X) {
  Mat out(X.rows(), X.cols());
  const Vec w = box.width();
  for (Index c = 0; c < X.cols(); ++c)
    out.col(c) = ((X.col(c).array() - box.lo[c]) / w[c]).matrix();
  return out;
}

Mat rbf_kernel(const Mat& A, const Mat& B, double gamma) {
  const Vec a2 = A.rowwise().squaredNorm();
  const Vec b2 = B.rowwise().squaredNorm();
  Mat K = -2.0 * (A * B.transpose());
  K.colwise() += a2;
  K.rowwise() += b2.transpose();
  return (-gamma * K.array()).exp().matrix();
}

std::vector<Index> seeded_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  SplitMix64 rng(seed);
  for (Index i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  return perm;
}

// Platt SMO on a precomputed kernel matrix. Returns alphas and bias for the
// decision f(x) = sum_k alpha_k y_k K(x_k, x) + b.
struct SmoResult {
  Vec alpha;
  double bias = 0.0;
  bool converged = true;
};

class Smo {
 public:
  Smo(const Mat& K, const Eigen::VectorXi& y, double C, const SmoParams& params)
      : K_(K),
        y_(y),
        C_(C),
        tol_(params.tol),
        n_(K.rows()),
        rng_(mix_seed(params.seed, "smo")) {
    alpha_ = Vec::Zero(n_);
    b_ = 0.0;
    errors_ = -y_.cast<double>();  // f = 0 initially
  }

  SmoResult run(int max_passes) {
    int num_changed = 0;
    bool examine_all = true;
    int passes = 0;
    while ((num_changed > 0 || examine_all) && passes < max_passes) {
      num_changed = 0;
      if (examine_all) {
        for (Index i = 0; i < n_; ++i) num_changed += examine(i);
      } else {
        for (Index i = 0; i < n_; ++i)
          if (alpha_[i] > 0 && alpha_[i] < C_) num_changed += examine(i);
      }
      if (examine_all)
        examine_all = false;
      else if (num_changed == 0)
        examine_all = true;
      ++passes;
    }
    SmoResult res;
    res.alpha = alpha_;
    res.bias = b_;
    res.converged = passes < max_passes;
    return res;
  }

 private:
  int examine(Index i2) {
    const double y2 = y_[i2], a2 = alpha_[i2], e2 = errors_[i2];
    const double r2 = e2 * y2;
    if (!((r2 < -tol_ && a2 < C_) || (r2 > tol_ && a2 > 0))) return 0;

    // 1st heuristic: largest |E1 - E2| among non-bound points
    Index best = -1;
    double best_gap = -1;
    for (Index i = 0; i < n_; ++i) {
      if (i == i2 || alpha_[i] <= 0 || alpha_[i] >= C_) continue;
      const double gap = std::abs(errors_[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best >= 0 && take_step(best, i2)) return 1;

    // 2nd: sweep non-bound then all, from a seeded offset
    const Index start = static_cast<Index>(rng_.below(static_cast<std::uint64_t>(n_)));
    for (Index k = 0; k < n_; ++k) {
      const Index i1 = (start + k) % n_;
      if (alpha_[i1] > 0 && alpha_[i1] < C_ && take_step(i1, i2)) return 1;
    }
    for (Index k = 0; k < n_; ++k) {
      const Index i1 = (start + k) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  bool take_step(Index i1, Index i2) {
    if (i1 == i2) return false;
    const double a1 = alpha_[i1], a2 = alpha_[i2];
    const double y1 = y_[i1], y2 = y_[i2];
    const double e1 = errors_[i1], e2 = errors_[i2];
    const double s = y1 * y2;

    double L, H;
    if (s < 0) {
      L = std::max(0.0, a2 - a1);
      H = std::min(C_, C_ + a2 - a1);
    } else {
      L = std::max(0.0, a1 + a2 - C_);
      H = std::min(C_, a1 + a2);
    }
    if (L >= H) return false;

    const double k11 = K_(i1, i1), k12 = K_(i1, i2), k22 = K_(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2_new;
    if (eta > 1e-12) {
      a2_new = std::clamp(a2 + y2 * (e1 - e2) / eta, L, H);
    } else {
      return false;  // flat direction; degenerate pair
    }
    if (std::abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12)) return false;
    const double a1_new = a1 + s * (a2 - a2_new);

    const double d1 = y1 * (a1_new - a1), d2 = y2 * (a2_new - a2);
    const double b1 = b_ - e1 - d1 * k11 - d2 * k12;
    const double b2 = b_ - e2 - d1 * k12 - d2 * k22;
    double b_new;
    if (a1_new > 0 && a1_new < C_)
      b_new = b1;
    else if (a2_new > 0 && a2_new < C_)
      b_new = b2;
    else
      b_new = 0.5 * (b1 + b2);

    errors_ += (d1 * K_.col(i1) + d2 * K_.col(i2)).eval();
    errors_.array() += b_new - b_;
    alpha_[i1] = a1_new;
    alpha_[i2] = a2_new;
    b_ = b_new;
    return true;
  }

  const Mat& K_;
  const Eigen::VectorXi& y_;
  double C_, tol_;
  Index n_;
  Vec alpha_, errors_;
  double b_;
  SplitMix64 rng_;
};

SmoResult train_smo(const Mat& K, const Eigen::VectorXi& y, double C,
                    const SmoParams& params) {
  Smo smo(K, y, C, params);
  const int max_passes =
      std::max(16, params.max_pass_factor * static_cast<int>(K.rows()));
  return smo.run(max_passes);
}

double accuracy(const Vec& decision, const Eigen::VectorXi& y) {
  Index hits = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const int predicted = decision[i] <= 0 ? -1 : +1;
    if (predicted == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::max<Index>(y.size(), 1));
}

}  // namespace

double svm_decision(const SvmClassifier& clf, const Vec& x) {
  if (x.size() != clf.dim()) throw DimensionMismatch("svm_decision: input dim mismatch");
  const Vec xs = standardize(clf.standardizer, x);
  const Vec d2 = (clf.support_points.rowwise() - xs.transpose()).rowwise().squaredNorm();
  return clf.dual_coefs.dot((-clf.rbf_gamma * d2.array()).exp().matrix()) + clf.bias;
}

Vec svm_gradient(const SvmClassifier& clf, const Vec& x) {
  if (x.size() != clf.dim()) throw DimensionMismatch("svm_gradient: input dim mismatch");
  const Vec xs = standardize(clf.standardizer, x);
  const Mat diff = (-clf.support_points).rowwise() + xs.transpose();  // xs - x_k per row
  const Vec k = (-clf.rbf_gamma * diff.rowwise().squaredNorm().array()).exp().matrix();
  const Vec w = clf.dual_coefs.array() * k.array() * (-2.0 * clf.rbf_gamma);
  Vec grad_std = diff.transpose() * w;
  return (grad_std.array() / clf.standardizer.width().array()).matrix();
}

Vec krr_predict(const KrrRegressor& reg, const Vec& x) {
  if (x.size() != reg.dim()) throw DimensionMismatch("krr_predict: input dim mismatch");
  const Vec xs = standardize(reg.in_standardizer, x);
  const Vec d2 = (reg.train_inputs.rowwise() - xs.transpose()).rowwise().squaredNorm();
  const Vec k = (-reg.rbf_gamma * d2.array()).exp().matrix();
  Vec y_std = reg.dual_weights.transpose() * k;
  return (y_std.array() * reg.out_scale.array() + reg.out_mean.array()).matrix();
}

Mat krr_jacobian(const KrrRegressor& reg, const Vec& x) {
  if (x.size() != reg.dim()) throw DimensionMismatch("krr_jacobian: input dim mismatch");
  const Vec xs = standardize(reg.in_standardizer, x);
  const Mat diff = (-reg.train_inputs).rowwise() + xs.transpose();
  const Vec k = (-reg.rbf_gamma * diff.rowwise().squaredNorm().array()).exp().matrix();
  // dk_m/dxs = -2 gamma (xs - x_m) k_m
  const Mat dk = (-2.0 * reg.rbf_gamma) * (diff.array().colwise() * k.array()).matrix();
  Mat J_std = reg.dual_weights.transpose() * dk;  // m x d
  for (Index r = 0; r < J_std.rows(); ++r)
    J_std.row(r) = (J_std.row(r).transpose().array() * reg.out_scale[r] /
                    reg.in_standardizer.width().array())
                       .matrix()
                       .transpose();
  return J_std;
}

SampleSet augment_balance(const SampleSet& dataset, double jitter_fraction,
                          std::uint64_t seed) {
  const Index n = dataset.size();
  Index n_feas = dataset.feasible_count();
  Index n_infeas = n - n_feas;
  if (n_feas == 0 || n_infeas == 0)
    throw SingleClassDataset("augment_balance needs both classes present");
  if (n_feas == n_infeas) return dataset;

  const int minority_label = n_feas < n_infeas ? -1 : +1;
  std::vector<Index> minority;
  for (Index i = 0; i < n; ++i)
    if (dataset.labels[i] == minority_label) minority.push_back(i);
  const Index deficit = std::max(n_feas, n_infeas) - static_cast<Index>(minority.size());

  const Box hull = interval_hull(dataset.points, 0.0);
  const Vec sigma = jitter_fraction * hull.width();

  SampleSet out = dataset;
  out.points.conservativeResize(n + deficit, dataset.dim());
  out.labels.conservativeResize(n + deficit);
  SplitMix64 rng(mix_seed(seed, "augment"));
  for (Index j = 0; j < deficit; ++j) {
    const Index src =
        minority[static_cast<std::size_t>(rng.below(minority.size()))];
    Vec p = dataset.points.row(src).transpose();
    for (Index c = 0; c < p.size(); ++c) p[c] += sigma[c] * rng.normal();
    out.points.row(n + j) = p.transpose();
    out.labels[n + j] = minority_label;
  }
  out.n_evaluations = std::max<std::int64_t>(out.n_evaluations, out.size());
  return out;
}

std::pair<SvmClassifier, CvReport> train_svm(const SampleSet& dataset, const SvmGrid& grid,
                                             int k_folds, std::uint64_t seed,
                                             const SmoParams& smo) {
  const Index n = dataset.size();
  if (n < 2) throw Error("train_svm needs at least two points");
  if ((dataset.labels.array() == -1).count() == 0 ||
      (dataset.labels.array() == +1).count() == 0)
    throw SingleClassDataset("train_svm needs both classes present");
  if (grid.reg_c.empty() || grid.rbf_gamma.empty()) throw Error("empty SVM hyper grid");

  const Box box = interval_hull(dataset.points, 0.0);
  const Mat X = standardize_rows(box, dataset.points);
  const Eigen::VectorXi& y = dataset.labels;

  const int folds = std::max(2, k_folds);
  const auto perm = seeded_permutation(n, mix_seed(seed, "folds"));

  double best_acc = -1.0;
  double best_c = grid.reg_c.front(), best_gamma = grid.rbf_gamma.front();
  std::vector<double> best_fold_accs;

  std::vector<double> cs = grid.reg_c, gs = grid.rbf_gamma;
  std::sort(cs.begin(), cs.end());
  std::sort(gs.begin(), gs.end());

  const Mat G = X * X.transpose();
  const Vec sq = G.diagonal();
  Mat D2 = -2.0 * G;
  D2.colwise() += sq;
  D2.rowwise() += sq.transpose();

  for (double c : cs)
    for (double gamma : gs) {
      const Mat Kfull = (-gamma * D2.array()).exp().matrix();
      std::vector<double> fold_accs;
      for (int f = 0; f < folds; ++f) {
        std::vector<Index> tr, va;
        for (Index i = 0; i < n; ++i)
          ((static_cast<int>(i) % folds) == f ? va : tr).push_back(perm[static_cast<std::size_t>(i)]);
        if (tr.empty() || va.empty()) continue;
        Mat Ktr(tr.size(), tr.size());
        for (std::size_t a = 0; a < tr.size(); ++a)
          for (std::size_t b = 0; b < tr.size(); ++b) Ktr(static_cast<Index>(a), static_cast<Index>(b)) = Kfull(tr[a], tr[b]);
        Eigen::VectorXi ytr(static_cast<Index>(tr.size()));
        for (std::size_t a = 0; a < tr.size(); ++a) ytr[static_cast<Index>(a)] = y[tr[a]];
        SmoParams fold_params = smo;
        fold_params.seed = mix_seed(seed, "fold-smo", static_cast<std::uint64_t>(f));
        const SmoResult r = train_smo(Ktr, ytr, c, fold_params);
        // validation decisions
        Vec coef = (r.alpha.array() * ytr.cast<double>().array()).matrix();
        Vec dec(static_cast<Index>(va.size()));
        for (std::size_t q = 0; q < va.size(); ++q) {
          double s = r.bias;
          for (std::size_t a = 0; a < tr.size(); ++a)
            s += coef[static_cast<Index>(a)] * Kfull(tr[a], va[q]);
          dec[static_cast<Index>(q)] = s;
        }
        Eigen::VectorXi yva(static_cast<Index>(va.size()));
        for (std::size_t q = 0; q < va.size(); ++q) yva[static_cast<Index>(q)] = y[va[q]];
        fold_accs.push_back(accuracy(dec, yva));
      }
      const double mean_acc =
          std::accumulate(fold_accs.begin(), fold_accs.end(), 0.0) /
          std::max<std::size_t>(fold_accs.size(), 1);
      if (mean_acc > best_acc) {
        best_acc = mean_acc;
        best_c = c;
        best_gamma = gamma;
        best_fold_accs = fold_accs;
      }
    }

  // final model on all data
  const Mat Kfull = (-best_gamma * D2.array()).exp().matrix();
  const SmoResult r = train_smo(Kfull, y, best_c, smo);

  SvmClassifier clf;
  clf.standardizer = box;
  clf.rbf_gamma = best_gamma;
  clf.reg_c = best_c;
  clf.bias = r.bias;
  clf.warning_nonconverged = !r.converged;
  std::vector<Index> sv;
  for (Index i = 0; i < n; ++i)
    if (r.alpha[i] > 1e-12) sv.push_back(i);
  if (sv.empty()) sv.push_back(0);  // degenerate but keeps the model well formed
  clf.support_points.resize(static_cast<Index>(sv.size()), X.cols());
  clf.dual_coefs.resize(static_cast<Index>(sv.size()));
  for (std::size_t a = 0; a < sv.size(); ++a) {
    clf.support_points.row(static_cast<Index>(a)) = X.row(sv[a]);
    clf.dual_coefs[static_cast<Index>(a)] = r.alpha[sv[a]] * y[sv[a]];
  }

  CvReport report;
  report.fold_metrics = best_fold_accs;
  report.chosen_hypers = {{"reg_c", best_c}, {"rbf_gamma", best_gamma}};
  Vec dec(n);
  for (Index i = 0; i < n; ++i)
    dec[i] = svm_decision(clf, dataset.points.row(i).transpose());
  report.final_train_metric = accuracy(dec, y);
  return {clf, report};
}

std::pair<KrrRegressor, CvReport> train_krr(const Mat& inputs, const Mat& outputs,
                                            const KrrGrid& grid, int k_folds,
                                            std::uint64_t seed) {
  const Index n = inputs.rows();
  const Index m = outputs.cols();
  const int folds = std::max(2, k_folds);
  if (outputs.rows() != n) throw DimensionMismatch("train_krr: inputs/outputs rows differ");
  if (n < 2 * folds) throw Error("train_krr needs at least 2*k_folds points");
  if (grid.rbf_gamma.empty() || grid.ridge_lambda.empty())
    throw Error("empty KRR hyper grid");

  constexpr double kLambdaFloor = 1e-10;

  const Box box = interval_hull(inputs, 0.0);
  const Mat X = standardize_rows(box, inputs);
  Vec out_mean = outputs.colwise().mean();
  Vec out_scale(m);
  for (Index c = 0; c < m; ++c) {
    const double var =
        (outputs.col(c).array() - out_mean[c]).square().sum() / std::max<Index>(n - 1, 1);
    out_scale[c] = std::max(std::sqrt(var), 1e-12);
  }
  Mat Y(n, m);
  for (Index c = 0; c < m; ++c)
    Y.col(c) = ((outputs.col(c).array() - out_mean[c]) / out_scale[c]).matrix();

  const auto perm = seeded_permutation(n, mix_seed(seed, "krr-folds"));

  const Mat G = X * X.transpose();
  const Vec sq = G.diagonal();
  Mat D2 = -2.0 * G;
  D2.colwise() += sq;
  D2.rowwise() += sq.transpose();

  auto solve_weights = [&](const Mat& K, const Mat& Yt, double lambda) -> Mat {
    Mat A = K;
    A.diagonal().array() += std::max(lambda, kLambdaFloor);
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success)
      throw SingularKernel("kernel matrix not positive definite at lambda floor");
    return llt.solve(Yt);
  };

  double best_mse = std::numeric_limits<double>::infinity();
  double best_gamma = grid.rbf_gamma.front(), best_lambda = grid.ridge_lambda.front();
  std::vector<double> best_fold_mses;

  std::vector<double> gs = grid.rbf_gamma, ls = grid.ridge_lambda;
  std::sort(gs.begin(), gs.end());
  std::sort(ls.begin(), ls.end());

  for (double gamma : gs) {
    const Mat Kfull = (-gamma * D2.array()).exp().matrix();
    for (double lambda : ls) {
      std::vector<double> fold_mses;
      for (int f = 0; f < folds; ++f) {
        std::vector<Index> tr, va;
        for (Index i = 0; i < n; ++i)
          ((static_cast<int>(i) % folds) == f ? va : tr).push_back(perm[static_cast<std::size_t>(i)]);
        if (tr.empty() || va.empty()) continue;
        Mat Ktr(tr.size(), tr.size());
        Mat Ytr(static_cast<Index>(tr.size()), m);
        for (std::size_t a = 0; a < tr.size(); ++a) {
          Ytr.row(static_cast<Index>(a)) = Y.row(tr[a]);
          for (std::size_t b = 0; b < tr.size(); ++b)
            Ktr(static_cast<Index>(a), static_cast<Index>(b)) = Kfull(tr[a], tr[b]);
        }
        Mat W;
        try {
          W = solve_weights(Ktr, Ytr, lambda);
        } catch (const SingularKernel&) {
          fold_mses.push_back(std::numeric_limits<double>::infinity());
          continue;
        }
        double se = 0;
        for (std::size_t q = 0; q < va.size(); ++q) {
          Vec k(static_cast<Index>(tr.size()));
          for (std::size_t a = 0; a < tr.size(); ++a)
            k[static_cast<Index>(a)] = Kfull(tr[a], va[q]);
          const Vec pred = W.transpose() * k;
          se += (pred - Y.row(va[q]).transpose()).squaredNorm();
        }
        fold_mses.push_back(se / (static_cast<double>(va.size()) * static_cast<double>(m)));
      }
      const double mean_mse =
          std::accumulate(fold_mses.begin(), fold_mses.end(), 0.0) /
          std::max<std::size_t>(fold_mses.size(), 1);
      if (mean_mse < best_mse) {
        best_mse = mean_mse;
        best_gamma = gamma;
        best_lambda = lambda;
        best_fold_mses = fold_mses;
      }
    }
  }

  const Mat Kfull = (-best_gamma * D2.array()).exp().matrix();
  KrrRegressor reg;
  reg.train_inputs = X;
  reg.dual_weights = solve_weights(Kfull, Y, best_lambda);
  reg.rbf_gamma = best_gamma;
  reg.ridge_lambda = best_lambda;
  reg.output_dim = static_cast<int>(m);
  reg.in_standardizer = box;
  reg.out_mean = out_mean;
  reg.out_scale = out_scale;

  CvReport report;
  report.fold_metrics = best_fold_mses;
  report.chosen_hypers = {{"rbf_gamma", best_gamma}, {"ridge_lambda", best_lambda}};
  double se = 0;
  for (Index i = 0; i < n; ++i) {
    const Vec pred = krr_predict(reg, inputs.row(i).transpose());
    const Vec pred_std =
        ((pred - out_mean).array() / out_scale.array()).matrix();
    se += (pred_std - Y.row(i).transpose()).squaredNorm();
  }
  report.final_train_metric = se / (static_cast<double>(n) * static_cast<double>(m));
  return {reg, report};
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const nlohmann::json& j) {
  Vec v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

std::string svm_to_json(const SvmClassifier& clf) {
  nlohmann::json j;
  j["type"] = "svm_rbf";
  j["support_points"] = mat_to_json(clf.support_points);
  j["dual_coefs"] = vec_to_json(clf.dual_coefs);
  j["bias"] = clf.bias;
  j["rbf_gamma"] = clf.rbf_gamma;
  j["reg_c"] = clf.reg_c;
  j["box_lo"] = vec_to_json(clf.standardizer.lo);
  j["box_hi"] = vec_to_json(clf.standardizer.hi);
  j["warning_nonconverged"] = clf.warning_nonconverged;
  return j.dump(2);
}

SvmClassifier svm_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SvmClassifier clf;
  clf.support_points = mat_from_json(j.at("support_points"));
  clf.dual_coefs = vec_from_json(j.at("dual_coefs"));
  clf.bias = j.at("bias").get<double>();
  clf.rbf_gamma = j.at("rbf_gamma").get<double>();
  clf.reg_c = j.at("reg_c").get<double>();
  clf.standardizer = Box(vec_from_json(j.at("box_lo")), vec_from_json(j.at("box_hi")));
  clf.warning_nonconverged = j.value("warning_nonconverged", false);
  return clf;
}

std::string krr_to_json(const KrrRegressor& reg) {
  nlohmann::json j;
  j["type"] = "krr_rbf";
  j["train_inputs"] = mat_to_json(reg.train_inputs);
  j["dual_weights"] = mat_to_json(reg.dual_weights);
  j["rbf_gamma"] = reg.rbf_gamma;
  j["ridge_lambda"] = reg.ridge_lambda;
  j["output_dim"] = reg.output_dim;
  j["box_lo"] = vec_to_json(reg.in_standardizer.lo);
  j["box_hi"] = vec_to_json(reg.in_standardizer.hi);
  j["out_mean"] = vec_to_json(reg.out_mean);
  j["out_scale"] = vec_to_json(reg.out_scale);
  return j.dump(2);
}

KrrRegressor krr_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  KrrRegressor reg;
  reg.train_inputs = mat_from_json(j.at("train_inputs"));
  reg.dual_weights = mat_from_json(j.at("dual_weights"));
  reg.rbf_gamma = j.at("rbf_gamma").get<double>();
  reg.ridge_lambda = j.at("ridge_lambda").get<double>();
  reg.output_dim = j.at("output_dim").get<int>();
  reg.in_standardizer = Box(vec_from_json(j.at("box_lo")), vec_from_json(j.at("box_hi")));
  reg.out_mean = vec_from_json(j.at("out_mean"));
  reg.out_scale = vec_from_json(j.at("out_scale"));
  return reg;
}

}  // namespace dagcsp
