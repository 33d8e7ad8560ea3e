#include <doctest.h>

#include "dagcsp/surrogates.hpp"

#include <cmath>

using namespace dagcsp;

TEST_SUITE_BEGIN("surrogates");

namespace {

SampleSet labeled_set(const Mat& pts, const Eigen::VectorXi& labels) {
  SampleSet s;
  s.points = pts;
  s.labels = labels;
  s.n_evaluations = pts.rows();
  s.roles = {{RoleKind::Param, 0, -1, 0, pts.cols()}};
  return s;
}

SvmClassifier tiny_model(const Mat& support, const Vec& coefs, double bias, double gamma) {
  SvmClassifier clf;
  clf.support_points = support;
  clf.dual_coefs = coefs;
  clf.bias = bias;
  clf.rbf_gamma = gamma;
  clf.standardizer = Box::unit(support.cols());  // identity standardization
  return clf;
}

}  // namespace

TEST_CASE("augment_balance equalizes class counts") {
  Mat pts(100, 2);
  Eigen::VectorXi labels(100);
  SplitMix64 rng(1);
  for (Index i = 0; i < 100; ++i) {
    pts(i, 0) = rng.uniform();
    pts(i, 1) = rng.uniform();
    labels[i] = i < 90 ? -1 : +1;
  }
  const SampleSet s = labeled_set(pts, labels);
  const SampleSet b = augment_balance(s, 0.01, 42);
  CHECK((b.labels.array() == -1).count() == 90);
  CHECK((b.labels.array() == +1).count() == 90);
  // majority points are untouched, in place
  CHECK((b.points.topRows(100) - pts).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("augment_balance leaves balanced data unchanged") {
  Mat pts(4, 1);
  pts << 0, 1, 2, 3;
  Eigen::VectorXi labels(4);
  labels << -1, -1, 1, 1;
  const SampleSet s = labeled_set(pts, labels);
  const SampleSet b = augment_balance(s, 0.01, 0);
  CHECK(b.points == pts);
  CHECK(b.labels == labels);
}

TEST_CASE("augment_balance rejects single-class data") {
  Mat pts(5, 1);
  pts << 0, 1, 2, 3, 4;
  Eigen::VectorXi labels = Eigen::VectorXi::Constant(5, -1);
  CHECK_THROWS_AS(augment_balance(labeled_set(pts, labels), 0.01, 0), SingleClassDataset);
}

TEST_CASE("separable pair gets the signs right") {
  Mat pts(8, 1);
  Eigen::VectorXi labels(8);
  for (int i = 0; i < 4; ++i) {
    pts(i, 0) = -1.0 - 0.1 * i;
    labels[i] = -1;
    pts(4 + i, 0) = 1.0 + 0.1 * i;
    labels[4 + i] = +1;
  }
  auto [clf, report] = train_svm(labeled_set(pts, labels), SvmGrid{}, 2, 0);
  CHECK(svm_decision(clf, Vec::Constant(1, -1.0)) < 0.0);
  CHECK(svm_decision(clf, Vec::Constant(1, 1.0)) > 0.0);
  CHECK(report.final_train_metric == 1.0);
}

TEST_CASE("margin contract at support vectors of a separable model") {
  Mat pts(20, 1);
  Eigen::VectorXi labels(20);
  SplitMix64 rng(3);
  for (int i = 0; i < 10; ++i) {
    pts(i, 0) = rng.uniform(-2.0, -0.5);
    labels[i] = -1;
    pts(10 + i, 0) = rng.uniform(0.5, 2.0);
    labels[10 + i] = +1;
  }
  auto [clf, report] = train_svm(labeled_set(pts, labels), SvmGrid{}, 2, 0);
  // the most negative training point sits at or beyond its margin
  double dec = svm_decision(clf, Vec::Constant(1, pts.col(0).minCoeff()));
  CHECK(dec <= -1.0 + 1e-2);
}

TEST_CASE("XOR pattern is separated by the RBF kernel") {
  Mat pts(40, 2);
  Eigen::VectorXi labels(40);
  SplitMix64 rng(5);
  for (Index i = 0; i < 40; ++i) {
    const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
    pts(i, 0) = x;
    pts(i, 1) = y;
    labels[i] = (x * y >= 0) ? -1 : +1;
  }
  SvmGrid grid;
  grid.reg_c = {10.0, 100.0};
  grid.rbf_gamma = {1.0, 4.0};
  auto [clf, report] = train_svm(labeled_set(pts, labels), grid, 2, 0);
  CHECK(report.final_train_metric == 1.0);
}

TEST_CASE("train_svm rejects single-class data") {
  Mat pts(6, 1);
  pts << 0, 1, 2, 3, 4, 5;
  Eigen::VectorXi labels = Eigen::VectorXi::Constant(6, +1);
  CHECK_THROWS_AS(train_svm(labeled_set(pts, labels), SvmGrid{}, 2, 0), SingleClassDataset);
}

TEST_CASE("svm_decision of a symmetric two-point model at the midpoint") {
  Mat support(2, 1);
  support << 0.25, 0.75;
  Vec coefs(2);
  coefs << 1.0, -1.0;
  const SvmClassifier clf = tiny_model(support, coefs, 0.37, 2.0);
  // kernel terms cancel by symmetry: only the bias remains
  CHECK(svm_decision(clf, Vec::Constant(1, 0.5)) == doctest::Approx(0.37));
}

TEST_CASE("svm_decision with zero coefficients is the bias everywhere") {
  Mat support(3, 2);
  support << 0.1, 0.2, 0.5, 0.5, 0.9, 0.1;
  const SvmClassifier clf = tiny_model(support, Vec::Zero(3), -0.8, 1.0);
  SplitMix64 rng(2);
  for (int t = 0; t < 5; ++t) {
    Vec x(2);
    x << rng.uniform(), rng.uniform();
    CHECK(svm_decision(clf, x) == doctest::Approx(-0.8));
    CHECK(svm_gradient(clf, x).norm() == 0.0);
  }
}

TEST_CASE("svm_gradient vanishes at a lone support point") {
  Mat support(1, 2);
  support << 0.5, 0.5;
  const SvmClassifier clf = tiny_model(support, Vec::Constant(1, 2.0), 0.1, 3.0);
  CHECK(svm_gradient(clf, Vec::Constant(2, 0.5)).norm() == 0.0);
}

TEST_CASE("svm_gradient matches central finite differences") {
  SplitMix64 rng(17);
  Mat support(6, 3);
  Vec coefs(6);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 3; ++j) support(i, j) = rng.uniform();
    coefs[i] = rng.uniform(-2, 2);
  }
  SvmClassifier clf = tiny_model(support, coefs, 0.2, 1.7);
  // non-unit standardizer to exercise the chain rule
  clf.standardizer = Box(Vec::Constant(3, -2.0), Vec::Constant(3, 3.0));
  for (int t = 0; t < 10; ++t) {
    Vec x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-2, 3);
    const Vec g = svm_gradient(clf, x);
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (svm_decision(clf, xp) - svm_decision(clf, xm)) / (2 * h);
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("krr recovers a linear function") {
  Mat X(20, 1), Y(20, 1);
  for (Index i = 0; i < 20; ++i) {
    X(i, 0) = static_cast<double>(i) / 19.0;
    Y(i, 0) = X(i, 0);
  }
  auto [reg, report] = train_krr(X, Y, KrrGrid{}, 2, 0);
  CHECK(krr_predict(reg, Vec::Constant(1, 0.5))[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("krr constant outputs predict the constant") {
  SplitMix64 rng(7);
  Mat X(16, 2), Y(16, 1);
  for (Index i = 0; i < 16; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    Y(i, 0) = 3.25;
  }
  auto [reg, report] = train_krr(X, Y, KrrGrid{}, 2, 0);
  for (int t = 0; t < 5; ++t) {
    Vec x(2);
    x << rng.uniform(), rng.uniform();
    CHECK(krr_predict(reg, x)[0] == doctest::Approx(3.25).epsilon(1e-6));
  }
}

TEST_CASE("krr jacobian matches central finite differences") {
  SplitMix64 rng(23);
  Mat X(25, 2), Y(25, 2);
  for (Index i = 0; i < 25; ++i) {
    X(i, 0) = rng.uniform(-1, 1);
    X(i, 1) = rng.uniform(-1, 1);
    Y(i, 0) = std::sin(2 * X(i, 0)) + X(i, 1);
    Y(i, 1) = X(i, 0) * X(i, 1);
  }
  auto [reg, report] = train_krr(X, Y, KrrGrid{}, 2, 0);
  for (int t = 0; t < 10; ++t) {
    Vec x(2);
    x << rng.uniform(-1, 1), rng.uniform(-1, 1);
    const Mat J = krr_jacobian(reg, x);
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const Vec fd = (krr_predict(reg, xp) - krr_predict(reg, xm)) / (2 * h);
      for (int r = 0; r < 2; ++r) {
        const double scale = std::max(1.0, std::abs(fd[r]));
        CHECK(std::abs(J(r, j) - fd[r]) / scale <= 1e-5);
      }
    }
  }
}

TEST_CASE("interpolating model reproduces training targets") {
  Mat X(12, 1), Y(12, 1);
  for (Index i = 0; i < 12; ++i) {
    X(i, 0) = static_cast<double>(i) / 11.0;
    Y(i, 0) = std::cos(3 * X(i, 0));
  }
  KrrGrid grid;
  grid.ridge_lambda = {1e-10};
  grid.rbf_gamma = {2.0};
  auto [reg, report] = train_krr(X, Y, grid, 2, 0);
  for (Index i = 0; i < 12; ++i)
    CHECK(krr_predict(reg, X.row(i).transpose())[0] == doctest::Approx(Y(i, 0)).epsilon(1e-4));
}

TEST_CASE("training determinism for a fixed seed") {
  SplitMix64 rng(31);
  Mat pts(60, 2);
  Eigen::VectorXi labels(60);
  for (Index i = 0; i < 60; ++i) {
    pts(i, 0) = rng.uniform(-1, 1);
    pts(i, 1) = rng.uniform(-1, 1);
    labels[i] = pts.row(i).norm() < 0.7 ? -1 : +1;
  }
  const SampleSet s = labeled_set(pts, labels);
  auto [c1, r1] = train_svm(s, SvmGrid{}, 2, 9);
  auto [c2, r2] = train_svm(s, SvmGrid{}, 2, 9);
  CHECK(c1.dual_coefs == c2.dual_coefs);
  CHECK(c1.bias == c2.bias);
  CHECK(r1.final_train_metric == r2.final_train_metric);
}

TEST_CASE("reported training accuracy matches re-evaluation") {
  SplitMix64 rng(41);
  Mat pts(80, 2);
  Eigen::VectorXi labels(80);
  for (Index i = 0; i < 80; ++i) {
    pts(i, 0) = rng.uniform(-1, 1);
    pts(i, 1) = rng.uniform(-1, 1);
    labels[i] = (pts(i, 0) + pts(i, 1) < 0.2) ? -1 : +1;
  }
  const SampleSet s = labeled_set(pts, labels);
  auto [clf, report] = train_svm(s, SvmGrid{}, 2, 1);
  Index hits = 0;
  for (Index i = 0; i < s.size(); ++i) {
    const double dec = svm_decision(clf, s.points.row(i).transpose());
    if ((dec <= 0 ? -1 : +1) == s.labels[i]) ++hits;
  }
  CHECK(report.final_train_metric == doctest::Approx(static_cast<double>(hits) / 80.0));
}

TEST_CASE("JSON round trip preserves model evaluations") {
  SplitMix64 rng(53);
  Mat pts(30, 2);
  Eigen::VectorXi labels(30);
  for (Index i = 0; i < 30; ++i) {
    pts(i, 0) = rng.uniform(-1, 1);
    pts(i, 1) = rng.uniform(-1, 1);
    labels[i] = pts(i, 0) < 0 ? -1 : +1;
  }
  auto [clf, r] = train_svm(labeled_set(pts, labels), SvmGrid{}, 2, 0);
  const SvmClassifier back = svm_from_json(svm_to_json(clf));
  Vec x(2);
  x << 0.2, -0.4;
  CHECK(svm_decision(back, x) == doctest::Approx(svm_decision(clf, x)));

  Mat X(14, 1), Y(14, 1);
  for (Index i = 0; i < 14; ++i) {
    X(i, 0) = static_cast<double>(i) / 13.0;
    Y(i, 0) = X(i, 0) * X(i, 0);
  }
  auto [reg, rr] = train_krr(X, Y, KrrGrid{}, 2, 0);
  const KrrRegressor back2 = krr_from_json(krr_to_json(reg));
  CHECK(krr_predict(back2, Vec::Constant(1, 0.3))[0] ==
        doctest::Approx(krr_predict(reg, Vec::Constant(1, 0.3))[0]));
}

TEST_SUITE_END();
