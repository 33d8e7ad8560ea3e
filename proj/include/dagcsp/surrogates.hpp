#pragma once

#include "dagcsp/domains.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dagcsp {

// Soft-margin RBF support vector machine. Inputs are standardized to the
// training box internally; decision(x) <= 0 means feasible (label -1).
struct SvmClassifier {
  Mat support_points;  // M x d, standardized coordinates
  Vec dual_coefs;      // alpha_k * s_k
  double bias = 0.0;
  double rbf_gamma = 1.0;  // in standardized coordinates
  double reg_c = 1.0;
  Box standardizer;  // original-space box mapped onto [0,1]^d
  bool warning_nonconverged = false;

  Index dim() const { return standardizer.dim(); }
};

double svm_decision(const SvmClassifier& clf, const Vec& x);
Vec svm_gradient(const SvmClassifier& clf, const Vec& x);

// RBF kernel ridge regression; dual_weights solves (K + lambda I) W = Y on the
// standardized training data.
struct KrrRegressor {
  Mat train_inputs;   // M x d, standardized
  Mat dual_weights;   // M x m
  double rbf_gamma = 1.0;
  double ridge_lambda = 1e-6;
  int output_dim = 0;
  Box in_standardizer;
  Vec out_mean, out_scale;

  Index dim() const { return in_standardizer.dim(); }
};

Vec krr_predict(const KrrRegressor& reg, const Vec& x);
Mat krr_jacobian(const KrrRegressor& reg, const Vec& x);

struct CvReport {
  std::vector<double> fold_metrics;  // accuracies (SVM) or MSEs (KRR)
  std::map<std::string, double> chosen_hypers;
  double final_train_metric = 0.0;
};

struct SvmGrid {
  std::vector<double> reg_c = {1.0, 10.0, 100.0};
  std::vector<double> rbf_gamma = {0.5, 1.5, 4.0};
};

struct KrrGrid {
  std::vector<double> rbf_gamma = {0.5, 1.0, 2.0, 4.0};
  std::vector<double> ridge_lambda = {1e-8, 1e-6, 1e-4};
};

struct SmoParams {
  double tol = 1e-3;
  int max_pass_factor = 10;  // outer-pass cap is max_pass_factor * K
  std::uint64_t seed = 0;
};

// Oversamples the minority class by duplicating points with Gaussian jitter
// (sigma = jitter_fraction * per-dimension data range) until classes match.
SampleSet augment_balance(const SampleSet& dataset, double jitter_fraction,
                          std::uint64_t seed);

std::pair<SvmClassifier, CvReport> train_svm(const SampleSet& dataset, const SvmGrid& grid,
                                             int k_folds, std::uint64_t seed,
                                             const SmoParams& smo = {});

std::pair<KrrRegressor, CvReport> train_krr(const Mat& inputs, const Mat& outputs,
                                            const KrrGrid& grid, int k_folds,
                                            std::uint64_t seed);

std::string svm_to_json(const SvmClassifier& clf);
SvmClassifier svm_from_json(const std::string& text);
std::string krr_to_json(const KrrRegressor& reg);
KrrRegressor krr_from_json(const std::string& text);

}  // namespace dagcsp
