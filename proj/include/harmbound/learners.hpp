#pragma once

// Self-contained supervised learners used for nuisance fitting.  All of them
// are deterministic given their inputs; none consume randomness.
//
//   fit_logistic  : binary logistic regression, damped Newton with a small
//                   ridge penalty; returns a probability predictor.
//   fit_stumps    : least-squares gradient boosting with depth-1 stumps on
//                   quantile-binned thresholds; returns a real predictor.
//   fit_knn       : k-nearest-neighbor mean with brute-force Euclidean search;
//                   distance ties broken by row index, so predictions are
//                   reproducible.
//   fit_constant  : constant predictor (the "mean" learner).
//
// Predictors are std::function closures holding shared immutable state, safe
// to copy across threads.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace harmbound {

using PredictFn = std::function<double(std::span<const double>)>;

PredictFn fit_constant(double value);

// target must hold 0/1 values; ridge >= 0; returns sigmoid(w^T [1,x]).
PredictFn fit_logistic(const double* X, std::int64_t n, int d, const double* target,
                       double ridge = 1e-6, int max_iter = 200, double grad_tol = 1e-8);

// Least-squares boosting: F_0 = mean(target); each round adds
// shrinkage * best depth-1 stump fit to the residuals.
PredictFn fit_stumps(const double* X, std::int64_t n, int d, const double* target,
                     int rounds = 200, double shrinkage = 0.1);

// Takes ownership of copies of the training matrix and targets.
// k is clamped into [1, n].
PredictFn fit_knn(std::vector<double> X, std::int64_t n, int d,
                  std::vector<double> target, int k);

// Evaluates a predictor over the rows of a matrix; one output slot per row,
// parallelized when allowed (bit-identical to the serial path by design).
void predict_batch(const PredictFn& fn, const double* X, std::int64_t n, int d,
                   double* out, bool force_serial = false);

} // namespace harmbound
