#pragma once

#include "mahe/common.hpp"

namespace mahe {

struct LinearFit {
  Vector w;
  double b = 0.0;
  bool ridge_fallback = false;  // rank-deficient design, refit with 1e-6 ridge
};

// Weighted least squares with intercept; rank-deficient designs fall back to
// a 1e-6 ridge and say so.
LinearFit weighted_least_squares(const Matrix& X, const Vector& y, const Vector& w);

// Weighted logistic regression (IRLS with ridge damping); y may be fractional
// in [0,1]. Scores are log-odds X*w + b.
LinearFit weighted_logistic(const Matrix& X, const Vector& y, const Vector& w,
                            int max_iter = 100, double tol = 1e-10);

// Weighted lasso by FISTA on standardized columns; intercept unpenalized.
// lambda scales the per-sample-normalized L1 term.
Vector weighted_lasso(const Matrix& X, const Vector& y, const Vector& w, double lambda,
                      double* intercept, int max_iter = 5000, double tol = 1e-12);

}  // namespace mahe
