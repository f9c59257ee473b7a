#include "mahe/linreg.hpp"

#include <cmath>

#include "mahe/errors.hpp"

namespace mahe {

namespace {

Matrix with_intercept(const Matrix& X) {
  Matrix A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  return A;
}

}  // namespace

LinearFit weighted_least_squares(const Matrix& X, const Vector& y, const Vector& w) {
  if (X.rows() != y.size() || X.rows() != w.size())
    throw ConfigError("weighted_least_squares: size mismatch");
  if (X.rows() == 0) throw ConfigError("weighted_least_squares: empty data");
  const Matrix A = with_intercept(X);
  const Vector sw = w.cwiseSqrt();
  const Matrix As = sw.asDiagonal() * A;
  const Vector ys = sw.cwiseProduct(y);

  LinearFit fit;
  Eigen::ColPivHouseholderQR<Matrix> qr(As);
  qr.setThreshold(1e-10);
  Vector beta;
  if (qr.rank() < A.cols()) {
    fit.ridge_fallback = true;
    const Matrix G =
        As.transpose() * As + 1e-6 * Matrix::Identity(A.cols(), A.cols());
    beta = G.ldlt().solve(As.transpose() * ys);
  } else {
    beta = qr.solve(ys);
  }
  fit.w = beta.head(X.cols());
  fit.b = beta[X.cols()];
  if (!fit.w.allFinite() || !std::isfinite(fit.b))
    throw NumericalError("weighted_least_squares produced non-finite coefficients");
  return fit;
}

LinearFit weighted_logistic(const Matrix& X, const Vector& y, const Vector& w, int max_iter,
                            double tol) {
  if (X.rows() != y.size() || X.rows() != w.size())
    throw ConfigError("weighted_logistic: size mismatch");
  for (Index i = 0; i < y.size(); ++i)
    if (y[i] < 0.0 || y[i] > 1.0) throw ConfigError("weighted_logistic: targets must be in [0,1]");
  const Matrix A = with_intercept(X);
  const Index d = A.cols();
  Vector beta = Vector::Zero(d);
  const double wsum = w.sum();
  if (wsum <= 0.0) throw ConfigError("weighted_logistic: nonpositive total weight");

  for (int it = 0; it < max_iter; ++it) {
    const Vector eta = A * beta;
    Vector mu(eta.size()), s(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      mu[i] = sigmoid(eta[i]);
      s[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
    }
    const Vector grad = A.transpose() * (w.cwiseProduct(mu - y)) / wsum;
    const Matrix H = A.transpose() * (w.cwiseProduct(s) / wsum).asDiagonal() * A +
                     1e-8 * Matrix::Identity(d, d);
    const Vector step = H.ldlt().solve(grad);
    beta -= step;
    if (!beta.allFinite()) throw NumericalError("weighted_logistic diverged");
    if (step.norm() < tol) break;
  }
  LinearFit fit;
  fit.w = beta.head(X.cols());
  fit.b = beta[X.cols()];
  return fit;
}

Vector weighted_lasso(const Matrix& X, const Vector& y, const Vector& w, double lambda,
                      double* intercept, int max_iter, double tol) {
  if (X.rows() != y.size() || X.rows() != w.size()) throw ConfigError("weighted_lasso: sizes");
  if (lambda < 0.0) throw ConfigError("weighted_lasso: negative penalty");
  const Index n = X.rows(), p = X.cols();
  const double wsum = w.sum();
  if (wsum <= 0.0) throw ConfigError("weighted_lasso: nonpositive total weight");

  // standardize columns under the sample weights; constant columns stay zero
  Vector mean(p), scale(p);
  for (Index j = 0; j < p; ++j) {
    mean[j] = X.col(j).dot(w) / wsum;
    const Vector c = X.col(j).array() - mean[j];
    const double var = c.cwiseProduct(c).dot(w) / wsum;
    scale[j] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  Matrix Z(n, p);
  for (Index j = 0; j < p; ++j) {
    if (scale[j] > 0.0)
      Z.col(j).array() = (X.col(j).array() - mean[j]) / scale[j];
    else
      Z.col(j).setZero();
  }
  const double ymean = y.dot(w) / wsum;
  const Vector yc = y.array() - ymean;

  // Lipschitz constant of the weighted quadratic part
  const Matrix G = Z.transpose() * (w / wsum).asDiagonal() * Z;
  const double L =
      std::max(2.0 * G.selfadjointView<Eigen::Lower>().operatorNorm(), 1e-12);

  Vector beta = Vector::Zero(p), yk = beta;
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector grad = 2.0 * (G * yk - Z.transpose() * (w.cwiseProduct(yc)) / wsum);
    Vector next = yk - grad / L;
    const double thresh = lambda / L;
    for (Index j = 0; j < p; ++j) {
      const double m = std::abs(next[j]) - thresh;
      next[j] = m > 0.0 ? (next[j] > 0.0 ? m : -m) : 0.0;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    yk = next + ((t - 1.0) / tn) * (next - beta);
    const double move = (next - beta).norm();
    beta = next;
    t = tn;
    if (!beta.allFinite()) throw NumericalError("weighted_lasso diverged");
    if (move < tol * std::max(1.0, beta.norm())) break;
  }

  // undo the standardization
  Vector out(p);
  double b = ymean;
  for (Index j = 0; j < p; ++j) {
    out[j] = scale[j] > 0.0 ? beta[j] / scale[j] : 0.0;
    b -= out[j] * mean[j];
  }
  if (intercept) *intercept = b;
  return out;
}

}  // namespace mahe
