#include "mahe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mahe/errors.hpp"

namespace mahe {

double weighted_mean(const Vector& v, const Vector& w) {
  if (v.size() != w.size()) throw NumericalError("weighted_mean: size mismatch");
  const double wsum = w.sum();
  if (wsum <= 0.0) throw NumericalError("weighted_mean: nonpositive total weight");
  return v.dot(w) / wsum;
}

double weighted_mse(const Vector& pred, const Vector& y, const Vector& w) {
  if (pred.size() != y.size() || pred.size() != w.size())
    throw NumericalError("weighted_mse: size mismatch");
  const double wsum = w.sum();
  if (wsum <= 0.0) throw NumericalError("weighted_mse: nonpositive total weight");
  const Vector d = pred - y;
  return d.cwiseProduct(d).dot(w) / wsum;
}

double weighted_r2(const Vector& pred, const Vector& y, const Vector& w) {
  const double mu = weighted_mean(y, w);
  const Vector dm = y.array() - mu;
  const double tss = dm.cwiseProduct(dm).dot(w);
  const Vector d = pred - y;
  const double rss = d.cwiseProduct(d).dot(w);
  if (tss <= 0.0) return rss <= 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - rss / tss;
}

double weighted_correlation(const Vector& a, const Vector& b, const Vector& w) {
  const double ma = weighted_mean(a, w);
  const double mb = weighted_mean(b, w);
  const Vector da = a.array() - ma;
  const Vector db = b.array() - mb;
  const double cov = da.cwiseProduct(db).dot(w);
  const double va = da.cwiseProduct(da).dot(w);
  const double vb = db.cwiseProduct(db).dot(w);
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

double roc_auc(const Vector& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size())
    throw NumericalError("roc_auc: size mismatch");
  const std::size_t n = labels.size();
  std::size_t npos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw NumericalError("roc_auc: labels must be 0/1");
    npos += static_cast<std::size_t>(l);
  }
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::numeric_limits<double>::quiet_NaN();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return scores[static_cast<Index>(i)] < scores[static_cast<Index>(j)];
  });

  // average ranks over ties, then Mann-Whitney
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           scores[static_cast<Index>(order[j + 1])] == scores[static_cast<Index>(order[i])])
      ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rpos = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) rpos += rank[k];
  const double u = rpos - 0.5 * static_cast<double>(npos) * (static_cast<double>(npos) + 1.0);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double accuracy(const Vector& scores, const std::vector<int>& labels, double threshold) {
  if (static_cast<std::size_t>(scores.size()) != labels.size() || labels.empty())
    throw NumericalError("accuracy: bad sizes");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const int pred = scores[static_cast<Index>(k)] >= threshold ? 1 : 0;
    if (pred == labels[k]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace mahe
