#pragma once

#include "mahe/common.hpp"

#include <vector>

namespace mahe {

double weighted_mean(const Vector& v, const Vector& w);

double weighted_mse(const Vector& pred, const Vector& y, const Vector& w);

/// 1 - SS_res/SS_tot with weighted sums; can be negative for bad fits.
double weighted_r2(const Vector& pred, const Vector& y, const Vector& w);

/// Pearson correlation under sample weights. Returns 0 when either side is constant.
double weighted_correlation(const Vector& a, const Vector& b, const Vector& w);

/// Ranking AUC (Mann-Whitney, average ranks on ties). NaN if labels are one class.
double roc_auc(const Vector& scores, const std::vector<int>& labels);

/// Fraction of agreement between sign predictions and binary labels.
double accuracy(const Vector& scores, const std::vector<int>& labels, double threshold = 0.5);

}  // namespace mahe
