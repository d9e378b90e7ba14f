#pragma once

#include <span>
#include <vector>

namespace oiqa {

/// Pearson linear correlation. Throws MetricError for length < 2, unequal
/// lengths or zero variance in either argument.
double plcc(std::span<const double> pred, std::span<const double> truth);

/// Spearman rank correlation: Pearson correlation of fractional ranks, ties
/// receiving their mean rank. Throws MetricError when either side is constant.
double srcc(std::span<const double> pred, std::span<const double> truth);

/// Root-mean-square error. Throws MetricError for empty or unequal inputs.
double rmse(std::span<const double> pred, std::span<const double> truth);

/// 1-based fractional ranks.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Four-parameter logistic f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|))
/// fitted to (pred, truth) by Levenberg-Marquardt; returns f(pred).
std::vector<double> logistic_remap(std::span<const double> pred, std::span<const double> truth);

}  // namespace oiqa
