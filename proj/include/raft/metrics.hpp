#pragma once

#include <span>
#include <vector>

#include "raft/series.hpp"

namespace raft {

double mse(const Matrix& pred, const Matrix& truth);
double mae(const Matrix& pred, const Matrix& truth);

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> ranks(std::span<const double> values);

/// Sample Pearson correlation of two equal-length columns (0 when either is constant).
double pearson(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation: Pearson correlation of the average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);

}  // namespace raft
