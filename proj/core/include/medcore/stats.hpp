#pragma once

#include <vector>

namespace medcore {

/// q-th percentile (q in [0, 100]) with linear interpolation between the
/// closest order statistics: position q/100 * (n - 1) in the sorted data.
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);
double mean(const std::vector<double>& values);

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson correlation of average ranks. Returns 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace medcore
