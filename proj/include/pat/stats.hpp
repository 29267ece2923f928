#pragma once

#include <vector>

namespace pat {

struct WilcoxonResult {
  double statistic = 0.0;   // W+ = sum of ranks of positive differences
  double p_value = 1.0;     // two-sided
  int effective_n = 0;      // pairs remaining after dropping zeros
};

// Paired Wilcoxon signed-rank test on a vector of differences.
// Zero differences are dropped. Uses exact enumeration of the sign
// distribution for effective_n < 20 and a normal approximation with tie
// and continuity corrections otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs);

double mean(const std::vector<double>& values);
double sample_stddev(const std::vector<double>& values);

}  // namespace pat
