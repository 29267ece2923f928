#include "pat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "pat/errors.hpp"

namespace pat {

namespace {

// Midranks of |d|, doubled so that ties average to integers.
std::vector<int64_t> doubled_ranks(const std::vector<double>& abs_diffs) {
  size_t n = abs_diffs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return abs_diffs[a] < abs_diffs[b]; });

  std::vector<int64_t> ranks2(n, 0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    // Positions i..j (1-based ranks i+1..j+1) share the midrank.
    int64_t doubled_mid = static_cast<int64_t>(i + 1 + j + 1);
    for (size_t k = i; k <= j; ++k) ranks2[order[k]] = doubled_mid;
    i = j + 1;
  }
  return ranks2;
}

double exact_two_sided_p(const std::vector<int64_t>& ranks2, double w2_plus) {
  int64_t total2 = std::accumulate(ranks2.begin(), ranks2.end(), int64_t{0});
  // counts[s] = number of sign assignments whose doubled W+ equals s.
  std::vector<double> counts(static_cast<size_t>(total2) + 1, 0.0);
  counts[0] = 1.0;
  int64_t reach = 0;
  for (int64_t r : ranks2) {
    reach += r;
    for (int64_t s = reach; s >= r; --s)
      counts[static_cast<size_t>(s)] += counts[static_cast<size_t>(s - r)];
  }
  double denom = std::ldexp(1.0, static_cast<int>(ranks2.size()));
  double lower = 0.0, upper = 0.0;
  for (int64_t s = 0; s <= total2; ++s) {
    double c = counts[static_cast<size_t>(s)];
    if (static_cast<double>(s) <= w2_plus + 1e-9) lower += c;
    if (static_cast<double>(s) >= w2_plus - 1e-9) upper += c;
  }
  double p = 2.0 * std::min(lower, upper) / denom;
  return std::min(1.0, p);
}

double normal_two_sided_p(const std::vector<int64_t>& ranks2, double w_plus) {
  double n = static_cast<double>(ranks2.size());
  double mu = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;

  // Tie correction: subtract sum(t^3 - t)/48 over groups of tied |d|.
  std::vector<int64_t> sorted(ranks2);
  std::sort(sorted.begin(), sorted.end());
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    double t = static_cast<double>(j - i + 1);
    var -= (t * t * t - t) / 48.0;
    i = j + 1;
  }
  if (var <= 0.0) return 1.0;

  double d = w_plus - mu;
  double cc = (d > 0.0) ? -0.5 : (d < 0.0 ? 0.5 : 0.0);
  double z = (d + cc) / std::sqrt(var);
  double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  return std::min(1.0, p);
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
  for (double d : diffs)
    if (!std::isfinite(d)) throw ConfigError("wilcoxon_signed_rank: non-finite difference");

  std::vector<double> abs_diffs;
  std::vector<int> signs;
  abs_diffs.reserve(diffs.size());
  for (double d : diffs) {
    if (d == 0.0) continue;
    abs_diffs.push_back(std::abs(d));
    signs.push_back(d > 0.0 ? 1 : -1);
  }

  WilcoxonResult res;
  res.effective_n = static_cast<int>(abs_diffs.size());
  if (res.effective_n == 0) return res;  // no information, p = 1

  std::vector<int64_t> ranks2 = doubled_ranks(abs_diffs);
  double w2_plus = 0.0;
  for (size_t k = 0; k < ranks2.size(); ++k)
    if (signs[k] > 0) w2_plus += static_cast<double>(ranks2[k]);
  res.statistic = w2_plus / 2.0;

  if (res.effective_n < 20)
    res.p_value = exact_two_sided_p(ranks2, w2_plus);
  else
    res.p_value = normal_two_sided_p(ranks2, res.statistic);
  return res;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("mean: empty input");
  double s = std::accumulate(values.begin(), values.end(), 0.0);
  return s / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) throw ConfigError("sample_stddev: needs at least two values");
  double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace pat
