#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pgada/error.hpp"
#include "pgada/experiments.hpp"

namespace pgada {

CiResult aggregate_ci(std::span<const double> values) {
  if (values.empty()) throw UsageError("aggregate_ci: empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  CiResult out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.halfwidth = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

}  // namespace pgada
