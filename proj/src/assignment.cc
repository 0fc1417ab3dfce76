// eend_gla/assignment.cc

#include "eend_gla/assignment.h"

#include <limits>
#include <stdexcept>

namespace eend_gla {

std::vector<int> MinCostAssignment(const Matrix &cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) {
    throw std::invalid_argument("assignment: more rows than columns");
  }
  if (!cost.allFinite()) {
    throw std::invalid_argument("assignment: non-finite cost");
  }
  if (n == 0) return {};

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual source row/column.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      int i0 = match[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> result(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (match[j] != 0) result[match[j] - 1] = j - 1;
  }
  return result;
}

std::vector<int> MaxWeightAssignment(const Matrix &weight) {
  return MinCostAssignment(-weight);
}

}  // namespace eend_gla
