#pragma once

#include <algorithm>
#include <limits>
#include <vector>

namespace nomt {

/// Minimum-cost assignment (Hungarian method with potentials, O(n^2 m)).
/// `cost` is rows x cols, possibly rectangular. Returns, for every row, the
/// assigned column or -1 when there are more rows than columns.
inline std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(cost[0].size());
  if (cols == 0) return std::vector<int>(rows, -1);

  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;  // n <= m
  const int m = transposed ? rows : cols;
  auto c = [&](int i, int j) { return transposed ? cost[j][i] : cost[i][j]; };

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(rows, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed)
      out[j - 1] = p[j] - 1;
    else
      out[p[j] - 1] = j - 1;
  }
  return out;
}

}  // namespace nomt
