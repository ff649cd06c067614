#include "modar/assignment.hpp"

#include <algorithm>
#include <limits>

namespace modar {

namespace {

// Min-cost assignment for rows <= cols (potentials formulation). cost is 1-based.
std::vector<int> solve_min_cost(const std::vector<std::vector<double>>& cost, int rows, int cols) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
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
    } while (j0);
  }
  std::vector<int> row_to_col(rows + 1, 0);
  for (int j = 1; j <= cols; ++j) {
    if (p[j] != 0) row_to_col[p[j]] = j;
  }
  return row_to_col;
}

}  // namespace

std::vector<std::optional<int>> max_weight_assignment(const Eigen::MatrixXd& benefit,
                                                      double min_benefit) {
  const int n_rows = static_cast<int>(benefit.rows());
  const int n_cols = static_cast<int>(benefit.cols());
  std::vector<std::optional<int>> result(static_cast<std::size_t>(n_rows));
  if (n_rows == 0 || n_cols == 0) return result;

  // Inadmissible pairs get zero gain so that leaving them unmatched is never worse.
  const bool transpose = n_rows > n_cols;
  const int rows = transpose ? n_cols : n_rows;
  const int cols = transpose ? n_rows : n_cols;
  std::vector<std::vector<double>> cost(rows + 1, std::vector<double>(cols + 1, 0.0));
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) {
      const double b = benefit(r, c);
      const double gain = b >= min_benefit ? b : 0.0;
      if (transpose) {
        cost[c + 1][r + 1] = -gain;
      } else {
        cost[r + 1][c + 1] = -gain;
      }
    }
  }
  const auto row_to_col = solve_min_cost(cost, rows, cols);
  for (int i = 1; i <= rows; ++i) {
    const int j = row_to_col[i];
    if (j == 0) continue;
    const int r = transpose ? j - 1 : i - 1;
    const int c = transpose ? i - 1 : j - 1;
    if (benefit(r, c) >= min_benefit) result[static_cast<std::size_t>(r)] = c;
  }
  return result;
}

}  // namespace modar
