#include "objnav/objectives/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "objnav/common/errors.hpp"

namespace objnav::objectives {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Kuhn-Munkres with row/column potentials for an n x m matrix with n <= m.
// Returns, for each row, its assigned column.
std::vector<int> solve_rows_le_cols(const ad::Matrix& a) {
  const auto n = static_cast<int>(a.rows());
  const auto m = static_cast<int>(a.cols());
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<int> owner(static_cast<std::size_t>(m + 1), 0);  // column -> row (1-based, 0 = free)
  std::vector<int> way(static_cast<std::size_t>(m + 1), 0);

  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), kInf);
    std::vector<bool> used(static_cast<std::size_t>(m + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = owner[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[js];
        if (cur < minv[js]) {
          minv[js] = cur;
          way[js] = j0;
        }
        if (minv[js] < delta) {
          delta = minv[js];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) {
          u[static_cast<std::size_t>(owner[js])] += delta;
          v[js] -= delta;
        } else {
          minv[js] -= delta;
        }
      }
      j0 = j1;
    } while (owner[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      owner[static_cast<std::size_t>(j0)] = owner[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (owner[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(owner[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

// Optimal cost of a maximum-cardinality matching restricted to the given rows
// and columns. The cost is re-summed from the chosen entries.
double restricted_optimum(const ad::Matrix& cost, const std::vector<int>& rows, const std::vector<int>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  const bool transpose = rows.size() > cols.size();
  const auto& r = transpose ? cols : rows;
  const auto& c = transpose ? rows : cols;
  ad::Matrix sub(static_cast<ad::Index>(r.size()), static_cast<ad::Index>(c.size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      sub(static_cast<ad::Index>(i), static_cast<ad::Index>(j)) = transpose ? cost(c[j], r[i]) : cost(r[i], c[j]);
    }
  }
  const std::vector<int> match = solve_rows_le_cols(sub);
  double total = 0.0;
  for (std::size_t i = 0; i < match.size(); ++i) total += sub(static_cast<ad::Index>(i), match[i]);
  return total;
}

}  // namespace

Assignment hungarian(const ad::Matrix& cost) {
  const auto k = static_cast<int>(cost.rows());
  const auto n = static_cast<int>(cost.cols());
  if (!cost.allFinite()) throw ContractError("hungarian: costs must be finite");
  Assignment out;
  if (k == 0 || n == 0) {
    for (int i = 0; i < k; ++i) out.unmatched.push_back(i);
    return out;
  }

  std::vector<int> all_rows(static_cast<std::size_t>(k));
  std::vector<int> free_cols(static_cast<std::size_t>(n));
  for (int i = 0; i < k; ++i) all_rows[static_cast<std::size_t>(i)] = i;
  for (int j = 0; j < n; ++j) free_cols[static_cast<std::size_t>(j)] = j;

  const double best = restricted_optimum(cost, all_rows, free_cols);
  const double tol = 1e-12 * (1.0 + cost.cwiseAbs().sum());
  auto need = static_cast<std::size_t>(std::min(k, n));
  double fixed = 0.0;

  // Fix slots in ascending order, each to the smallest column that keeps the
  // total optimal; this yields the lexicographically smallest optimal pair list.
  for (int i = 0; i < k; ++i) {
    std::vector<int> rest(all_rows.begin() + i + 1, all_rows.end());
    bool matched = false;
    if (need > 0) {
      for (std::size_t c = 0; c < free_cols.size(); ++c) {
        std::vector<int> cols = free_cols;
        cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(c));
        if (std::min(rest.size(), cols.size()) != need - 1) continue;
        const int j = free_cols[c];
        const double candidate = fixed + cost(i, j) + restricted_optimum(cost, rest, cols);
        if (std::abs(candidate - best) <= tol) {
          out.pairs.emplace_back(i, j);
          fixed += cost(i, j);
          free_cols = std::move(cols);
          --need;
          matched = true;
          break;
        }
      }
    }
    if (!matched) out.unmatched.push_back(i);
  }

  for (const auto& [i, j] : out.pairs) out.cost += cost(i, j);
  return out;
}

}  // namespace objnav::objectives
