#pragma once

// Dense two-phase tableau simplex, sized for the small prefix-budget LPs
// built in this project (hundreds of rows, dozens of variables).  Bland's
// rule throughout, so no cycling; an iteration cap backstops numerical
// degeneracy.  The front end handles box bounds by substitution (fixed
// variables), shifting (lower bounds), and explicit rows (upper bounds).

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "specverify/errors.hpp"
#include "specverify/seqspace.hpp"

namespace specverify::lp {

using seqspace::DistVec;

inline constexpr double kPivotTol = 1e-10;
inline constexpr double kSolveTol = 1e-7;
inline constexpr long kMaxPivots = 1'000'000;

enum class SolveStatus { optimal, infeasible, unbounded };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
  }
  return "?";
}

// maximize objective·x subject to rows[i]·x <= row_bounds[i] and
// lower <= x <= upper.  Labels are carried for diagnostics only.
struct LinearProgram {
  DistVec objective;
  std::vector<DistVec> rows;
  DistVec row_bounds;
  DistVec lower, upper;
  std::vector<std::string> row_labels;
  std::vector<std::string> var_labels;

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  void add_row(DistVec coeffs, double bound, std::string label = {}) {
    internal_check(coeffs.size() == objective.size(), "LinearProgram: row width mismatch");
    rows.push_back(std::move(coeffs));
    row_bounds.push_back(bound);
    row_labels.push_back(std::move(label));
  }
};

struct SimplexResult {
  SolveStatus status = SolveStatus::optimal;
  double value = 0.0;
  DistVec solution;  // empty unless optimal
};

namespace detail {

// Core simplex on standard form: maximize c·x, A x <= b, x >= 0.  Negative
// entries of b get a phase-1 artificial variable.
inline SimplexResult solve_standard(const std::vector<DistVec>& a, const DistVec& b,
                                    const DistVec& c) {
  const int n = static_cast<int>(c.size());
  int m = static_cast<int>(a.size());
  int n_art = 0;
  for (double v : b)
    if (v < 0.0) ++n_art;
  const int total = n + m + n_art;

  std::vector<DistVec> t(static_cast<std::size_t>(m), DistVec(static_cast<std::size_t>(total) + 1, 0.0));
  std::vector<int> basis(static_cast<std::size_t>(m));
  {
    int art = n + m;
    for (int i = 0; i < m; ++i) {
      double sign = b[i] < 0.0 ? -1.0 : 1.0;
      for (int j = 0; j < n; ++j) t[i][j] = sign * a[i][j];
      t[i][n + i] = sign;
      t[i][total] = sign * b[i];
      if (b[i] < 0.0) {
        t[i][art] = 1.0;
        basis[i] = art++;
      } else {
        basis[i] = n + i;
      }
    }
  }

  long pivots = 0;
  auto pivot = [&](int row, int col) {
    double piv = t[row][col];
    for (double& v : t[row]) v /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      double f = t[i][col];
      if (f == 0.0) continue;
      for (int j = 0; j <= total; ++j) t[i][j] -= f * t[row][j];
      t[i][col] = 0.0;
    }
    basis[row] = col;
    if (++pivots > kMaxPivots) throw InternalError("simplex: iteration limit hit");
  };

  // Bland: entering = lowest eligible column, leaving = min ratio with lowest
  // basis index on ties.  cost(j) defines the phase objective; limit is one
  // past the last admissible entering column.
  auto run_phase = [&](auto&& cost, int limit) {
    while (true) {
      int enter = -1;
      for (int j = 0; j < limit && enter < 0; ++j) {
        double rc = cost(j);
        for (int i = 0; i < m; ++i) rc -= cost(basis[i]) * t[i][j];
        if (rc > kPivotTol) enter = j;
      }
      if (enter < 0) return;
      int leave = -1;
      double best = 0.0;
      for (int i = 0; i < m; ++i) {
        if (t[i][enter] <= kPivotTol) continue;
        double ratio = t[i][total] / t[i][enter];
        if (leave < 0 || ratio < best - kPivotTol ||
            (ratio < best + kPivotTol && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave < 0) throw InternalError("simplex: unbounded phase ray");
      pivot(leave, enter);
    }
  };

  if (n_art > 0) {
    auto phase1_cost = [&](int j) { return j >= n + m ? -1.0 : 0.0; };
    run_phase(phase1_cost, total);
    double infeas = 0.0;
    for (int i = 0; i < m; ++i)
      if (basis[i] >= n + m) infeas += t[i][total];
    if (infeas > kSolveTol) return {SolveStatus::infeasible, 0.0, {}};
    // drive leftover zero-level artificials out; drop rows that are redundant
    for (int i = m - 1; i >= 0; --i) {
      if (basis[i] < n + m) continue;
      int col = -1;
      for (int j = 0; j < n + m && col < 0; ++j)
        if (std::abs(t[i][j]) > kPivotTol) col = j;
      if (col >= 0) {
        pivot(i, col);
      } else {
        t.erase(t.begin() + i);
        basis.erase(basis.begin() + i);
        --m;
      }
    }
  }

  auto phase2_cost = [&](int j) { return j < n ? c[j] : 0.0; };
  {
    // re-run with a real unboundedness verdict
    long guard = 0;
    while (true) {
      int enter = -1;
      for (int j = 0; j < n + m && enter < 0; ++j) {
        double rc = phase2_cost(j);
        for (int i = 0; i < m; ++i) rc -= phase2_cost(basis[i]) * t[i][j];
        if (rc > kPivotTol) enter = j;
      }
      if (enter < 0) break;
      int leave = -1;
      double best = 0.0;
      for (int i = 0; i < m; ++i) {
        if (t[i][enter] <= kPivotTol) continue;
        double ratio = t[i][total] / t[i][enter];
        if (leave < 0 || ratio < best - kPivotTol ||
            (ratio < best + kPivotTol && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave < 0) return {SolveStatus::unbounded, 0.0, {}};
      pivot(leave, enter);
      if (++guard > kMaxPivots) throw InternalError("simplex: iteration limit hit");
    }
  }

  SimplexResult out;
  out.status = SolveStatus::optimal;
  out.solution.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) out.solution[basis[i]] = t[i][total];
  out.value = 0.0;
  for (int j = 0; j < n; ++j) out.value += c[j] * out.solution[j];
  return out;
}

}  // namespace detail

inline SimplexResult simplex_solve(const LinearProgram& lp) {
  const int n = lp.num_vars();
  if (static_cast<int>(lp.lower.size()) != n || static_cast<int>(lp.upper.size()) != n)
    throw InputError("simplex_solve: bound vectors must match variable count");
  if (lp.row_bounds.size() != lp.rows.size())
    throw InputError("simplex_solve: row bound count mismatch");
  for (const DistVec& row : lp.rows)
    if (static_cast<int>(row.size()) != n) throw InputError("simplex_solve: row width mismatch");
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(lp.lower[j])) throw InputError("simplex_solve: lower bounds must be finite");
    if (lp.lower[j] > lp.upper[j]) return {SolveStatus::infeasible, 0.0, {}};
  }

  // substitute fixed variables, shift the rest to zero lower bounds
  std::vector<int> free_idx;
  for (int j = 0; j < n; ++j)
    if (lp.upper[j] - lp.lower[j] > 0.0) free_idx.push_back(j);
  const int nf = static_cast<int>(free_idx.size());

  double constant = 0.0;
  for (int j = 0; j < n; ++j) constant += lp.objective[j] * lp.lower[j];

  DistVec c(static_cast<std::size_t>(nf));
  for (int k = 0; k < nf; ++k) c[k] = lp.objective[free_idx[k]];

  std::vector<DistVec> rows;
  DistVec bounds;
  rows.reserve(lp.rows.size() + free_idx.size());
  for (std::size_t r = 0; r < lp.rows.size(); ++r) {
    DistVec row(static_cast<std::size_t>(nf));
    double shift = 0.0;
    for (int j = 0; j < n; ++j) shift += lp.rows[r][j] * lp.lower[j];
    for (int k = 0; k < nf; ++k) row[k] = lp.rows[r][free_idx[k]];
    rows.push_back(std::move(row));
    bounds.push_back(lp.row_bounds[r] - shift);
  }
  for (int k = 0; k < nf; ++k) {
    int j = free_idx[k];
    if (!std::isfinite(lp.upper[j])) continue;
    DistVec row(static_cast<std::size_t>(nf), 0.0);
    row[k] = 1.0;
    rows.push_back(std::move(row));
    bounds.push_back(lp.upper[j] - lp.lower[j]);
  }

  SimplexResult core = detail::solve_standard(rows, bounds, c);
  if (core.status != SolveStatus::optimal) return core;

  SimplexResult out;
  out.status = SolveStatus::optimal;
  out.value = core.value + constant;
  out.solution.assign(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) out.solution[j] = lp.lower[j];
  for (int k = 0; k < nf; ++k) out.solution[free_idx[k]] += core.solution[k];
  return out;
}

// Plain-text rendering: objective, rows, bounds.  Meant for --dump-lp style
// inspection, not for machine parsing.
inline std::string dump_lp(const LinearProgram& lp) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string out = "maximize:";
  for (double v : lp.objective) out += " " + num(v);
  out += "\nsubject to:\n";
  for (std::size_t r = 0; r < lp.rows.size(); ++r) {
    out += "  ";
    if (r < lp.row_labels.size() && !lp.row_labels[r].empty()) out += lp.row_labels[r] + ": ";
    for (double v : lp.rows[r]) out += num(v) + " ";
    out += "<= " + num(lp.row_bounds[r]) + "\n";
  }
  out += "bounds:\n";
  for (int j = 0; j < lp.num_vars(); ++j) {
    out += "  x" + std::to_string(j);
    if (j < static_cast<int>(lp.var_labels.size()) && !lp.var_labels[j].empty())
      out += " (" + lp.var_labels[j] + ")";
    out += " in [" + num(lp.lower[j]) + ", " + num(lp.upper[j]) + "]\n";
  }
  return out;
}

}  // namespace specverify::lp
