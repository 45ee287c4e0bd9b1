#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mixlab/errors.hpp"

namespace mixlab {

// Dense two-phase primal simplex.
//
// Solves  min c'x  s.t.  Ax (<=|=|>=) b, x >= 0.  Keeps the full tableau so
// duals fall out of the initial identity block and columns can be appended
// after a solve (the column-generation driver in geometry.hpp relies on
// both). Dantzig pricing with a Bland fallback for anti-cycling.
class Simplex {
 public:
  enum class Sense { LE, EQ, GE };

  int add_var(double cost) {
    costs_.push_back(cost);
    return static_cast<int>(costs_.size()) - 1;
  }

  int add_row(Sense sense, double rhs) {
    rows_.push_back({sense, rhs, {}});
    return static_cast<int>(rows_.size()) - 1;
  }

  void set_coeff(int row, int var, double v) {
    rows_[row].coeffs.emplace_back(var, v);
  }

  struct Result {
    double objective = 0.0;
    std::vector<double> x;
    std::vector<double> duals;  // one per row
  };

  Result solve() {
    build_tableau();
    phase1();
    phase2();
    return extract();
  }

  // Appends a structural column and re-optimizes from the current basis.
  // Returns false if the column priced out non-negative (nothing to do).
  bool add_column_and_reoptimize(double cost,
                                 const std::vector<std::pair<int, double>>& col) {
    int m = static_cast<int>(rows_.size());
    std::vector<double> raw(m, 0.0);
    for (auto [r, v] : col) raw[r] += v * row_scale_[r];
    // B^{-1} a via the initial identity block
    std::vector<double> tcol(m, 0.0);
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int r = 0; r < m; ++r) s += tab_[i][init_col_[r]] * raw[r];
      tcol[i] = s;
    }
    double rc = cost;
    for (int i = 0; i < m; ++i) rc -= costs_full_[basis_[i]] * tcol[i];
    costs_.push_back(cost);
    costs_full_.push_back(cost);
    structural_.push_back(true);
    banned_.push_back(false);
    artificial_.push_back(false);
    for (int i = 0; i < m; ++i) tab_[i].push_back(tcol[i]);
    drow_.push_back(rc);
    if (rc >= -tol_) return false;
    phase2();
    return true;
  }

  Result current() { return extract(); }

 private:
  struct Row {
    Sense sense;
    double rhs;
    std::vector<std::pair<int, double>> coeffs;
  };

  void build_tableau() {
    int m = static_cast<int>(rows_.size());
    int n = static_cast<int>(costs_.size());
    costs_full_ = costs_;
    structural_.assign(n, true);
    row_scale_.assign(m, 1.0);

    // slack / surplus columns
    std::vector<int> slack_col(m, -1);
    for (int r = 0; r < m; ++r) {
      if (rows_[r].rhs < 0) {  // normalize rhs >= 0
        row_scale_[r] = -1.0;
        rows_[r].rhs = -rows_[r].rhs;
        for (auto& [v, c] : rows_[r].coeffs) c = -c;
        if (rows_[r].sense == Sense::LE) rows_[r].sense = Sense::GE;
        else if (rows_[r].sense == Sense::GE) rows_[r].sense = Sense::LE;
      }
      if (rows_[r].sense != Sense::EQ) {
        slack_col[r] = static_cast<int>(costs_full_.size());
        costs_full_.push_back(0.0);
        structural_.push_back(false);
      }
    }
    // artificial columns where the slack cannot seed the basis
    std::vector<int> art_col(m, -1);
    for (int r = 0; r < m; ++r)
      if (rows_[r].sense != Sense::LE) {
        art_col[r] = static_cast<int>(costs_full_.size());
        costs_full_.push_back(0.0);
        structural_.push_back(false);
      }

    int total = static_cast<int>(costs_full_.size());
    tab_.assign(m, std::vector<double>(total, 0.0));
    rhs_.assign(m, 0.0);
    basis_.assign(m, -1);
    init_col_.assign(m, -1);
    banned_.assign(total, false);
    artificial_.assign(total, false);

    for (int r = 0; r < m; ++r) {
      for (auto [v, c] : rows_[r].coeffs) tab_[r][v] += c;
      rhs_[r] = rows_[r].rhs;
      if (slack_col[r] >= 0)
        tab_[r][slack_col[r]] = rows_[r].sense == Sense::LE ? 1.0 : -1.0;
      if (art_col[r] >= 0) {
        tab_[r][art_col[r]] = 1.0;
        artificial_[art_col[r]] = true;
        basis_[r] = art_col[r];
        init_col_[r] = art_col[r];
      } else {
        basis_[r] = slack_col[r];
        init_col_[r] = slack_col[r];
      }
    }
  }

  void compute_drow(const std::vector<double>& costs) {
    int m = static_cast<int>(rows_.size());
    int total = static_cast<int>(costs_full_.size());
    drow_.assign(total, 0.0);
    for (int j = 0; j < total; ++j) {
      double s = costs[j];
      for (int i = 0; i < m; ++i)
        if (costs[basis_[i]] != 0.0) s -= costs[basis_[i]] * tab_[i][j];
      drow_[j] = s;
    }
  }

  void pivot(int row, int col) {
    int m = static_cast<int>(rows_.size());
    int total = static_cast<int>(costs_full_.size());
    double piv = tab_[row][col];
    double inv = 1.0 / piv;
    for (int j = 0; j < total; ++j) tab_[row][j] *= inv;
    rhs_[row] *= inv;
    tab_[row][col] = 1.0;
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      double f = tab_[i][col];
      if (f == 0.0) continue;
      for (int j = 0; j < total; ++j) tab_[i][j] -= f * tab_[row][j];
      tab_[i][col] = 0.0;
      rhs_[i] -= f * rhs_[row];
      if (rhs_[i] < 0 && rhs_[i] > -1e-11) rhs_[i] = 0.0;
    }
    double f = drow_[col];
    if (f != 0.0) {
      for (int j = 0; j < total; ++j) drow_[j] -= f * tab_[row][j];
      drow_[col] = 0.0;
    }
    basis_[row] = col;
  }

  // Primal simplex iterations on the current drow_.
  void iterate(bool phase_one) {
    int m = static_cast<int>(rows_.size());
    int total = static_cast<int>(costs_full_.size());
    long iters = 0;
    const long bland_after = 2000 + 20l * (m + total);
    const long max_iters = 200000 + 200l * (m + total);
    for (;;) {
      if (++iters > max_iters)
        fail(ErrorKind::LPNumericFailure, "simplex iteration limit");
      bool bland = iters > bland_after;
      int enter = -1;
      double best = -tol_;
      for (int j = 0; j < total; ++j) {
        if (banned_[j]) continue;
        if (!phase_one && artificial_[j]) continue;
        if (drow_[j] < best) {
          best = drow_[j];
          enter = j;
          if (bland) break;
        }
      }
      if (enter < 0) return;  // optimal
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        double a = tab_[i][enter];
        if (a <= tol_) continue;
        double ratio = rhs_[i] / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && leave >= 0 &&
             basis_[i] < basis_[leave])) {
          best_ratio = ratio;
          leave = i;
        }
      }
      if (leave < 0)
        fail(ErrorKind::LPNumericFailure, "unbounded linear program");
      pivot(leave, enter);
    }
  }

  void phase1() {
    int m = static_cast<int>(rows_.size());
    bool any_art = false;
    for (int i = 0; i < m; ++i)
      if (artificial_[basis_[i]]) any_art = true;
    if (!any_art) {
      compute_drow(costs_full_);
      return;
    }
    std::vector<double> pcosts(costs_full_.size(), 0.0);
    for (size_t j = 0; j < pcosts.size(); ++j)
      if (artificial_[j]) pcosts[j] = 1.0;
    compute_drow(pcosts);
    iterate(true);
    double infeas = 0.0;
    for (int i = 0; i < m; ++i)
      if (artificial_[basis_[i]]) infeas += rhs_[i];
    if (infeas > 1e-7)
      fail(ErrorKind::LPNumericFailure, "infeasible linear program");
    // Drive artificials out of the basis where possible; ban them from
    // re-entering either way.
    for (int i = 0; i < m; ++i) {
      if (!artificial_[basis_[i]]) continue;
      int col = -1;
      for (size_t j = 0; j < costs_full_.size(); ++j)
        if (!artificial_[j] && std::fabs(tab_[i][j]) > 1e-8) {
          col = static_cast<int>(j);
          break;
        }
      if (col >= 0) pivot(i, col);
    }
    for (size_t j = 0; j < costs_full_.size(); ++j)
      if (artificial_[j]) banned_[j] = true;
    compute_drow(costs_full_);
  }

  void phase2() { iterate(false); }

  Result extract() {
    int m = static_cast<int>(rows_.size());
    Result res;
    res.x.assign(costs_.size(), 0.0);
    for (int i = 0; i < m; ++i)
      if (basis_[i] < static_cast<int>(costs_.size())) res.x[basis_[i]] = rhs_[i];
    res.objective = 0.0;
    for (size_t j = 0; j < res.x.size(); ++j) res.objective += costs_[j] * res.x[j];
    // dual of row r: reduced cost of its initial identity column, negated for
    // flipped rows, minus its own cost (zero for slacks and artificials)
    res.duals.assign(m, 0.0);
    for (int r = 0; r < m; ++r)
      res.duals[r] = -drow_[init_col_[r]] * row_scale_[r];
    return res;
  }

  std::vector<Row> rows_;
  std::vector<double> costs_;       // structural costs
  std::vector<double> costs_full_;  // including slacks/artificials
  std::vector<char> structural_;
  std::vector<char> artificial_;
  std::vector<char> banned_;
  std::vector<std::vector<double>> tab_;
  std::vector<double> rhs_;
  std::vector<double> drow_;
  std::vector<int> basis_;
  std::vector<int> init_col_;
  std::vector<double> row_scale_;
  double tol_ = 1e-9;
};

}  // namespace mixlab
