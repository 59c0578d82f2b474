// Copyright 2026 The cvro Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense bounded-variable primal simplex.
//
// Every row i of the model is rewritten as  a_i x - r_i = 0  where the row
// variable r_i carries the row's activity bounds. Rows whose activity at the
// starting point violates those bounds get an artificial column; phase one
// drives the artificials to zero, phase two optimizes the real costs. The
// tableau B^{-1} [A | -I | artificials] is kept explicitly and refactored
// from the original columns every `refactor_interval` pivots.

#ifndef CVRO_SIMPLEX_HPP_
#define CVRO_SIMPLEX_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cvro/linear_model.hpp"

namespace cvro {

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

const char* to_string(SolveStatus status);

struct SimplexOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-7;
  double pivot_tol = 1e-9;
  // Consecutive degenerate pivots before switching to Bland's rule.
  int bland_after_stalls = 200;
  std::int64_t max_pivots = 1'000'000;
  int refactor_interval = 100;
};

template <typename Scalar>
struct LpSolution {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  SolveStatus status = SolveStatus::kInfeasible;
  Scalar objective = 0;
  Vector x;
  std::int64_t pivots = 0;
};

template <typename Scalar>
class BoundedSimplex {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit BoundedSimplex(const LinearModel<Scalar>& model,
                          SimplexOptions options = {})
      : model_(model),
        options_(options),
        m_(model.num_rows()),
        n_(model.num_variables()),
        total_(n_ + 2 * m_) {
    full_ = Matrix::Zero(m_, total_);
    full_.leftCols(n_) = model.dense_matrix();
    full_.middleCols(n_, m_) = -Matrix::Identity(m_, m_);
    costs_ = model.costs();
    row_lower_.resize(m_);
    row_upper_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      row_lower_(i) = model.row_lower(i);
      row_upper_(i) = model.row_upper(i);
    }
  }

  LpSolution<Scalar> solve() {
    return solve(model_.lower_bounds(), model_.upper_bounds());
  }

  // Solves with the structural bounds replaced by [lower, upper].
  LpSolution<Scalar> solve(const Vector& lower, const Vector& upper) {
    LpSolution<Scalar> out;
    pivots_ = 0;
    for (int j = 0; j < n_; ++j) {
      if (lower(j) > upper(j) + Scalar(options_.feasibility_tol)) {
        out.status = SolveStatus::kInfeasible;
        return out;
      }
    }
    initialize(lower, upper);

    Vector phase_one_cost = Vector::Zero(total_);
    phase_one_cost.tail(m_).setOnes();
    SolveStatus status = iterate(phase_one_cost);
    if (status == SolveStatus::kIterationLimit) {
      out.status = status;
      out.pivots = pivots_;
      return out;
    }
    if (x_.tail(m_).sum() > Scalar(options_.feasibility_tol) * (1 + m_)) {
      out.status = SolveStatus::kInfeasible;
      out.pivots = pivots_;
      return out;
    }
    retire_artificials();

    Vector phase_two_cost = Vector::Zero(total_);
    phase_two_cost.head(n_) = costs_;
    // A final refactor catches drift; if the check still fails we iterate
    // once more from the refreshed tableau.
    for (int attempt = 0; attempt < 3; ++attempt) {
      status = iterate(phase_two_cost);
      if (status != SolveStatus::kOptimal || drift() <= Scalar(options_.feasibility_tol)) break;
      refactor();
      if (primal_violation() <= Scalar(options_.feasibility_tol)) break;
    }
    out.status = status;
    out.pivots = pivots_;
    if (status == SolveStatus::kOptimal) {
      out.x = x_.head(n_);
      // Snap values that sit within tolerance of a bound onto it.
      for (int j = 0; j < n_; ++j) {
        if (std::isfinite(lower_(j)) &&
            std::abs(out.x(j) - lower_(j)) <= Scalar(1e-12) * (1 + std::abs(lower_(j))))
          out.x(j) = lower_(j);
        if (std::isfinite(upper_(j)) &&
            std::abs(out.x(j) - upper_(j)) <= Scalar(1e-12) * (1 + std::abs(upper_(j))))
          out.x(j) = upper_(j);
      }
      out.objective = costs_.dot(out.x) + model_.objective_offset();
    }
    return out;
  }

 private:
  enum class Status : std::uint8_t { kBasic, kAtLower, kAtUpper, kFree };

  static constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

  void initialize(const Vector& lower, const Vector& upper) {
    lower_.resize(total_);
    upper_.resize(total_);
    lower_.head(n_) = lower;
    upper_.head(n_) = upper;
    lower_.segment(n_, m_) = row_lower_;
    upper_.segment(n_, m_) = row_upper_;
    lower_.tail(m_).setZero();
    upper_.tail(m_).setConstant(kInf);

    x_ = Vector::Zero(total_);
    status_.assign(total_, Status::kAtLower);
    for (int j = 0; j < n_; ++j) place_at_bound(j);

    const Vector activity = full_.leftCols(n_) * x_.head(n_);
    basis_.assign(m_, 0);
    full_.rightCols(m_).setZero();
    for (int i = 0; i < m_; ++i) {
      const int row_var = n_ + i;
      const int art = n_ + m_ + i;
      const Scalar act = activity(i);
      if (act >= row_lower_(i) - Scalar(options_.feasibility_tol) &&
          act <= row_upper_(i) + Scalar(options_.feasibility_tol)) {
        basis_[i] = row_var;
        status_[row_var] = Status::kBasic;
        x_(row_var) = act;
        full_(i, art) = 1;
        status_[art] = Status::kAtLower;
        upper_(art) = 0;
        x_(art) = 0;
      } else {
        const Scalar target = act > row_upper_(i) ? row_upper_(i) : row_lower_(i);
        x_(row_var) = target;
        status_[row_var] = act > row_upper_(i) ? Status::kAtUpper : Status::kAtLower;
        // a_i x - r_i + sigma * art = 0 with art = (r_i - a_i x) / sigma > 0.
        const Scalar sigma = target - act > 0 ? Scalar(1) : Scalar(-1);
        full_(i, art) = sigma;
        basis_[i] = art;
        status_[art] = Status::kBasic;
        x_(art) = (target - act) / sigma;
      }
    }
    refactor();
  }

  void place_at_bound(int j) {
    if (std::isfinite(lower_(j))) {
      x_(j) = lower_(j);
      status_[j] = Status::kAtLower;
    } else if (std::isfinite(upper_(j))) {
      x_(j) = upper_(j);
      status_[j] = Status::kAtUpper;
    } else {
      x_(j) = 0;
      status_[j] = Status::kFree;
    }
  }

  // Recomputes the tableau from the original columns and the basic values
  // from the nonbasic ones.
  void refactor() {
    since_refactor_ = 0;
    bool diagonal = true;
    for (int i = 0; i < m_ && diagonal; ++i) {
      diagonal = basis_[i] == n_ + i || basis_[i] == n_ + m_ + i;
    }
    if (diagonal) {
      // Slack and artificial columns are signed unit vectors.
      tableau_ = full_;
      for (int i = 0; i < m_; ++i) {
        tableau_.row(i) /= full_(i, basis_[i]);
        x_(basis_[i]) = 0;
      }
      const Vector basic = -(tableau_ * x_);
      for (int i = 0; i < m_; ++i) x_(basis_[i]) = basic(i);
      update_reduced_costs();
      return;
    }
    Matrix basis_cols(m_, m_);
    for (int i = 0; i < m_; ++i) basis_cols.col(i) = full_.col(basis_[i]);
    Eigen::PartialPivLU<Matrix> lu(basis_cols);
    tableau_ = lu.solve(full_);
    Vector nonbasic = x_;
    for (int i = 0; i < m_; ++i) nonbasic(basis_[i]) = 0;
    const Vector basic = -(tableau_ * nonbasic);
    for (int i = 0; i < m_; ++i) x_(basis_[i]) = basic(i);
    update_reduced_costs();
  }

  // Largest bound violation or residual of the original rows at x_.
  Scalar drift() const {
    const Scalar residual = m_ == 0 ? Scalar(0) : (full_ * x_).cwiseAbs().maxCoeff();
    Scalar worst = residual;
    for (int j = 0; j < total_; ++j) {
      worst = std::max({worst, lower_(j) - x_(j), x_(j) - upper_(j)});
    }
    return worst;
  }

  Scalar primal_violation() const {
    Scalar worst = 0;
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[i];
      worst = std::max(worst, lower_(b) - x_(b));
      worst = std::max(worst, x_(b) - upper_(b));
    }
    return worst;
  }

  SolveStatus iterate(const Vector& cost) {
    int stalls = 0;
    const Scalar opt_tol = Scalar(options_.optimality_tol);
    const Scalar piv_tol = Scalar(options_.pivot_tol);
    cost_ = &cost;
    update_reduced_costs();
    struct Release {
      const Vector*& cost;
      ~Release() { cost = nullptr; }
    } release{cost_};
    for (;;) {
      if (pivots_ >= options_.max_pivots) return SolveStatus::kIterationLimit;
      const bool bland = stalls >= options_.bland_after_stalls;
      const Vector& reduced = reduced_;

      int entering = -1;
      Scalar direction = 0;
      Scalar best = 0;
      for (int j = 0; j < total_; ++j) {
        const Status s = status_[j];
        if (s == Status::kBasic) continue;
        if (!(upper_(j) > lower_(j)) && s != Status::kFree) continue;
        const Scalar d = reduced(j);
        Scalar dir = 0;
        if ((s == Status::kAtLower || s == Status::kFree) && d < -opt_tol) dir = 1;
        if ((s == Status::kAtUpper || s == Status::kFree) && d > opt_tol) dir = -1;
        if (dir == 0) continue;
        if (bland) {
          entering = j;
          direction = dir;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          entering = j;
          direction = dir;
        }
      }
      if (entering < 0) return SolveStatus::kOptimal;

      // Ratio test: the entering variable moves by direction * theta.
      Scalar theta = upper_(entering) - lower_(entering);
      int leaving_row = -1;
      bool leaving_to_upper = false;
      Scalar leaving_pivot = 0;
      for (int i = 0; i < m_; ++i) {
        const Scalar alpha = direction * tableau_(i, entering);
        if (std::abs(alpha) <= piv_tol) continue;
        const int b = basis_[i];
        // x_b changes by -alpha * theta.
        Scalar limit;
        bool to_upper;
        if (alpha > 0) {
          if (!std::isfinite(lower_(b))) continue;
          limit = (x_(b) - lower_(b)) / alpha;
          to_upper = false;
        } else {
          if (!std::isfinite(upper_(b))) continue;
          limit = (upper_(b) - x_(b)) / (-alpha);
          to_upper = true;
        }
        limit = std::max(limit, Scalar(0));
        bool take = false;
        if (leaving_row < 0) {
          take = limit <= theta;
        } else if (limit < theta - Scalar(1e-12)) {
          take = true;
        } else if (limit <= theta + Scalar(1e-12)) {
          take = bland ? b < basis_[leaving_row]
                       : std::abs(alpha) > std::abs(leaving_pivot);
        }
        if (take) {
          theta = std::min(theta, limit);
          leaving_row = i;
          leaving_to_upper = to_upper;
          leaving_pivot = alpha;
        }
      }
      if (!std::isfinite(theta)) return SolveStatus::kUnbounded;

      ++pivots_;
      stalls = theta <= Scalar(1e-12) ? stalls + 1 : 0;
      x_(entering) += direction * theta;
      for (int i = 0; i < m_; ++i) {
        x_(basis_[i]) -= direction * theta * tableau_(i, entering);
      }
      if (leaving_row < 0) {
        // Bound flip; the basis is unchanged.
        status_[entering] = direction > 0 ? Status::kAtUpper : Status::kAtLower;
        x_(entering) = direction > 0 ? upper_(entering) : lower_(entering);
        continue;
      }
      const int leaving = basis_[leaving_row];
      x_(leaving) = leaving_to_upper ? upper_(leaving) : lower_(leaving);
      status_[leaving] = leaving_to_upper ? Status::kAtUpper : Status::kAtLower;
      pivot(leaving_row, entering);
      if (++since_refactor_ >= options_.refactor_interval) refactor();
    }
  }

  void update_reduced_costs() {
    if (cost_ == nullptr) return;
    Vector basic_cost(m_);
    for (int i = 0; i < m_; ++i) basic_cost(i) = (*cost_)(basis_[i]);
    reduced_ = *cost_ - tableau_.transpose() * basic_cost;
  }

  void pivot(int row, int col) {
    const Scalar p = tableau_(row, col);
    tableau_.row(row) /= p;
    const Vector column = tableau_.col(col);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pivot_row = tableau_.row(row);
    for (int i = 0; i < m_; ++i) {
      if (i == row || column(i) == Scalar(0)) continue;
      tableau_.row(i).noalias() -= column(i) * pivot_row;
    }
    if (cost_ != nullptr) {
      reduced_.transpose() -= reduced_(col) * pivot_row;
      reduced_(col) = 0;
    }
    basis_[row] = col;
    status_[col] = Status::kBasic;
  }

  // After phase one: fix artificials at zero and pivot basic ones out.
  void retire_artificials() {
    bool pivoted = false;
    for (int k = 0; k < m_; ++k) {
      const int art = n_ + m_ + k;
      upper_(art) = 0;
      if (status_[art] != Status::kBasic) {
        x_(art) = 0;
        status_[art] = Status::kAtLower;
      }
    }
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[i];
      if (b < n_ + m_) continue;
      int best_col = -1;
      Scalar best_abs = Scalar(options_.pivot_tol) * 100;
      for (int j = 0; j < n_ + m_; ++j) {
        if (status_[j] == Status::kBasic) continue;
        if (std::abs(tableau_(i, j)) > best_abs) {
          best_abs = std::abs(tableau_(i, j));
          best_col = j;
        }
      }
      if (best_col < 0) continue;  // redundant row; artificial stays at 0
      x_(b) = 0;
      status_[b] = Status::kAtLower;
      pivot(i, best_col);
      pivoted = true;
    }
    if (pivoted) refactor();
  }

  const LinearModel<Scalar>& model_;
  SimplexOptions options_;
  int m_;
  int n_;
  int total_;
  Matrix full_;
  Matrix tableau_;
  Vector costs_;
  Vector row_lower_;
  Vector row_upper_;
  Vector lower_;
  Vector upper_;
  Vector x_;
  std::vector<Status> status_;
  std::vector<int> basis_;
  Vector reduced_;
  const Vector* cost_ = nullptr;  // set while iterating
  std::int64_t pivots_ = 0;
  int since_refactor_ = 0;
};

template <typename Scalar>
LpSolution<Scalar> solve_lp(const LinearModel<Scalar>& model,
                            SimplexOptions options = {}) {
  BoundedSimplex<Scalar> simplex(model, options);
  return simplex.solve();
}

}  // namespace cvro

#endif  // CVRO_SIMPLEX_HPP_
