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

#ifndef CVRO_BRANCH_AND_BOUND_HPP_
#define CVRO_BRANCH_AND_BOUND_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvro/linear_model.hpp"
#include "cvro/simplex.hpp"

namespace cvro {

struct MilpOptions {
  SimplexOptions lp;
  double integrality_tol = 1e-6;
  double gap_abs = 1e-9;
  double gap_rel = 1e-9;
  std::int64_t max_nodes = 2'000'000;
  bool propagate = true;
};

template <typename Scalar>
struct MilpSolution {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  SolveStatus status = SolveStatus::kInfeasible;
  Scalar objective = 0;
  Vector x;
  std::int64_t nodes = 0;
  std::int64_t pivots = 0;
};

// Activity-based bound tightening over every row, with integer rounding of
// binary bounds. Tightened continuous bounds are relaxed by a hair so that
// roundoff never cuts off a feasible point. Returns false when some domain
// becomes empty.
template <typename Scalar>
bool propagate_bounds(const LinearModel<Scalar>& model,
                      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lower,
                      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& upper,
                      Scalar integrality_tol, int max_passes = 8) {
  const Scalar slack = Scalar(1e-9);
  for (int pass = 0; pass < max_passes; ++pass) {
    bool changed = false;
    for (int r = 0; r < model.num_rows(); ++r) {
      const auto& row = model.row(r);
      Scalar min_act = 0, max_act = 0;
      int min_inf = 0, max_inf = 0;
      for (const auto& t : row.terms) {
        const Scalar lo = t.coef > 0 ? lower(t.var) : upper(t.var);
        const Scalar hi = t.coef > 0 ? upper(t.var) : lower(t.var);
        if (std::isinf(lo)) ++min_inf; else min_act += t.coef * lo;
        if (std::isinf(hi)) ++max_inf; else max_act += t.coef * hi;
      }
      const Scalar row_hi = model.row_upper(r);
      const Scalar row_lo = model.row_lower(r);
      const Scalar scale = 1 + std::abs(row.rhs);
      if (min_inf == 0 && min_act > row_hi + Scalar(1e-7) * scale) return false;
      if (max_inf == 0 && max_act < row_lo - Scalar(1e-7) * scale) return false;

      for (const auto& t : row.terms) {
        const int j = t.var;
        const Scalar a = t.coef;
        const Scalar own_lo = a > 0 ? lower(j) : upper(j);
        const Scalar own_hi = a > 0 ? upper(j) : lower(j);
        Scalar new_lo = lower(j), new_hi = upper(j);
        // a x_j <= row_hi - (min activity of the other terms)
        if (std::isfinite(row_hi)) {
          const bool own_inf = std::isinf(own_lo);
          if (min_inf - (own_inf ? 1 : 0) == 0) {
            const Scalar rest = min_act - (own_inf ? 0 : a * own_lo);
            const Scalar bound = (row_hi - rest) / a;
            if (a > 0) new_hi = std::min(new_hi, bound);
            else new_lo = std::max(new_lo, bound);
          }
        }
        // a x_j >= row_lo - (max activity of the other terms)
        if (std::isfinite(row_lo)) {
          const bool own_inf = std::isinf(own_hi);
          if (max_inf - (own_inf ? 1 : 0) == 0) {
            const Scalar rest = max_act - (own_inf ? 0 : a * own_hi);
            const Scalar bound = (row_lo - rest) / a;
            if (a > 0) new_lo = std::max(new_lo, bound);
            else new_hi = std::min(new_hi, bound);
          }
        }
        if (model.variable(j).binary) {
          new_lo = std::ceil(new_lo - integrality_tol);
          new_hi = std::floor(new_hi + integrality_tol);
          new_lo = std::max(new_lo, Scalar(0));
          new_hi = std::min(new_hi, Scalar(1));
        } else {
          new_lo -= slack * (1 + std::abs(new_lo));
          new_hi += slack * (1 + std::abs(new_hi));
        }
        if (new_lo > lower(j) + Scalar(1e-7) * (1 + std::abs(new_lo))) {
          lower(j) = new_lo;
          changed = true;
        }
        if (new_hi < upper(j) - Scalar(1e-7) * (1 + std::abs(new_hi))) {
          upper(j) = new_hi;
          changed = true;
        }
        if (lower(j) > upper(j) + Scalar(1e-7) * (1 + std::abs(upper(j)))) {
          return false;
        }
        if (lower(j) > upper(j)) lower(j) = upper(j);
      }
    }
    if (!changed) break;
  }
  return true;
}

// Best-first branch-and-bound over the binary variables. Branches on the
// most fractional binary (ties to the lowest index); nodes are ordered by
// parent LP bound, ties by creation order, so the search is deterministic.
template <typename Scalar>
MilpSolution<Scalar> solve_milp(const LinearModel<Scalar>& model,
                                const MilpOptions& options = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

  struct Node {
    Scalar bound;
    std::int64_t id;
    Vector lower;
    Vector upper;
  };
  struct Worse {
    bool operator()(const Node& a, const Node& b) const {
      if (a.bound != b.bound) return a.bound > b.bound;
      return a.id > b.id;
    }
  };

  MilpSolution<Scalar> out;
  BoundedSimplex<Scalar> simplex(model, options.lp);
  std::priority_queue<Node, std::vector<Node>, Worse> frontier;
  std::int64_t next_id = 0;
  frontier.push({-kInf, next_id++, model.lower_bounds(), model.upper_bounds()});

  Scalar incumbent = kInf;
  Vector best_x;
  bool hit_limit = false;

  auto pruned = [&](Scalar bound) {
    if (!std::isfinite(incumbent)) return false;
    const Scalar tol = std::max(Scalar(options.gap_abs),
                                Scalar(options.gap_rel) * std::abs(incumbent));
    return bound >= incumbent - tol;
  };

  while (!frontier.empty()) {
    Node node = frontier.top();
    frontier.pop();
    if (pruned(node.bound)) continue;
    if (out.nodes >= options.max_nodes) {
      hit_limit = true;
      break;
    }
    ++out.nodes;
    if (options.propagate &&
        !propagate_bounds(model, node.lower, node.upper,
                          Scalar(options.integrality_tol))) {
      continue;
    }
    const LpSolution<Scalar> lp = simplex.solve(node.lower, node.upper);
    out.pivots += lp.pivots;
    if (lp.status == SolveStatus::kIterationLimit) {
      hit_limit = true;
      break;
    }
    if (lp.status == SolveStatus::kUnbounded) {
      out.status = SolveStatus::kUnbounded;
      return out;
    }
    if (lp.status != SolveStatus::kOptimal) continue;
    if (pruned(lp.objective)) continue;

    int branch_var = -1;
    Scalar best_frac = Scalar(options.integrality_tol);
    for (int j = 0; j < model.num_variables(); ++j) {
      if (!model.variable(j).binary) continue;
      const Scalar frac = std::abs(lp.x(j) - std::round(lp.x(j)));
      if (frac > best_frac + Scalar(1e-12)) {
        best_frac = frac;
        branch_var = j;
      }
    }
    if (branch_var < 0) {
      incumbent = lp.objective;
      best_x = lp.x;
      continue;
    }
    Node down{lp.objective, next_id++, node.lower, node.upper};
    down.upper(branch_var) = 0;
    Node up{lp.objective, next_id++, std::move(node.lower), std::move(node.upper)};
    up.lower(branch_var) = 1;
    frontier.push(std::move(down));
    frontier.push(std::move(up));
  }

  if (!std::isfinite(incumbent)) {
    out.status = hit_limit ? SolveStatus::kIterationLimit : SolveStatus::kInfeasible;
    return out;
  }

  // Polish: re-solve the LP with the binaries pinned to their rounded values.
  Vector lower = model.lower_bounds();
  Vector upper = model.upper_bounds();
  for (int j = 0; j < model.num_variables(); ++j) {
    if (!model.variable(j).binary) continue;
    lower(j) = upper(j) = std::round(best_x(j));
  }
  const LpSolution<Scalar> polished = simplex.solve(lower, upper);
  out.pivots += polished.pivots;
  if (polished.status == SolveStatus::kOptimal) {
    out.x = polished.x;
    out.objective = polished.objective;
  } else {
    out.x = best_x;
    for (int j = 0; j < model.num_variables(); ++j) {
      if (model.variable(j).binary) out.x(j) = std::round(out.x(j));
    }
    out.objective = model.objective(out.x);
  }
  out.status = hit_limit ? SolveStatus::kIterationLimit : SolveStatus::kOptimal;
  return out;
}

}  // namespace cvro

#endif  // CVRO_BRANCH_AND_BOUND_HPP_
