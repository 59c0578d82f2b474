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

#ifndef CVRO_LINEAR_MODEL_HPP_
#define CVRO_LINEAR_MODEL_HPP_

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cvro {

enum class Sense { kLessEqual, kGreaterEqual, kEqual };

template <typename Scalar>
struct LinearTerm {
  int var = 0;
  Scalar coef = 0;
};

// A minimization problem over bounded (optionally binary) variables with
// linear rows. Rows are stored sparsely; solvers expand them into dense
// Eigen matrices.
template <typename Scalar>
class LinearModel {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  static constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

  struct Variable {
    std::string name;
    Scalar lower = 0;
    Scalar upper = kInf;
    bool binary = false;
    Scalar cost = 0;
  };

  struct Row {
    std::string name;
    std::vector<LinearTerm<Scalar>> terms;
    Sense sense = Sense::kLessEqual;
    Scalar rhs = 0;
  };

  int add_variable(std::string name, Scalar lower, Scalar upper,
                   Scalar cost = 0) {
    if (!(lower <= upper) || std::isnan(cost) || std::isinf(cost)) {
      throw std::invalid_argument("variable '" + name +
                                  "' has inconsistent bounds or cost");
    }
    variables_.push_back({std::move(name), lower, upper, false, cost});
    return static_cast<int>(variables_.size()) - 1;
  }

  int add_binary(std::string name, Scalar cost = 0) {
    const int index = add_variable(std::move(name), 0, 1, cost);
    variables_[index].binary = true;
    return index;
  }

  int add_row(std::string name, std::vector<LinearTerm<Scalar>> terms,
              Sense sense, Scalar rhs) {
    for (const auto& term : terms) {
      if (term.var < 0 || term.var >= num_variables() ||
          !std::isfinite(term.coef)) {
        throw std::invalid_argument("row '" + name + "' has a bad term");
      }
    }
    if (!std::isfinite(rhs)) {
      throw std::invalid_argument("row '" + name + "' has a non-finite rhs");
    }
    rows_.push_back({std::move(name), std::move(terms), sense, rhs});
    return static_cast<int>(rows_.size()) - 1;
  }

  void set_cost(int var, Scalar cost) { variables_.at(var).cost = cost; }
  void set_bounds(int var, Scalar lower, Scalar upper) {
    variables_.at(var).lower = lower;
    variables_.at(var).upper = upper;
  }
  void set_objective_offset(Scalar offset) { objective_offset_ = offset; }

  int num_variables() const { return static_cast<int>(variables_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  int num_binaries() const {
    int count = 0;
    for (const auto& v : variables_) count += v.binary ? 1 : 0;
    return count;
  }

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Row>& rows() const { return rows_; }
  const Variable& variable(int i) const { return variables_.at(i); }
  const Row& row(int i) const { return rows_.at(i); }
  Scalar objective_offset() const { return objective_offset_; }

  Matrix dense_matrix() const {
    Matrix a = Matrix::Zero(num_rows(), num_variables());
    for (int i = 0; i < num_rows(); ++i) {
      for (const auto& term : rows_[i].terms) a(i, term.var) += term.coef;
    }
    return a;
  }

  Vector costs() const {
    Vector c(num_variables());
    for (int j = 0; j < num_variables(); ++j) c(j) = variables_[j].cost;
    return c;
  }
  Vector lower_bounds() const {
    Vector l(num_variables());
    for (int j = 0; j < num_variables(); ++j) l(j) = variables_[j].lower;
    return l;
  }
  Vector upper_bounds() const {
    Vector u(num_variables());
    for (int j = 0; j < num_variables(); ++j) u(j) = variables_[j].upper;
    return u;
  }

  // Row activity interval [row_lower, row_upper] implied by sense and rhs.
  Scalar row_lower(int i) const {
    return rows_[i].sense == Sense::kLessEqual ? -kInf : rows_[i].rhs;
  }
  Scalar row_upper(int i) const {
    return rows_[i].sense == Sense::kGreaterEqual ? kInf : rows_[i].rhs;
  }

  Scalar objective(const Vector& x) const {
    return costs().dot(x) + objective_offset_;
  }

  Scalar row_activity(int i, const Vector& x) const {
    Scalar sum = 0;
    for (const auto& term : rows_[i].terms) sum += term.coef * x(term.var);
    return sum;
  }

  // Largest violation of any bound, row or integrality requirement.
  Scalar max_violation(const Vector& x) const {
    Scalar worst = 0;
    for (int j = 0; j < num_variables(); ++j) {
      worst = std::max(worst, variables_[j].lower - x(j));
      worst = std::max(worst, x(j) - variables_[j].upper);
      if (variables_[j].binary) {
        worst = std::max(worst, std::abs(x(j) - std::round(x(j))));
      }
    }
    for (int i = 0; i < num_rows(); ++i) {
      const Scalar act = row_activity(i, x);
      worst = std::max(worst, row_lower(i) - act);
      worst = std::max(worst, act - row_upper(i));
    }
    return worst;
  }

 private:
  std::vector<Variable> variables_;
  std::vector<Row> rows_;
  Scalar objective_offset_ = 0;
};

// LP-format text (CPLEX flavour) with deterministic ordering and fixed
// precision, so two dumps of the same model are byte-identical.
std::string to_lp_text(const LinearModel<double>& model);

}  // namespace cvro

#endif  // CVRO_LINEAR_MODEL_HPP_
