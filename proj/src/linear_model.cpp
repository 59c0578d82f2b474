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

#include "cvro/linear_model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "cvro/simplex.hpp"

namespace cvro {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "Optimal";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kUnbounded: return "Unbounded";
    case SolveStatus::kIterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

namespace {

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void append_term(std::ostringstream& os, double coef, const std::string& name,
                 bool first) {
  if (coef < 0) {
    os << (first ? "-" : " - ");
  } else if (!first) {
    os << " + ";
  }
  const double mag = std::abs(coef);
  if (mag != 1.0) os << number(mag) << ' ';
  os << name;
}

}  // namespace

std::string to_lp_text(const LinearModel<double>& model) {
  std::ostringstream os;
  os << "\\ cvro model: " << model.num_variables() << " variables, "
     << model.num_rows() << " rows, " << model.num_binaries() << " binaries\n";
  os << "Minimize\n obj: ";
  bool first = true;
  for (int j = 0; j < model.num_variables(); ++j) {
    const auto& v = model.variable(j);
    if (v.cost == 0.0) continue;
    append_term(os, v.cost, v.name, first);
    first = false;
  }
  if (model.objective_offset() != 0.0 || first) {
    os << (first ? "" : " + ") << number(model.objective_offset());
  }
  os << "\nSubject To\n";
  for (int i = 0; i < model.num_rows(); ++i) {
    const auto& row = model.row(i);
    os << ' ' << row.name << ": ";
    bool first_term = true;
    for (const auto& t : row.terms) {
      append_term(os, t.coef, model.variable(t.var).name, first_term);
      first_term = false;
    }
    if (first_term) os << "0";
    switch (row.sense) {
      case Sense::kLessEqual: os << " <= "; break;
      case Sense::kGreaterEqual: os << " >= "; break;
      case Sense::kEqual: os << " = "; break;
    }
    os << number(row.rhs) << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : model.variables()) {
    if (v.binary) continue;
    if (v.lower == v.upper) {
      os << ' ' << v.name << " = " << number(v.lower) << '\n';
    } else {
      os << ' ' << number(v.lower) << " <= " << v.name << " <= "
         << number(v.upper) << '\n';
    }
  }
  os << "Binaries\n";
  for (const auto& v : model.variables()) {
    if (v.binary) os << ' ' << v.name << '\n';
  }
  os << "End\n";
  return os.str();
}

}  // namespace cvro
