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

// Random timing instances and the checks every optimal solve must pass.

#ifndef CVRO_TESTS_SIGNAL_FIXTURES_HPP_
#define CVRO_TESTS_SIGNAL_FIXTURES_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cvro/signal_opt.hpp"

namespace cvro::testing {

// `movements` movements, one per stage, with `cvs_total` CV arrivals spread
// over them and box bounds drawn below saturation.
struct RandomTiming {
  OptimizationInstance inst;
  BoxUncertaintySet box;
};

inline RandomTiming random_timing(std::mt19937_64& rng, int movements, int cvs_total,
                                  ControlMode mode = ControlMode::kFixedTime) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RandomTiming out;
  OptimizationInstance& inst = out.inst;
  inst.mode = mode;
  inst.alpha = 20.0 + 200.0 * unit(rng);
  inst.phase.c_min = 40;
  inst.phase.c_max = 140;
  for (int k = 0; k < movements; ++k) {
    MovementParams m;
    m.movement_id = "m" + std::to_string(k + 1);
    m.h = 1.8 + 0.6 * unit(rng);
    m.yellow = 3.0 + std::round(unit(rng) * 2.0);
    m.startup_lost = 1.0 + 2.0 * unit(rng);
    m.yellow_lost = 0.5 + unit(rng);
    m.stage_index = k;
    inst.movements.push_back(m);
    inst.phase.stages.push_back({6.0 + std::round(8.0 * unit(rng)), {m.movement_id}});
    const double cap = 1.0 / m.h;
    const double lo = 0.5 * cap * unit(rng) / movements;
    const double hi = lo + (0.6 * cap / movements) * unit(rng);
    out.box.movements[m.movement_id] = {lo, hi, 10, false};
    inst.red_start[m.movement_id] = 500.0 + 60.0 * unit(rng);
  }
  for (int i = 0; i < cvs_total; ++i) {
    const auto& id = inst.movements[i % movements].movement_id;
    inst.cv_arrivals[id].push_back(std::round(3600.0 * unit(rng) * 10.0) / 10.0 + 400.0);
  }
  return out;
}

// Largest disagreement between a solve and the closed-form evaluator at its
// own plan, covering d_i, Q_k, the objective, b_i and the range of t_i.
struct TightnessReport {
  double max_delay_gap = 0;
  double max_queue_gap = 0;
  double objective_gap = 0;
  int binary_mismatches = 0;
  int t_out_of_range = 0;
  std::vector<std::string> plan_problems;

  bool ok(double tol = 1e-6) const {
    return max_delay_gap <= tol && max_queue_gap <= tol && objective_gap <= tol &&
           binary_mismatches == 0 && t_out_of_range == 0 && plan_problems.empty();
  }
};

inline TightnessReport check_tightness(const OptimizationInstance& inst, const SolveResult& r,
                                       const RateMap& rates) {
  TightnessReport rep;
  const auto cf = evaluate_plan_closed_form(inst, r.plan, rates);
  for (std::size_t i = 0; i < r.cvs.size() && i < cf.cvs.size(); ++i) {
    rep.max_delay_gap = std::max(rep.max_delay_gap, std::abs(r.cvs[i].d_i - cf.cvs[i].d_i));
    if (inst.mode == ControlMode::kFixedTime) {
      if (!r.cvs[i].b_i || *r.cvs[i].b_i != *cf.cvs[i].b_i) ++rep.binary_mismatches;
      if (!(r.cvs[i].t_i >= 0 && r.cvs[i].t_i < r.plan.cycle)) ++rep.t_out_of_range;
    }
  }
  if (r.cvs.size() != cf.cvs.size()) ++rep.binary_mismatches;
  for (const auto& [id, q] : cf.queues) {
    const auto it = r.queues.find(id);
    const double mine = it == r.queues.end() ? 0.0 : it->second;
    rep.max_queue_gap = std::max(rep.max_queue_gap, std::abs(mine - q));
  }
  rep.objective_gap = std::abs(r.objective - cf.objective) / std::max(1.0, std::abs(cf.objective));
  rep.plan_problems = plan_violations(inst, r.plan);
  return rep;
}

}  // namespace cvro::testing

#endif  // CVRO_TESTS_SIGNAL_FIXTURES_HPP_
