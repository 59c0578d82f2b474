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

// Robust signal timing. Plans are single-ring: stage j occupies a span D_j
// (green plus the yellow of its movements), stages follow each other in
// order from cycle time 0, and the spans add up to the cycle length. A
// movement's red starts when its stage span ends.

#ifndef CVRO_SIGNAL_OPT_HPP_
#define CVRO_SIGNAL_OPT_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvro/branch_and_bound.hpp"
#include "cvro/linear_model.hpp"
#include "cvro/uncertainty.hpp"

namespace cvro {

struct MovementParams {
  std::string movement_id;
  double h = 2.0;            // discharge headway, s/veh
  double yellow = 3.0;       // Y_k, s
  double startup_lost = 2.0; // L_s, s
  double yellow_lost = 1.0;  // L_y, s
  int stage_index = 0;
};

struct Stage {
  double min_green = 10.0;
  std::vector<std::string> movements;
};

struct PhaseStructure {
  std::vector<Stage> stages;
  double c_min = 40.0;
  double c_max = 160.0;
};

struct MovementTiming {
  std::string movement_id;
  double g_s = 0;
  double g_e = 0;
  double yellow = 0;
};

struct SignalPlan {
  double cycle = 0;
  std::vector<MovementTiming> movements;

  const MovementTiming& at(const std::string& movement_id) const;
  double red_time(const std::string& movement_id) const;
  double red_start(const std::string& movement_id) const;  // g_e + Y, cycle-relative
};

double effective_green(const SignalPlan& plan, const MovementParams& params);

enum class ControlMode { kFixedTime, kRealTime };

using RateMap = std::map<std::string, double>;

struct OptimizationInstance {
  ControlMode mode = ControlMode::kFixedTime;
  std::vector<MovementParams> movements;
  PhaseStructure phase;
  std::map<std::string, std::vector<double>> cv_arrivals;  // global t_i^0, s
  double alpha = 3600.0;
  std::map<std::string, double> red_start;  // r_k^s, real-time only
  double big_m = 300.0;
  double epsilon = 0.001;

  const MovementParams& movement(const std::string& movement_id) const;
  // Throws ValidationError on a broken instance.
  void validate() const;
};

// Shortest span stage j can take: min green plus the longest yellow, and
// never less than the lost time of any member movement.
double min_stage_span(const OptimizationInstance& inst, int stage);

struct CyclicTerms {
  double t_mod = 0;
  int b = 0;
  double t_i = 0;
};

// Tie tolerance for the b = 1 branch; expressions within it of zero count
// as arrivals at red start.
inline constexpr double kCyclicTieTol = 1e-6;

CyclicTerms cyclic_arrival_terms(double t0, double cycle, double g_e, double yellow);

RateMap robust_counterpart(const BoxUncertaintySet& box);

// Variable indices of a built model.
struct ModelLayout {
  std::vector<int> stage_span;  // D_j
  int cycle = -1;               // real-time only
  std::map<std::string, int> queue;
  struct Cv {
    std::string movement_id;
    double t0 = 0;
    double t_i = 0;  // real-time constant
    int delay = -1;
    int binary = -1;
  };
  std::vector<Cv> cvs;
};

struct SignalModel {
  ControlMode mode = ControlMode::kFixedTime;
  double fixed_cycle = 0;
  LinearModel<double> lp;
  ModelLayout layout;
  std::vector<std::string> notes;  // e.g. clamped arrival offsets
};

SignalModel build_fixed_time_model(const OptimizationInstance& inst, const RateMap& rates,
                                   double cycle);
SignalModel build_real_time_model(const OptimizationInstance& inst, const RateMap& rates);

struct CvOutcome {
  std::string movement_id;
  double t0 = 0;
  double t_i = 0;
  double d_i = 0;
  std::optional<int> b_i;
};

struct SolveResult {
  SolveStatus status = SolveStatus::kInfeasible;
  double objective = 0;
  SignalPlan plan;
  std::vector<CvOutcome> cvs;
  std::map<std::string, double> queues;
  std::vector<std::string> diagnostics;
  std::int64_t nodes = 0;
  std::int64_t pivots = 0;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

SolveResult solve(const SignalModel& model, const OptimizationInstance& inst,
                  const MilpOptions& options = {});

std::vector<double> default_cycle_grid(const PhaseStructure& phase, double step = 2.0);

SolveResult optimize_fixed_time(const OptimizationInstance& inst, const BoxUncertaintySet& box,
                                const std::vector<double>& cycle_grid,
                                const MilpOptions& options = {});
SolveResult optimize_real_time(const OptimizationInstance& inst, const BoxUncertaintySet& box,
                               const MilpOptions& options = {});

// Same pipeline fed point rates; cycle_grid is ignored in real-time mode.
SolveResult deterministic_baseline(const OptimizationInstance& inst, const RateMap& point_rates,
                                   const std::vector<double>& cycle_grid,
                                   const MilpOptions& options = {});

// d = max(0, R + L_s - (1 - lambda h) t) and Q = max(0, lambda C - G_eff / h).
double closed_form_delay(double red, double startup_lost, double rate, double h, double t_i);
double closed_form_queue(double rate, double cycle, double g_eff, double h);

struct ClosedFormEvaluation {
  double objective = 0;
  std::vector<CvOutcome> cvs;  // same order as the instance's arrivals
  std::map<std::string, double> queues;
};

ClosedFormEvaluation evaluate_plan_closed_form(const OptimizationInstance& inst,
                                               const SignalPlan& plan, const RateMap& rates);

// Checks the stage order, non-negative red and effective green, and
// 0 <= g_s < g_e <= C. Returns the problems found.
std::vector<std::string> plan_violations(const OptimizationInstance& inst, const SignalPlan& plan,
                                         double tol = 1e-6);

std::string solve_result_to_json(const SolveResult& result);
SignalPlan plan_from_json(const std::string& text);

}  // namespace cvro

#endif  // CVRO_SIGNAL_OPT_HPP_
