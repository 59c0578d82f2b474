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

// Experiment configuration and the sweep harness: train on a simulated
// horizon, bound arrival rates from the sampled CVs, optimize one plan per
// method and score every plan on a fresh evaluation horizon.

#ifndef CVRO_EXPERIMENT_HPP_
#define CVRO_EXPERIMENT_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvro/signal_opt.hpp"
#include "cvro/sim.hpp"
#include "cvro/trajectory.hpp"
#include "cvro/uncertainty.hpp"

namespace cvro {

enum class Method { kCvRo, kCvDo, kTrueRate };

const char* to_string(Method m);
// Accepts "CV-RO", "CV-DO", "TrueRate" and the lower-case dashed spellings
// ("cv-ro", "cv-do", "true-rate"). Throws ValidationError otherwise.
Method method_from_string(const std::string& name);

struct IntersectionConfig {
  std::vector<MovementParams> movements;
  PhaseStructure phase;
};

struct OptimizationConfig {
  ControlMode mode = ControlMode::kFixedTime;
  double alpha = 3600.0;
  double grid_step = 2.0;
  std::vector<double> cycle_grid;  // overrides grid_step when non-empty
  double big_m = 300.0;
  double epsilon = 0.001;
  // CV arrivals the busiest movement contributes to one fixed-time model.
  // Larger sets are thinned to evenly spaced order statistics, every
  // movement by the same ratio. 0 keeps every CV.
  int max_cvs_per_movement = 12;
  std::map<std::string, double> lambda_max;  // default 1 / h per movement
  // When set, movements without an explicit lambda_max use the largest
  // per-cycle lower bound seen in the training data, capped at 1 / h.
  bool empirical_lambda_max = false;
  std::map<std::string, double> red_start;   // real-time mode
  double stop_speed = 2.0;
  double min_stop_duration = 4.0;
};

struct SweepConfig {
  std::vector<Method> methods{Method::kCvRo, Method::kCvDo, Method::kTrueRate};
  std::vector<double> penetration_rates{0.2};
  std::vector<double> fluctuation_cvs{0.2};
  int replications = 1;
  int training_cycles = 40;
  int evaluation_cycles = 100;
  int workers = 1;
  bool write_cells = true;
};

struct InputPaths {
  std::string trajectories;
  std::string cycles;
  std::string bounds;
  std::string box;
  std::string plan;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  IntersectionConfig intersection;
  OptimizationConfig optimization;
  SweepConfig sweep;
  std::optional<SignalPlan> training_plan;
  InputPaths inputs;

  // Throws ValidationError naming the first broken field.
  void validate() const;
};

// JSON document; relative input paths resolve against base_dir. Throws
// ValidationError on malformed JSON, wrong types or invalid values.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

// Cycle spec CSV:
//   movement_id,cycle_index,red_start_s,green_start_s,green_end_s,cycle_length_s,yellow_s
void write_cycle_specs(std::ostream& out, std::span<const CycleSpec> cycles);
std::vector<CycleSpec> read_cycle_specs(std::istream& in);

OptimizationInstance base_instance(const ExperimentConfig& config);
std::vector<double> cycle_grid(const ExperimentConfig& config);
std::map<std::string, double> lambda_max_by_movement(const ExperimentConfig& config);
ClassifyParams classify_params(const ExperimentConfig& config);

// Cycle of clamp(90, C_min, C_max) with the slack over the minimum stage
// spans shared equally, unless the config names a training plan.
SignalPlan training_plan(const ExperimentConfig& config);

// Every stage at its minimum span, cycle = max(C_min, sum of spans).
SignalPlan min_green_plan(const ExperimentConfig& config);

// Virtual arrival times per movement; the busiest keeps at most `cap` and the
// others shrink in proportion (0: no cap).
std::map<std::string, std::vector<double>> cv_arrival_times(std::span<const CvTrajectory> trajs,
                                                           double free_flow_speed, int cap);

struct TrainingDigest {
  std::map<std::string, double> lambda_max;
  std::vector<ArrivalBounds> bounds;
  BoxUncertaintySet box;
  std::map<std::string, double> mean_rates;
  std::map<std::string, std::vector<double>> cv_arrivals;
  std::vector<std::string> warnings;
};

TrainingDigest digest_trajectories(const ExperimentConfig& config,
                                   std::span<const CvTrajectory> trajs,
                                   std::span<const CycleSpec> cycles);

// CV-RO solves with the box; CV-DO with the mean estimates; TrueRate with
// `true_rates`. The instance must already carry the CV arrivals.
SolveResult solve_method(const ExperimentConfig& config, Method method,
                         const OptimizationInstance& inst, const TrainingDigest& digest,
                         const RateMap& true_rates);

struct CellResult {
  Method method = Method::kCvRo;
  double penetration = 0;
  double fluctuation = 0;
  int replication = 0;
  bool ok = false;
  std::string status;
  std::string error;
  double cycle = 0;
  double objective = 0;
  double mean_delay = 0;
  double median_delay = 0;
  double residual_queue_frequency = 0;
  int vehicles = 0;
  int unfinished = 0;
  bool spillback = false;
  double solve_seconds = 0;
  SolveResult solve;
};

struct CellAggregate {
  Method method = Method::kCvRo;
  double penetration = 0;
  double fluctuation = 0;
  int count = 0;
  double mean_delay = 0;
  double sd_delay = 0;
  double mean_residual_frequency = 0;
  double sd_residual_frequency = 0;
  double mean_solve_seconds = 0;
};

struct EvaluationReport {
  std::vector<CellResult> rows;  // fluctuation, penetration, replication, method order
  std::vector<CellAggregate> aggregates;
  std::vector<std::string> failed_cells;
};

EvaluationReport run_sweep(const ExperimentConfig& config, std::uint64_t master_seed);

// report.csv and report.json carry no wall-clock figures, so a rerun with
// the same seed reproduces them byte for byte; solve times go to timing.csv.
std::string report_csv(const EvaluationReport& report);
std::string report_json(const EvaluationReport& report);
std::string timing_csv(const EvaluationReport& report);
// Also writes cells/<penetration, fluctuation, replication>/<method>.json
// with each solve when write_cells is set.
void write_report(const EvaluationReport& report, const std::string& dir,
                  bool write_cells = true);

}  // namespace cvro

#endif  // CVRO_EXPERIMENT_HPP_
