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

// Point-queue simulation of one fixed-time intersection on a 0.1 s clock.
// Vehicles enter each approach link, reach the stopline after the free-flow
// travel time and either pass or join a FIFO vertical queue that discharges
// one vehicle per headway during effective green.

#ifndef CVRO_SIM_HPP_
#define CVRO_SIM_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvro/signal_opt.hpp"
#include "cvro/trajectory.hpp"

namespace cvro {

struct LinkParams {
  double link_length = 500.0;      // m
  double free_flow_speed = 13.89;  // m/s
  double jam_spacing = 7.0;        // m per queued vehicle
};

struct ScenarioConfig {
  std::map<std::string, double> demand_vph;
  double fluctuation_cv = 0.0;
  double penetration_rate = 1.0;
  int horizon_cycles = 40;
  // Demand rates are redrawn every period; the horizon spans
  // horizon_cycles periods.
  double demand_period = 90.0;  // s
  std::uint64_t seed = 1;
  LinkParams link;

  double horizon_seconds() const { return horizon_cycles * demand_period; }
  void validate() const;
};

inline constexpr int kTicksPerSecond = 10;

// SplitMix64 finalizer; combines seeds into independent streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, const std::string& tag);

// Link entry times in [0, horizon_s), sorted. Each demand period draws a rate
// from a Gamma law with mean demand_vph and the configured coefficient of
// variation; arrivals inside the period are Poisson at that rate.
std::vector<double> generate_demand(const ScenarioConfig& config, const std::string& movement_id,
                                    double horizon_s, std::uint64_t seed);

std::map<std::string, std::vector<double>> generate_all_demand(const ScenarioConfig& config,
                                                               std::uint64_t seed);

struct SimVehicle {
  std::string movement_id;
  int index = 0;  // arrival order within the movement
  double entry = 0;
  double virtual_arrival = 0;
  std::optional<double> crossing;
  double delay = 0;
  // Standing episodes: from `time` the vehicle waits at queue rank `rank`.
  struct Stand {
    double time = 0;
    int rank = 0;
  };
  std::vector<Stand> stands;
};

struct CycleTruth {
  std::string movement_id;
  int cycle_index = 0;
  double red_start = 0;
  int arrivals = 0;  // virtual arrivals in [red_start, red_start + C)
  int residual_at_start = 0;
  int residual_at_end = 0;
  int departures = 0;
  // A vehicle already queued when effective green began was still queued at
  // the end of the window.
  bool overflow = false;

  bool undersaturated() const { return residual_at_start == 0 && residual_at_end == 0; }
};

struct SimResult {
  SignalPlan plan;  // as quantized to the simulation clock
  std::vector<SimVehicle> vehicles;
  std::vector<CycleTruth> cycles;
  std::map<std::string, int> final_queue;
  bool spillback = false;
  double end_time = 0;
};

// Quantizes the plan to the clock, checks it and runs until every vehicle
// has crossed or drain_cycles full cycles past the last arrival elapsed.
// Truth windows cover every red start before the later of the last stopline
// arrival and horizon_s plus the link travel time.
SimResult simulate(const SignalPlan& plan, const std::map<std::string, std::vector<double>>& entries,
                   const std::vector<MovementParams>& movements, const LinkParams& link,
                   double horizon_s = 0, int drain_cycles = 30);

// One spec per simulated cycle window, on the same clock as the simulation.
std::vector<CycleSpec> cycle_specs(const SimResult& result);

// Marks each vehicle as connected with probability `penetration` (the draw of
// a vehicle does not depend on the other vehicles, so higher penetration
// keeps every CV of a lower one) and emits 1 Hz trajectories.
std::vector<CvTrajectory> sample_cvs(const SimResult& result, double penetration,
                                     std::uint64_t seed, const LinkParams& link);

CvTrajectory vehicle_trajectory(const SimVehicle& vehicle, const LinkParams& link,
                                double end_time);

struct SimSummary {
  bool empty = true;
  int vehicles = 0;
  double mean_delay = 0;
  double median_delay = 0;
  double residual_queue_frequency = 0;  // share of cycles that overflowed
  int unfinished = 0;
  std::map<std::string, std::vector<int>> cycle_arrivals;
};

SimSummary measure(const SimResult& result);
SimSummary summarize_delays(std::span<const double> delays);

std::string ground_truth_json(const SimResult& result);

}  // namespace cvro

#endif  // CVRO_SIM_HPP_
