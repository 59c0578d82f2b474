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

// Per-cycle arrival-rate bounds from queue observations and their median
// aggregation into a per-movement box of arrival rates.

#ifndef CVRO_UNCERTAINTY_HPP_
#define CVRO_UNCERTAINTY_HPP_

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cvro/trajectory.hpp"

namespace cvro {

struct BoundsParams {
  double lambda_max = 0.5;  // veh/s
  double h_s = 2.0;         // s/veh

  // lambda_max defaults to the saturation rate 1/h_s.
  static BoundsParams saturation(double h_s) { return {1.0 / h_s, h_s}; }
  void validate() const;
};

struct ArrivalBounds {
  std::string movement_id;
  int cycle_index = 0;
  double lower = 0;  // veh/s
  double upper = 0;  // veh/s
  bool valid = false;
  std::string reason;  // why the cycle is invalid, empty otherwise
};

struct MovementBox {
  double l_hat = 0;
  double u_hat = 0;
  int support_count = 0;
  bool fallback = false;
};

struct BoxUncertaintySet {
  std::map<std::string, MovementBox> movements;

  const MovementBox& at(const std::string& movement_id) const;
};

// Vehicles that arrived between red start and the last queued CV. Throws
// DegenerateCycleError for an oversaturated cycle with t_lq <= t_lr, and
// ParameterError when p_lq or t_lq is missing.
double first_arrivals_count(const CycleObservation& obs);

// min{lambda_max, (tau_fn - tau_lq) / (h_s (tau_fn - t_lq))}, where an
// oversaturated cycle (or a missing tau_fn) uses tau_fn = C.
double effective_max_rate(const CycleObservation& obs, const BoundsParams& params);

ArrivalBounds cycle_arrival_bounds(const CycleObservation& obs, const BoundsParams& params);

std::vector<ArrivalBounds> all_cycle_bounds(std::span<const CycleObservation> observations,
                                            const BoundsParams& params);

double median(std::vector<double> values);

// Medians of the valid lower and upper bounds per movement. Every movement in
// `lambda_max` gets an entry; one with no valid cycle falls back to
// [0, lambda_max] and a line is appended to `warnings`.
BoxUncertaintySet build_box_set(std::span<const ArrivalBounds> bounds,
                                const std::map<std::string, double>& lambda_max,
                                std::vector<std::string>* warnings = nullptr);

// Mean of valid-cycle midpoints for one movement, lambda_max / 2 if none.
double mean_rate_estimate(std::span<const ArrivalBounds> bounds, double lambda_max);

void write_bounds_csv(std::ostream& out, std::span<const ArrivalBounds> bounds);
std::vector<ArrivalBounds> read_bounds_csv(std::istream& in);

std::string box_to_json(const BoxUncertaintySet& box);
BoxUncertaintySet box_from_json(const std::string& text);

}  // namespace cvro

#endif  // CVRO_UNCERTAINTY_HPP_
