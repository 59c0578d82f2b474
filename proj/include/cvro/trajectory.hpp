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

// Connected-vehicle trajectories: CSV I/O, stop detection, virtual arrival
// times and per-cycle queue classification.

#ifndef CVRO_TRAJECTORY_HPP_
#define CVRO_TRAJECTORY_HPP_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cvro {

struct TrajectoryPoint {
  double timestamp = 0;             // s
  double distance_to_stopline = 0;  // m, positive upstream
  double speed = 0;                 // m/s
};

struct CvTrajectory {
  std::string vehicle_id;
  std::string movement_id;
  std::vector<TrajectoryPoint> points;
};

// One signal cycle of one movement, on the global clock. The cycle window
// is [red_start, red_start + cycle_length).
struct CycleSpec {
  std::string movement_id;
  int cycle_index = 0;
  double red_start = 0;
  double green_start = 0;
  double green_end = 0;
  double cycle_length = 0;
  double yellow = 0;

  double window_end() const { return red_start + cycle_length; }
};

enum class QueueClass { kQueued, kNonQueued, kResidual };

const char* to_string(QueueClass c);

// Per-cycle digest feeding the arrival-rate bounds. Times are relative to the
// cycle's red start; positions are queue ranks counted from the stopline.
struct CycleObservation {
  std::string movement_id;
  int cycle_index = 0;
  double cycle_length = 0;
  std::optional<int> p_lq;
  std::optional<double> t_lq;
  std::optional<double> tau_lq;
  std::optional<int> p_lr;
  std::optional<double> t_lr;
  int n_nq = 0;
  std::optional<double> tau_fn;
  bool oversaturated = false;

  bool informative() const { return p_lq.has_value() && t_lq.has_value(); }
};

struct StopEpisode {
  double position = 0;  // m, distance at the last stopped sample
  double start = 0;     // s
  double end = 0;       // s
};

struct ClassifyParams {
  double stop_speed = 2.0;         // m/s
  double min_stop_duration = 4.0;  // s
  double jam_spacing = 7.0;        // m per queued vehicle
  double free_flow_speed = 13.89;  // m/s
};

struct ClassifiedCv {
  std::string vehicle_id;
  QueueClass queue_class = QueueClass::kNonQueued;
  std::optional<int> position;
  double virtual_arrival = 0;  // cycle-relative
  double crossing = 0;         // cycle-relative
};

struct CycleClassification {
  CycleObservation observation;
  std::vector<ClassifiedCv> cvs;  // ordered by crossing time
  int no_crossing = 0;            // CVs overlapping the window that never cross
  int demoted_to_non_queued = 0;  // stopped CVs crossing after a non-queued CV
};

// Reads the trajectory CSV
//   vehicle_id,movement_id,timestamp_s,distance_to_stopline_m,speed_mps
// Throws ParseError (with line number) or ValidationError (naming the
// vehicle). One trajectory per (vehicle_id, movement_id), in order of first
// appearance, points sorted by timestamp.
std::vector<CvTrajectory> parse_trajectories(std::istream& in);
std::vector<CvTrajectory> read_trajectory_file(const std::string& path);

// Writes the same CSV with three decimals per numeric field.
void write_trajectories(std::ostream& out, std::span<const CvTrajectory> trajs);

void validate_trajectory(const CvTrajectory& traj);

// Maximal runs of samples with speed < stop_speed lasting at least
// min_stop_duration (first to last stopped sample), in time order.
std::vector<StopEpisode> detect_stops(const CvTrajectory& traj,
                                      double stop_speed = 2.0,
                                      double min_stop_duration = 4.0);

// First sample projected to the stopline at free-flow speed.
double virtual_arrival_time(const CvTrajectory& traj, double free_flow_speed);

// Linearly interpolated time at which the distance reaches zero.
std::optional<double> stopline_crossing_time(const CvTrajectory& traj);

int queue_position(double stop_distance, double jam_spacing);

CycleClassification classify_and_observe(std::span<const CvTrajectory> trajs,
                                         const CycleSpec& cycle,
                                         const ClassifyParams& params);

// Convenience: one observation per cycle spec, trajectories filtered by the
// spec's movement.
std::vector<CycleObservation> observe_cycles(std::span<const CvTrajectory> trajs,
                                             std::span<const CycleSpec> cycles,
                                             const ClassifyParams& params);

}  // namespace cvro

#endif  // CVRO_TRAJECTORY_HPP_
