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

#include "cvro/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>

#include "cvro/errors.hpp"

namespace cvro {
namespace {

constexpr std::string_view kHeader =
    "vehicle_id,movement_id,timestamp_s,distance_to_stopline_m,speed_mps";
constexpr double kReverseTolerance = 0.5;  // m

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, int line, const char* what) {
  field = trim(field);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw ParseError(line, std::string("bad ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

// Everything about one trajectory that classification needs, computed once.
struct CvSummary {
  const CvTrajectory* traj = nullptr;
  std::optional<double> crossing;
  double virtual_arrival = 0;
  std::vector<StopEpisode> stops;  // only those starting before the crossing
  double first_time = 0;
  double last_time = 0;
};

CvSummary summarize(const CvTrajectory& traj, const ClassifyParams& params) {
  CvSummary s;
  s.traj = &traj;
  s.crossing = stopline_crossing_time(traj);
  s.virtual_arrival = virtual_arrival_time(traj, params.free_flow_speed);
  s.first_time = traj.points.front().timestamp;
  s.last_time = traj.points.back().timestamp;
  for (const auto& stop : detect_stops(traj, params.stop_speed, params.min_stop_duration)) {
    if (s.crossing && stop.start >= *s.crossing) break;
    s.stops.push_back(stop);
  }
  return s;
}

CycleClassification classify(std::span<const CvSummary> cvs, const CycleSpec& cycle,
                             const ClassifyParams& params) {
  const double rs = cycle.red_start;
  const double end = cycle.window_end();
  CycleClassification out;
  CycleObservation& obs = out.observation;
  obs.movement_id = cycle.movement_id;
  obs.cycle_index = cycle.cycle_index;
  obs.cycle_length = cycle.cycle_length;

  bool leftover = false;
  for (const CvSummary& cv : cvs) {
    if (!cv.crossing) {
      if (cv.last_time >= rs && cv.first_time < end) ++out.no_crossing;
    }
    const bool crosses_here = cv.crossing && *cv.crossing >= rs && *cv.crossing < end;
    if (!crosses_here) {
      // A CV that arrived and stopped in this cycle but is still waiting at
      // the end of the window marks the cycle oversaturated.
      const bool arrived_here = cv.virtual_arrival >= rs && cv.virtual_arrival < end;
      if (arrived_here && !cv.stops.empty() && cv.stops.front().start < end &&
          (cv.crossing ? *cv.crossing >= end : cv.last_time >= end)) {
        leftover = true;
      }
      continue;
    }
    ClassifiedCv c;
    c.vehicle_id = cv.traj->vehicle_id;
    c.virtual_arrival = cv.virtual_arrival - rs;
    c.crossing = *cv.crossing - rs;
    if (cv.stops.empty()) {
      c.queue_class = QueueClass::kNonQueued;
    } else {
      // Residual: queued before this red start, i.e. it stopped and its
      // arrival belongs to an earlier cycle.
      const bool residual = cv.stops.front().start < rs && cv.virtual_arrival < rs;
      c.queue_class = residual ? QueueClass::kResidual : QueueClass::kQueued;
      c.position = queue_position(cv.stops.back().position, params.jam_spacing);
    }
    out.cvs.push_back(std::move(c));
  }
  std::stable_sort(out.cvs.begin(), out.cvs.end(),
                   [](const ClassifiedCv& a, const ClassifiedCv& b) {
                     return a.crossing < b.crossing;
                   });

  // The standing queue has dissolved once a CV passes without stopping; a CV
  // that stops behind it belongs to a short platoon queue, not to the queue
  // built since red start, and carries no usable queue rank.
  bool seen_non_queued = false;
  for (ClassifiedCv& c : out.cvs) {
    if (c.queue_class == QueueClass::kNonQueued) {
      seen_non_queued = true;
    } else if (seen_non_queued && c.queue_class == QueueClass::kQueued) {
      c.queue_class = QueueClass::kNonQueued;
      c.position.reset();
      ++out.demoted_to_non_queued;
    }
  }

  bool any_residual = false;
  for (const ClassifiedCv& c : out.cvs) {
    switch (c.queue_class) {
      case QueueClass::kQueued:
        obs.p_lq = c.position;
        obs.t_lq = c.virtual_arrival;
        obs.tau_lq = c.crossing;
        break;
      case QueueClass::kResidual:
        any_residual = true;
        obs.p_lr = c.position;
        obs.t_lr = c.virtual_arrival;
        break;
      case QueueClass::kNonQueued:
        ++obs.n_nq;
        if (!obs.tau_fn) obs.tau_fn = c.crossing;
        break;
    }
  }
  obs.oversaturated = any_residual || leftover;
  return out;
}

}  // namespace

const char* to_string(QueueClass c) {
  switch (c) {
    case QueueClass::kQueued: return "Queued";
    case QueueClass::kNonQueued: return "NonQueued";
    case QueueClass::kResidual: return "Residual";
  }
  return "?";
}

std::vector<CvTrajectory> parse_trajectories(std::istream& in) {
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) return {};
  ++line_no;
  std::string_view header = trim(line);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != kHeader) {
    throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
  }

  std::vector<CvTrajectory> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    std::string_view fields[5];
    std::size_t start = 0;
    int count = 0;
    for (;;) {
      const std::size_t comma = row.find(',', start);
      if (count == 5) throw ParseError(line_no, "too many fields");
      fields[count++] = row.substr(start, comma == std::string_view::npos ? row.npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (count != 5) throw ParseError(line_no, "expected 5 fields, got " + std::to_string(count));
    const std::string vehicle(trim(fields[0]));
    const std::string movement(trim(fields[1]));
    if (vehicle.empty() || movement.empty()) throw ParseError(line_no, "empty identifier");
    TrajectoryPoint p;
    p.timestamp = parse_number(fields[2], line_no, "timestamp");
    p.distance_to_stopline = parse_number(fields[3], line_no, "distance");
    p.speed = parse_number(fields[4], line_no, "speed");
    auto [it, inserted] = index.try_emplace({vehicle, movement}, out.size());
    if (inserted) out.push_back({vehicle, movement, {}});
    out[it->second].points.push_back(p);
  }
  for (CvTrajectory& traj : out) {
    std::stable_sort(traj.points.begin(), traj.points.end(),
                     [](const TrajectoryPoint& a, const TrajectoryPoint& b) {
                       return a.timestamp < b.timestamp;
                     });
    validate_trajectory(traj);
  }
  return out;
}

std::vector<CvTrajectory> read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open trajectory file '" + path + "'");
  return parse_trajectories(in);
}

void write_trajectories(std::ostream& out, std::span<const CvTrajectory> trajs) {
  out << kHeader << '\n';
  char buf[160];
  for (const CvTrajectory& traj : trajs) {
    for (const TrajectoryPoint& p : traj.points) {
      std::snprintf(buf, sizeof(buf), ",%.3f,%.3f,%.3f\n", p.timestamp,
                    p.distance_to_stopline, p.speed);
      out << traj.vehicle_id << ',' << traj.movement_id << buf;
    }
  }
}

void validate_trajectory(const CvTrajectory& traj) {
  const std::string who = "vehicle '" + traj.vehicle_id + "'";
  if (traj.points.size() < 2) throw ValidationError(who + " has fewer than 2 points");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const TrajectoryPoint& p = traj.points[i];
    if (p.speed < 0) throw ValidationError(who + " has a negative speed");
    if (i == 0) continue;
    const TrajectoryPoint& q = traj.points[i - 1];
    if (!(p.timestamp > q.timestamp)) {
      throw ValidationError(who + " has non-monotone timestamps");
    }
    if (p.distance_to_stopline > q.distance_to_stopline + kReverseTolerance) {
      throw ValidationError(who + " moves away from the stopline");
    }
  }
}

std::vector<StopEpisode> detect_stops(const CvTrajectory& traj, double stop_speed,
                                      double min_stop_duration) {
  std::vector<StopEpisode> out;
  const auto& pts = traj.points;
  std::size_t i = 0;
  while (i < pts.size()) {
    if (pts[i].speed >= stop_speed) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < pts.size() && pts[j + 1].speed < stop_speed) ++j;
    if (pts[j].timestamp - pts[i].timestamp >= min_stop_duration) {
      out.push_back({pts[j].distance_to_stopline, pts[i].timestamp, pts[j].timestamp});
    }
    i = j + 1;
  }
  return out;
}

double virtual_arrival_time(const CvTrajectory& traj, double free_flow_speed) {
  if (!(free_flow_speed > 0)) throw ParameterError("free_flow_speed must be positive");
  if (traj.points.empty()) throw ValidationError("vehicle '" + traj.vehicle_id + "' has no points");
  const TrajectoryPoint& first = traj.points.front();
  return first.timestamp + first.distance_to_stopline / free_flow_speed;
}

std::optional<double> stopline_crossing_time(const CvTrajectory& traj) {
  const auto& pts = traj.points;
  if (pts.empty()) return std::nullopt;
  if (pts.front().distance_to_stopline == 0.0) return pts.front().timestamp;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d0 = pts[i - 1].distance_to_stopline;
    const double d1 = pts[i].distance_to_stopline;
    if (d0 > 0 && d1 <= 0) {
      const double t0 = pts[i - 1].timestamp;
      const double t1 = pts[i].timestamp;
      return t0 + (d0 / (d0 - d1)) * (t1 - t0);
    }
  }
  return std::nullopt;
}

int queue_position(double stop_distance, double jam_spacing) {
  if (!(jam_spacing > 0)) throw ParameterError("jam_spacing must be positive");
  return std::max(1, static_cast<int>(std::lround(stop_distance / jam_spacing)));
}

CycleClassification classify_and_observe(std::span<const CvTrajectory> trajs,
                                         const CycleSpec& cycle,
                                         const ClassifyParams& params) {
  if (!(cycle.red_start < cycle.green_start && cycle.green_start < cycle.green_end &&
        cycle.green_end <= cycle.red_start + cycle.cycle_length + 1e-9)) {
    throw ParameterError("cycle spec " + std::to_string(cycle.cycle_index) +
                         " violates red_start < green_start < green_end <= red_start + C");
  }
  std::vector<CvSummary> summaries;
  for (const CvTrajectory& traj : trajs) {
    if (traj.movement_id != cycle.movement_id) continue;
    summaries.push_back(summarize(traj, params));
  }
  return classify(summaries, cycle, params);
}

std::vector<CycleObservation> observe_cycles(std::span<const CvTrajectory> trajs,
                                             std::span<const CycleSpec> cycles,
                                             const ClassifyParams& params) {
  std::map<std::string, std::vector<CvSummary>> by_movement;
  for (const CvTrajectory& traj : trajs) {
    by_movement[traj.movement_id].push_back(summarize(traj, params));
  }
  for (auto& [movement, list] : by_movement) {
    std::stable_sort(list.begin(), list.end(), [](const CvSummary& a, const CvSummary& b) {
      return a.first_time < b.first_time;
    });
  }
  std::vector<CycleObservation> out;
  out.reserve(cycles.size());
  for (const CycleSpec& cycle : cycles) {
    if (!(cycle.red_start < cycle.green_start && cycle.green_start < cycle.green_end &&
          cycle.green_end <= cycle.red_start + cycle.cycle_length + 1e-9)) {
      throw ParameterError("cycle spec " + std::to_string(cycle.cycle_index) +
                           " violates red_start < green_start < green_end <= red_start + C");
    }
    const auto it = by_movement.find(cycle.movement_id);
    if (it == by_movement.end()) {
      out.push_back(classify({}, cycle, params).observation);
      continue;
    }
    // Only trajectories whose time span touches the window matter.
    std::vector<CvSummary> relevant;
    for (const CvSummary& s : it->second) {
      if (s.first_time > cycle.window_end()) break;
      if (s.last_time < cycle.red_start) continue;
      relevant.push_back(s);
    }
    out.push_back(classify(relevant, cycle, params).observation);
  }
  return out;
}

}  // namespace cvro
