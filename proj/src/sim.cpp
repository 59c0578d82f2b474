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

#include "cvro/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <random>

#include "json.hpp"

#include "cvro/errors.hpp"

namespace cvro {
namespace {

using Tick = std::int64_t;

Tick to_tick(double seconds) { return std::llround(seconds * kTicksPerSecond); }
double to_seconds(Tick t) { return static_cast<double>(t) / kTicksPerSecond; }

Tick floor_mod(Tick a, Tick m) {
  const Tick r = a % m;
  return r < 0 ? r + m : r;
}

// Cycle-relative timing of one movement in whole ticks.
struct TickTiming {
  Tick cycle = 0;
  Tick green_start = 0;  // g_s
  Tick green_end = 0;    // g_e
  Tick red_start = 0;    // g_e + Y, mod C
  Tick eff_start = 0;    // g_s + L_s
  Tick eff_end = 0;      // g_e + Y - L_y
  Tick headway = 1;

  bool discharging(Tick t) const {
    const Tick pos = floor_mod(t, cycle);
    return pos >= eff_start && pos < eff_end;
  }
};

TickTiming tick_timing(const MovementTiming& mt, Tick cycle, const MovementParams& p) {
  TickTiming tt;
  tt.cycle = cycle;
  tt.green_start = to_tick(mt.g_s);
  tt.green_end = to_tick(mt.g_e);
  const Tick red = to_tick(mt.g_e + mt.yellow);
  tt.red_start = floor_mod(red, cycle);
  tt.eff_start = to_tick(mt.g_s + p.startup_lost);
  tt.eff_end = to_tick(mt.g_e + mt.yellow - p.yellow_lost);
  tt.headway = std::max<Tick>(1, to_tick(p.h));
  if (tt.green_start < 0 || tt.green_start >= tt.green_end || red > cycle) {
    throw ValidationError("plan for '" + mt.movement_id + "' needs 0 <= g_s < g_e <= C - Y");
  }
  if (tt.eff_start >= tt.eff_end) {
    throw ValidationError("plan for '" + mt.movement_id + "' has no effective green");
  }
  return tt;
}

Tick travel_ticks(const LinkParams& link) {
  return to_tick(link.link_length / link.free_flow_speed);
}

void validate_link(const LinkParams& link) {
  if (!(link.link_length > 0) || !(link.free_flow_speed > 0) || !(link.jam_spacing > 0)) {
    throw ValidationError("link length, free-flow speed and jam spacing must be positive");
  }
}

double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace

void ScenarioConfig::validate() const {
  for (const auto& [id, vph] : demand_vph) {
    if (!(vph >= 0) || !std::isfinite(vph)) {
      throw ValidationError("demand of '" + id + "' must be a finite number >= 0");
    }
  }
  if (!(fluctuation_cv >= 0) || !std::isfinite(fluctuation_cv)) {
    throw ValidationError("fluctuation_cv must be >= 0");
  }
  if (!(penetration_rate >= 0 && penetration_rate <= 1)) {
    throw ValidationError("penetration_rate must lie in [0, 1]");
  }
  if (horizon_cycles < 1) throw ValidationError("horizon_cycles must be >= 1");
  if (!(demand_period > 0)) throw ValidationError("demand_period must be positive");
  validate_link(link);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : tag) h = (h ^ c) * 1099511628211ULL;
  return mix_seed(a, h);
}

std::vector<double> generate_demand(const ScenarioConfig& config, const std::string& movement_id,
                                    double horizon_s, std::uint64_t seed) {
  config.validate();
  std::vector<double> out;
  const auto it = config.demand_vph.find(movement_id);
  const double mean_vps = it == config.demand_vph.end() ? 0.0 : it->second / 3600.0;
  if (mean_vps <= 0 || horizon_s <= 0) return out;

  std::mt19937_64 rng(mix_seed(seed, movement_id));
  const double cv = config.fluctuation_cv;
  std::gamma_distribution<double> rate_law(cv > 0 ? 1.0 / (cv * cv) : 1.0,
                                           cv > 0 ? mean_vps * cv * cv : mean_vps);
  const double period = config.demand_period;
  for (double start = 0; start < horizon_s; start += period) {
    const double rate = cv > 0 ? rate_law(rng) : mean_vps;
    const double stop = std::min(start + period, horizon_s);
    if (rate <= 0) continue;
    std::exponential_distribution<double> gap(rate);
    for (double t = start + gap(rng); t < stop; t += gap(rng)) out.push_back(t);
  }
  return out;
}

std::map<std::string, std::vector<double>> generate_all_demand(const ScenarioConfig& config,
                                                               std::uint64_t seed) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [id, vph] : config.demand_vph) {
    out[id] = generate_demand(config, id, config.horizon_seconds(), seed);
  }
  return out;
}

SimResult simulate(const SignalPlan& plan, const std::map<std::string, std::vector<double>>& entries,
                   const std::vector<MovementParams>& movements, const LinkParams& link,
                   double horizon_s, int drain_cycles) {
  validate_link(link);
  const Tick cycle = to_tick(plan.cycle);
  if (cycle <= 0) throw ValidationError("plan cycle must be positive");
  const Tick travel = travel_ticks(link);
  const std::size_t storage =
      static_cast<std::size_t>(std::floor(link.link_length / link.jam_spacing));

  SimResult result;
  result.plan.cycle = to_seconds(cycle);

  for (const auto& id_entries : entries) {
    if (std::none_of(movements.begin(), movements.end(),
                     [&](const MovementParams& m) { return m.movement_id == id_entries.first; })) {
      throw ValidationError("arrivals given for unknown movement '" + id_entries.first + "'");
    }
  }

  for (const auto& params : movements) {
    const MovementTiming& mt = plan.at(params.movement_id);
    const TickTiming tt = tick_timing(mt, cycle, params);
    result.plan.movements.push_back({mt.movement_id, to_seconds(tt.green_start),
                                     to_seconds(tt.green_end),
                                     to_seconds(to_tick(mt.g_e + mt.yellow) - tt.green_end)});

    std::vector<Tick> arrive;
    std::vector<double> entry_s;
    if (const auto it = entries.find(params.movement_id); it != entries.end()) {
      std::vector<Tick> enter;
      for (double t : it->second) enter.push_back(to_tick(t));
      std::sort(enter.begin(), enter.end());
      for (Tick e : enter) {
        entry_s.push_back(to_seconds(e));
        arrive.push_back(e + travel);
      }
    }

    const std::size_t first_vehicle = result.vehicles.size();
    for (std::size_t i = 0; i < arrive.size(); ++i) {
      SimVehicle v;
      v.movement_id = params.movement_id;
      v.index = static_cast<int>(i);
      v.entry = entry_s[i];
      v.virtual_arrival = to_seconds(arrive[i]);
      result.vehicles.push_back(std::move(v));
    }
    auto vehicle = [&](std::size_t i) -> SimVehicle& { return result.vehicles[first_vehicle + i]; };

    const Tick last_arrival = arrive.empty() ? 0 : arrive.back();
    const Tick horizon =
        std::max(last_arrival, to_tick(horizon_s) + travel) + static_cast<Tick>(drain_cycles) * cycle;
    const Tick window_limit = std::max(last_arrival + 1, to_tick(horizon_s) + travel);
    std::vector<CycleTruth> truth;
    for (Tick rs = tt.red_start; rs < window_limit; rs += cycle) {
      CycleTruth ct;
      ct.movement_id = params.movement_id;
      ct.cycle_index = static_cast<int>(truth.size());
      ct.red_start = to_seconds(rs);
      truth.push_back(ct);
    }

    std::deque<std::size_t> queue;
    std::size_t next = 0;
    int counter = 0;
    Tick next_allowed = 0;
    // Last vehicle queued when effective green began; if it is still waiting
    // at the next red start the cycle failed to clear its standing queue.
    bool held_through_green = false;
    std::size_t held_mark = 0;
    Tick t = 0;
    if (!arrive.empty()) t = std::min<Tick>(0, arrive.front());
    const Tick first_red = tt.red_start;
    for (; t <= horizon; ++t) {
      if (next >= arrive.size() && queue.empty() && t > first_red + cycle * (Tick)truth.size()) {
        break;
      }
      if (floor_mod(t, cycle) == tt.red_start) {
        const Tick k = (t - first_red) / cycle;
        if (t >= first_red && k <= static_cast<Tick>(truth.size())) {
          if (k < static_cast<Tick>(truth.size())) {
            truth[k].residual_at_start = static_cast<int>(queue.size());
          }
          if (k > 0) {
            truth[k - 1].residual_at_end = static_cast<int>(queue.size());
            truth[k - 1].overflow = held_through_green && !queue.empty() && queue.front() <= held_mark;
          }
        }
        held_through_green = false;
        int rank = 0;
        for (std::size_t i : queue) {
          SimVehicle& v = vehicle(i);
          ++rank;
          if (v.stands.back().rank != rank) v.stands.push_back({to_seconds(t), rank});
        }
        counter = static_cast<int>(queue.size());
      }
      if (floor_mod(t, cycle) == tt.eff_start && !queue.empty()) {
        held_through_green = true;
        held_mark = queue.back();
      }
      const bool green = tt.discharging(t);
      while (next < arrive.size() && arrive[next] == t) {
        SimVehicle& v = vehicle(next);
        if (queue.empty() && green && t >= next_allowed) {
          v.crossing = to_seconds(t);
          next_allowed = t + tt.headway;
        } else {
          if (queue.empty()) counter = 0;
          v.stands.push_back({to_seconds(t), ++counter});
          queue.push_back(next);
          if (queue.size() > storage) result.spillback = true;
        }
        ++next;
      }
      if (green && !queue.empty() && t >= next_allowed) {
        vehicle(queue.front()).crossing = to_seconds(t);
        queue.pop_front();
        next_allowed = t + tt.headway;
      }
    }
    result.end_time = std::max(result.end_time, to_seconds(t));
    result.final_queue[params.movement_id] = static_cast<int>(queue.size());

    for (std::size_t i = 0; i < arrive.size(); ++i) {
      SimVehicle& v = vehicle(i);
      if (v.crossing) v.delay = *v.crossing - v.virtual_arrival;
      const Tick k = (arrive[i] - first_red) >= 0 ? (arrive[i] - first_red) / cycle : -1;
      if (k >= 0 && k < static_cast<Tick>(truth.size())) ++truth[k].arrivals;
      if (v.crossing) {
        const Tick c = to_tick(*v.crossing) - first_red;
        if (c >= 0 && c / cycle < static_cast<Tick>(truth.size())) ++truth[c / cycle].departures;
      }
    }
    result.cycles.insert(result.cycles.end(), truth.begin(), truth.end());
  }
  return result;
}

std::vector<CycleSpec> cycle_specs(const SimResult& result) {
  std::vector<CycleSpec> out;
  const double c = result.plan.cycle;
  for (const auto& ct : result.cycles) {
    const MovementTiming& mt = result.plan.at(ct.movement_id);
    const double rel_red = std::fmod(mt.g_e + mt.yellow, c);
    const double to_green = std::fmod(mt.g_s - rel_red + c, c);
    CycleSpec spec;
    spec.movement_id = ct.movement_id;
    spec.cycle_index = ct.cycle_index;
    spec.red_start = ct.red_start;
    spec.green_start = ct.red_start + (to_green == 0 ? c : to_green);
    spec.green_end = spec.green_start + (mt.g_e - mt.g_s);
    spec.cycle_length = c;
    spec.yellow = mt.yellow;
    out.push_back(spec);
  }
  return out;
}

CvTrajectory vehicle_trajectory(const SimVehicle& v, const LinkParams& link, double end_time) {
  const double vf = link.free_flow_speed;
  const double travel = v.virtual_arrival - v.entry;
  const double start_distance = vf * travel;

  struct Knot {
    double t, d;
  };
  std::vector<Knot> knots{{v.entry, start_distance}};
  auto add = [&](double t, double d) {
    t = std::max(t, knots.back().t);
    if (t == knots.back().t) {
      if (d != knots.back().d) knots.push_back({t, d});
      return;
    }
    knots.push_back({t, d});
  };
  if (!v.stands.empty()) {
    double d = std::min(v.stands.front().rank * link.jam_spacing, start_distance);
    add(v.virtual_arrival - d / vf, d);
    for (std::size_t s = 1; s < v.stands.size(); ++s) {
      const double next_d = std::min(v.stands[s].rank * link.jam_spacing, start_distance);
      add(v.stands[s].time - (d - next_d) / vf, d);
      add(v.stands[s].time, next_d);
      d = next_d;
    }
    if (v.crossing) add(*v.crossing - d / vf, d);
  }
  if (v.crossing) add(*v.crossing, 0.0);
  const double tail_t = knots.back().t;
  const double tail_d = knots.back().d;
  const bool moving_tail = v.crossing.has_value() || v.stands.empty();

  auto sample = [&](double t) -> TrajectoryPoint {
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      if (t < knots[k + 1].t) {
        const Knot& a = knots[k];
        const Knot& b = knots[k + 1];
        const double slope = (b.d - a.d) / (b.t - a.t);
        return {t, a.d + slope * (t - a.t), std::abs(slope)};
      }
    }
    if (!moving_tail) return {t, tail_d, 0.0};
    return {t, tail_d - vf * (t - tail_t), vf};
  };

  CvTrajectory traj;
  traj.movement_id = v.movement_id;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%06d", v.movement_id.c_str(), v.index);
  traj.vehicle_id = id;
  for (int k = 0;; ++k) {
    const double t = v.entry + k;
    if (!v.crossing && t > end_time) break;
    const TrajectoryPoint p = sample(t);
    traj.points.push_back(p);
    if (p.distance_to_stopline < 0) break;
  }
  return traj;
}

std::vector<CvTrajectory> sample_cvs(const SimResult& result, double penetration,
                                     std::uint64_t seed, const LinkParams& link) {
  if (!(penetration >= 0 && penetration <= 1)) {
    throw ValidationError("penetration must lie in [0, 1]");
  }
  validate_link(link);
  std::vector<CvTrajectory> out;
  for (const auto& v : result.vehicles) {
    const std::uint64_t bits =
        mix_seed(mix_seed(seed, v.movement_id), static_cast<std::uint64_t>(v.index));
    if (uniform01(bits) < penetration) out.push_back(vehicle_trajectory(v, link, result.end_time));
  }
  return out;
}

SimSummary summarize_delays(std::span<const double> delays) {
  SimSummary s;
  if (delays.empty()) return s;
  s.empty = false;
  s.vehicles = static_cast<int>(delays.size());
  double total = 0;
  for (double d : delays) total += d;
  s.mean_delay = total / delays.size();
  std::vector<double> sorted(delays.begin(), delays.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_delay = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

SimSummary measure(const SimResult& result) {
  std::vector<double> delays;
  int unfinished = 0;
  for (const auto& v : result.vehicles) {
    if (v.crossing) {
      delays.push_back(v.delay);
    } else {
      ++unfinished;
    }
  }
  SimSummary s = summarize_delays(delays);
  s.unfinished = unfinished;
  if (unfinished > 0) s.empty = false;
  int with_residual = 0;
  for (const auto& ct : result.cycles) {
    s.cycle_arrivals[ct.movement_id].push_back(ct.arrivals);
    if (ct.overflow) ++with_residual;
  }
  if (!result.cycles.empty()) {
    s.residual_queue_frequency = static_cast<double>(with_residual) / result.cycles.size();
  }
  return s;
}

std::string ground_truth_json(const SimResult& result) {
  using nlohmann::ordered_json;
  ordered_json root;
  root["cycle_length"] = result.plan.cycle;
  root["spillback"] = result.spillback;
  ordered_json cycles = ordered_json::array();
  for (const auto& ct : result.cycles) {
    cycles.push_back({{"movement_id", ct.movement_id},
                      {"cycle_index", ct.cycle_index},
                      {"red_start", ct.red_start},
                      {"arrivals", ct.arrivals},
                      {"departures", ct.departures},
                      {"residual_at_start", ct.residual_at_start},
                      {"residual_at_end", ct.residual_at_end},
                      {"overflow", ct.overflow}});
  }
  root["cycles"] = std::move(cycles);
  ordered_json vehicles = ordered_json::array();
  for (const auto& v : result.vehicles) {
    ordered_json row{{"movement_id", v.movement_id},
                     {"index", v.index},
                     {"entry", v.entry},
                     {"virtual_arrival", v.virtual_arrival}};
    row["crossing"] = v.crossing ? ordered_json(*v.crossing) : ordered_json(nullptr);
    row["delay"] = v.crossing ? ordered_json(v.delay) : ordered_json(nullptr);
    vehicles.push_back(std::move(row));
  }
  root["vehicles"] = std::move(vehicles);
  ordered_json queues = ordered_json::object();
  for (const auto& [id, q] : result.final_queue) queues[id] = q;
  root["final_queue"] = std::move(queues);
  return root.dump(2) + "\n";
}

}  // namespace cvro
