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

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "cvro/errors.hpp"
#include "cvro/sim.hpp"
#include "cvro/uncertainty.hpp"

using cvro::LinkParams;
using cvro::MovementParams;
using cvro::ScenarioConfig;
using cvro::SignalPlan;
using cvro::SimResult;

namespace {

MovementParams movement(const std::string& id, int stage) {
  MovementParams m;
  m.movement_id = id;
  m.h = 2.0;
  m.yellow = 3.0;
  m.startup_lost = 2.0;
  m.yellow_lost = 1.0;
  m.stage_index = stage;
  return m;
}

// One movement "A": green [0, 40), yellow to 43, so effective green is
// [2, 42) and the cycle discharges at most 20 vehicles.
SignalPlan single_plan() { return {100.0, {{"A", 0.0, 40.0, 3.0}}}; }

// Two movements in two stages of 45 s spans.
SignalPlan two_stage_plan() {
  return {90.0, {{"NB", 0.0, 42.0, 3.0}, {"EB", 45.0, 87.0, 3.0}}};
}

// 12.5 m/s over 500 m gives a 40 s travel time.
LinkParams round_link() { return {500.0, 12.5, 7.0}; }

ScenarioConfig scenario(double vph, double cv, std::uint64_t seed) {
  ScenarioConfig c;
  c.demand_vph = {{"NB", vph}, {"EB", vph}};
  c.fluctuation_cv = cv;
  c.seed = seed;
  c.horizon_cycles = 60;
  c.demand_period = 90.0;
  return c;
}

SimResult run_two_stage(const ScenarioConfig& c) {
  return cvro::simulate(two_stage_plan(), cvro::generate_all_demand(c, c.seed),
                        {movement("NB", 0), movement("EB", 1)}, c.link, c.horizon_seconds());
}

std::vector<int> period_counts(const std::vector<double>& times, double period, int periods) {
  std::vector<int> counts(periods, 0);
  for (double t : times) {
    const int k = static_cast<int>(t / period);
    if (k >= 0 && k < periods) ++counts[k];
  }
  return counts;
}

}  // namespace

TEST_CASE("zero demand yields no arrivals") {
  ScenarioConfig c = scenario(0.0, 0.3, 7);
  CHECK(cvro::generate_demand(c, "NB", 9000.0, 7).empty());
  CHECK(cvro::generate_demand(c, "missing", 9000.0, 7).empty());
}

TEST_CASE("mean arrivals per period follow the configured demand") {
  for (double cv : {0.0, 0.2, 0.5}) {
    CAPTURE(cv);
    ScenarioConfig c = scenario(600.0, cv, 11);
    const int periods = 500;
    const auto times = cvro::generate_demand(c, "NB", periods * c.demand_period, 11);
    const auto counts = period_counts(times, c.demand_period, periods);
    const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / periods;
    const double expected = 600.0 * c.demand_period / 3600.0;
    CHECK(std::abs(mean - expected) <= 0.05 * expected);
  }
}

TEST_CASE("fluctuation widens the spread of period counts") {
  // Poisson counts have variance equal to the mean; a Gamma-mixed rate adds
  // (cv * mean)^2 on top.
  const int periods = 2000;
  auto variance = [&](double cv) {
    ScenarioConfig c = scenario(600.0, cv, 5);
    const auto counts =
        period_counts(cvro::generate_demand(c, "NB", periods * c.demand_period, 5),
                      c.demand_period, periods);
    const double m = std::accumulate(counts.begin(), counts.end(), 0.0) / periods;
    double v = 0;
    for (int n : counts) v += (n - m) * (n - m);
    return v / (periods - 1);
  };
  const double mean = 15.0;
  CHECK(variance(0.0) == doctest::Approx(mean).epsilon(0.15));
  CHECK(variance(0.4) == doctest::Approx(mean + 0.16 * mean * mean).epsilon(0.15));
}

TEST_CASE("demand is reproducible per seed and differs across seeds") {
  ScenarioConfig c = scenario(500.0, 0.3, 1);
  const auto a = cvro::generate_demand(c, "NB", 3600.0, 42);
  const auto b = cvro::generate_demand(c, "NB", 3600.0, 42);
  const auto other = cvro::generate_demand(c, "NB", 3600.0, 43);
  const auto eb = cvro::generate_demand(c, "EB", 3600.0, 42);
  CHECK(a == b);
  CHECK(a != other);
  CHECK(a != eb);
  CHECK(std::is_sorted(a.begin(), a.end()));
  for (double t : a) {
    CHECK(t >= 0.0);
    CHECK(t < 3600.0);
  }
}

TEST_CASE("scenario validation") {
  ScenarioConfig c = scenario(500.0, 0.3, 1);
  c.penetration_rate = 1.2;
  CHECK_THROWS_AS(c.validate(), cvro::ValidationError);
  c = scenario(-1.0, 0.3, 1);
  CHECK_THROWS_AS(c.validate(), cvro::ValidationError);
  c = scenario(500.0, -0.1, 1);
  CHECK_THROWS_AS(c.validate(), cvro::ValidationError);
  c = scenario(500.0, 0.1, 1);
  c.horizon_cycles = 0;
  CHECK_THROWS_AS(c.validate(), cvro::ValidationError);
}

TEST_CASE("no arrivals give no delays and an empty summary") {
  const auto r = cvro::simulate(single_plan(), {}, {movement("A", 0)}, round_link(), 1000.0);
  CHECK(r.vehicles.empty());
  CHECK_FALSE(r.cycles.empty());
  for (const auto& ct : r.cycles) CHECK(ct.arrivals == 0);
  const auto s = cvro::measure(r);
  CHECK(s.empty);
  CHECK(s.vehicles == 0);
}

TEST_CASE("a vehicle reaching the stopline mid-green is not delayed") {
  // Entry at 80 s puts it at the stopline at 120 s, cycle time 20.
  const auto r = cvro::simulate(single_plan(), {{"A", {80.0}}}, {movement("A", 0)},
                                round_link());
  REQUIRE(r.vehicles.size() == 1);
  const auto& v = r.vehicles[0];
  CHECK(v.virtual_arrival == doctest::Approx(120.0));
  REQUIRE(v.crossing);
  CHECK(v.delay <= 0.1);
  CHECK(v.stands.empty());

  // Its trajectory projects to the crossing time.
  const auto traj = cvro::vehicle_trajectory(v, round_link(), r.end_time);
  const auto crossing = cvro::stopline_crossing_time(traj);
  REQUIRE(crossing);
  CHECK(std::abs(cvro::virtual_arrival_time(traj, 12.5) - *crossing) <= 0.2);
  CHECK(cvro::detect_stops(traj).empty());
}

TEST_CASE("deterministic arrivals match the hand-computed fixed-cycle delay") {
  // Effective red runs from cycle time 42 to 102 (60 s), discharge every
  // 2 s. Vehicles reach the stopline 5, 15, ..., 95 s into effective red.
  //   Six red arrivals leave at 60, 62, ..., 70: delays 55 47 39 31 23 15.
  //   The arrival at 65 finds three ahead and leaves at 72: delay 7.
  //   Arrivals at 75, 85, 95 meet an empty queue: delay 0.
  // Mean 217 / 10 = 21.7 s. The continuous-flow version of the same
  // triangle gives r (r + r q / (s - q)) / 2C = 22.5 s.
  std::vector<double> entries;
  for (int k = 0; k < 200; ++k) entries.push_back(7.0 + 10.0 * k);  // stopline at 47 + 10k
  const auto r = cvro::simulate(single_plan(), {{"A", entries}}, {movement("A", 0)},
                                round_link(), 2000.0);
  const auto s = cvro::measure(r);
  CHECK(s.vehicles == 200);
  CHECK(s.unfinished == 0);
  CHECK(std::abs(s.mean_delay - 21.7) <= 0.5);
  CHECK(std::abs(s.mean_delay - 22.5) <= 1.0);
  for (const auto& ct : r.cycles) {
    CHECK(ct.residual_at_start == 0);
    CHECK(ct.residual_at_end == 0);
  }
  CHECK(s.residual_queue_frequency == 0.0);
}

TEST_CASE("a late-yellow arrival leaves a queue but no overflow") {
  // Effective green ends at 142, red starts at 143.
  const auto r = cvro::simulate(single_plan(), {{"A", {102.5}}}, {movement("A", 0)},
                                round_link(), 200.0);
  REQUIRE(r.cycles.size() >= 1);
  CHECK(r.cycles[0].residual_at_end == 1);
  CHECK_FALSE(r.cycles[0].overflow);
  CHECK(cvro::measure(r).residual_queue_frequency == 0.0);
}

TEST_CASE("queue ranks, move-ups and residual queues") {
  // 30 vehicles at the stopline within the first red: only 20 discharge.
  std::vector<double> entries;
  for (int k = 0; k < 30; ++k) entries.push_back(10.0 + 0.1 * k);  // stopline at 50..52.9
  const auto r = cvro::simulate(single_plan(), {{"A", entries}}, {movement("A", 0)},
                                round_link(), 200.0);
  REQUIRE(r.vehicles.size() == 30);
  for (int k = 0; k < 30; ++k) {
    const auto& v = r.vehicles[k];
    REQUIRE(v.stands.size() >= 1);
    CHECK(v.stands[0].rank == k + 1);
    REQUIRE(v.crossing);
    if (k < 20) {
      CHECK(*v.crossing == doctest::Approx(102.0 + 2.0 * k));
      CHECK(v.stands.size() == 1);
    } else {
      // Left over at red start 143, moved up to ranks 1..10 and served in
      // the next effective green.
      REQUIRE(v.stands.size() == 2);
      CHECK(v.stands[1].time == doctest::Approx(143.0));
      CHECK(v.stands[1].rank == k - 19);
      CHECK(*v.crossing == doctest::Approx(202.0 + 2.0 * (k - 20)));
    }
  }
  REQUIRE(r.cycles.size() >= 2);
  CHECK(r.cycles[0].arrivals == 30);
  CHECK(r.cycles[0].residual_at_end == 10);
  CHECK(r.cycles[1].residual_at_start == 10);
  CHECK(r.cycles[0].overflow);
  CHECK_FALSE(r.cycles[1].overflow);
  CHECK_FALSE(r.cycles[0].undersaturated());
  CHECK(cvro::measure(r).residual_queue_frequency > 0);

  // The trajectory of a residual vehicle stops twice and reports its final
  // queue rank.
  const auto traj = cvro::vehicle_trajectory(r.vehicles[25], round_link(), r.end_time);
  const auto stops = cvro::detect_stops(traj);
  REQUIRE(stops.size() == 2);
  CHECK(cvro::queue_position(stops[0].position, 7.0) == 26);
  CHECK(cvro::queue_position(stops[1].position, 7.0) == 6);
}

TEST_CASE("queue longer than link storage raises the spillback flag") {
  std::vector<double> entries(40, 10.0);
  LinkParams short_link{140.0, 14.0, 7.0};  // 20 vehicles of storage
  const auto r = cvro::simulate(single_plan(), {{"A", entries}}, {movement("A", 0)}, short_link);
  CHECK(r.spillback);
  const auto calm = cvro::simulate(single_plan(), {{"A", {10.0, 20.0}}}, {movement("A", 0)},
                                   short_link);
  CHECK_FALSE(calm.spillback);
}

TEST_CASE("plans the clock cannot run are rejected") {
  SignalPlan bad{100.0, {{"A", 50.0, 40.0, 3.0}}};
  CHECK_THROWS_AS(cvro::simulate(bad, {}, {movement("A", 0)}, round_link()),
                  cvro::ValidationError);
  SignalPlan no_green{100.0, {{"A", 0.0, 0.5, 3.0}}};
  auto m = movement("A", 0);
  m.startup_lost = 4.0;
  CHECK_THROWS_AS(cvro::simulate(no_green, {}, {m}, round_link()), cvro::ValidationError);
  CHECK_THROWS_AS(cvro::simulate(single_plan(), {{"B", {1.0}}}, {movement("A", 0)}, round_link()),
                  cvro::ValidationError);
}

TEST_CASE("conservation, FIFO, green windows and throughput on random runs") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (double vph : {400.0, 700.0, 1100.0}) {
      CAPTURE(seed);
      CAPTURE(vph);
      ScenarioConfig c = scenario(vph, 0.4, seed);
      const auto r = run_two_stage(c);
      std::map<std::string, int> crossed;
      std::map<std::string, double> last_crossing;
      std::map<std::string, int> generated;
      const auto demand = cvro::generate_all_demand(c, seed);
      for (const auto& [id, t] : demand) generated[id] = static_cast<int>(t.size());

      for (const auto& v : r.vehicles) {
        if (!v.crossing) continue;
        ++crossed[v.movement_id];
        CHECK(v.delay >= 0.0);
        CHECK(*v.crossing >= last_crossing[v.movement_id]);
        last_crossing[v.movement_id] = *v.crossing;
        // Crossing inside effective green [g_s + L_s, g_e + Y - L_y).
        const auto& mt = r.plan.at(v.movement_id);
        const double pos = std::fmod(*v.crossing, r.plan.cycle);
        CHECK(pos >= mt.g_s + 2.0 - 0.1);
        CHECK(pos < mt.g_e + mt.yellow - 1.0 + 0.1);
      }
      for (const auto& [id, n] : generated) {
        CHECK(crossed[id] + r.final_queue.at(id) == n);
      }
      // 42 s effective green, 2 s headway.
      for (const auto& ct : r.cycles) CHECK(ct.departures <= 22);
    }
  }
}

TEST_CASE("simulation is deterministic") {
  ScenarioConfig c = scenario(650.0, 0.3, 9);
  const auto a = run_two_stage(c);
  const auto b = run_two_stage(c);
  CHECK(cvro::ground_truth_json(a) == cvro::ground_truth_json(b));
  std::ostringstream ta, tb;
  cvro::write_trajectories(ta, cvro::sample_cvs(a, 0.3, 4, c.link));
  cvro::write_trajectories(tb, cvro::sample_cvs(b, 0.3, 4, c.link));
  CHECK(ta.str() == tb.str());
}

TEST_CASE("CV sampling follows the penetration rate") {
  std::vector<double> entries;
  for (int k = 0; k < 1000; ++k) entries.push_back(10.0 + 7.0 * k);
  const auto r = cvro::simulate(single_plan(), {{"A", entries}}, {movement("A", 0)},
                                round_link());
  CHECK(cvro::sample_cvs(r, 0.0, 3, round_link()).empty());
  CHECK(cvro::sample_cvs(r, 1.0, 3, round_link()).size() == 1000);
  const auto half = cvro::sample_cvs(r, 0.5, 3, round_link());
  CHECK(half.size() >= 450);
  CHECK(half.size() <= 550);

  // Raising the rate keeps every vehicle sampled at the lower one.
  const auto low = cvro::sample_cvs(r, 0.2, 3, round_link());
  std::set<std::string> half_ids;
  for (const auto& t : half) half_ids.insert(t.vehicle_id);
  for (const auto& t : low) CHECK(half_ids.count(t.vehicle_id) == 1);
  CHECK_THROWS_AS(cvro::sample_cvs(r, -0.1, 3, round_link()), cvro::ValidationError);
}

TEST_CASE("emitted trajectories satisfy the CSV contract") {
  ScenarioConfig c = scenario(800.0, 0.4, 21);
  const auto r = run_two_stage(c);
  const auto trajs = cvro::sample_cvs(r, 1.0, 1, c.link);
  REQUIRE(!trajs.empty());
  std::stringstream csv;
  cvro::write_trajectories(csv, trajs);
  const auto back = cvro::parse_trajectories(csv);
  REQUIRE(back.size() == trajs.size());
  for (const auto& t : back) {
    CHECK(t.points.back().distance_to_stopline < 0);
    for (std::size_t k = 1; k < t.points.size(); ++k) {
      CHECK(t.points[k].timestamp - t.points[k - 1].timestamp == doctest::Approx(1.0));
      CHECK(t.points[k].distance_to_stopline <= t.points[k - 1].distance_to_stopline + 1e-9);
    }
  }
}

TEST_CASE("penetration-one trajectories recover true arrival counts") {
  cvro::ClassifyParams cp;
  cp.jam_spacing = 7.0;
  cp.free_flow_speed = 13.89;
  cvro::BoundsParams bp;
  bp.lambda_max = 0.5;
  bp.h_s = 2.0;
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ScenarioConfig c = scenario(550.0, 0.3, seed);
    const auto r = run_two_stage(c);
    const auto trajs = cvro::sample_cvs(r, 1.0, seed, c.link);
    const auto specs = cvro::cycle_specs(r);
    const auto obs = cvro::observe_cycles(trajs, specs, cp);
    REQUIRE(obs.size() == r.cycles.size());
    for (std::size_t m = 0; m < obs.size(); ++m) {
      const auto& truth = r.cycles[m];
      if (!truth.undersaturated() || !obs[m].informative()) continue;
      CAPTURE(seed);
      CAPTURE(truth.movement_id);
      CAPTURE(truth.cycle_index);
      const auto b = cvro::cycle_arrival_bounds(obs[m], bp);
      REQUIRE(b.valid);
      CHECK(b.lower * r.plan.cycle == doctest::Approx(truth.arrivals).epsilon(1e-9));
      CHECK(b.upper * r.plan.cycle >= truth.arrivals - 1e-9);
      ++checked;
    }
  }
  CHECK(checked >= 200);
}

TEST_CASE("observations from simulated trajectories stay inside their cycle") {
  cvro::ClassifyParams cp;
  for (std::uint64_t seed = 30; seed < 33; ++seed) {
    for (double pen : {0.1, 0.5, 1.0}) {
      ScenarioConfig c = scenario(900.0, 0.5, seed);
      const auto r = run_two_stage(c);
      const auto obs =
          cvro::observe_cycles(cvro::sample_cvs(r, pen, seed, c.link), cvro::cycle_specs(r), cp);
      for (const auto& o : obs) {
        const double C = o.cycle_length;
        if (o.t_lq) {
          CHECK(*o.t_lq >= -1e-9);
          CHECK(*o.t_lq < C);
        }
        if (o.tau_lq) {
          CHECK(*o.tau_lq >= -1e-9);
          CHECK(*o.tau_lq < C);
        }
        if (o.tau_fn) {
          CHECK(*o.tau_fn >= -1e-9);
          CHECK(*o.tau_fn < C);
        }
        if (o.p_lq) CHECK(*o.p_lq >= 1);
        CHECK(o.n_nq >= 0);
      }
    }
  }
}

TEST_CASE("summary statistics") {
  const std::vector<double> one{34.0};
  CHECK(cvro::summarize_delays(one).mean_delay == 34.0);
  const std::vector<double> three{0.0, 10.0, 20.0};
  const auto s = cvro::summarize_delays(three);
  CHECK(s.mean_delay == 10.0);
  CHECK(s.median_delay == 10.0);
  CHECK(cvro::summarize_delays(std::vector<double>{}).empty);

  const std::vector<double> a{3.0, 9.0, 12.0};
  const std::vector<double> b{1.0, 1.0, 40.0};
  std::vector<double> merged = a;
  merged.insert(merged.end(), b.begin(), b.end());
  CHECK(cvro::summarize_delays(merged).mean_delay ==
        doctest::Approx(0.5 * (cvro::summarize_delays(a).mean_delay +
                               cvro::summarize_delays(b).mean_delay)));
}

TEST_CASE("ground truth JSON carries per-cycle counts and per-vehicle delays") {
  ScenarioConfig c = scenario(500.0, 0.2, 2);
  const auto r = run_two_stage(c);
  const auto j = nlohmann::json::parse(cvro::ground_truth_json(r));
  CHECK(j["cycles"].size() == r.cycles.size());
  CHECK(j["vehicles"].size() == r.vehicles.size());
  int total = 0;
  for (const auto& row : j["cycles"]) total += row["arrivals"].get<int>();
  int inside = 0;
  for (const auto& ct : r.cycles) inside += ct.arrivals;
  CHECK(total == inside);
  CHECK(j["vehicles"][0]["delay"].get<double>() == doctest::Approx(r.vehicles[0].delay));
}
