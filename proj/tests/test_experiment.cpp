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

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "cvro/errors.hpp"
#include "cvro/experiment.hpp"

using cvro::ExperimentConfig;
using cvro::Method;
using cvro::ValidationError;
using nlohmann::json;

namespace {

json base_doc() {
  return json::parse(R"({
    "seed": 3,
    "scenario": {"demand_vph": {"NB": 500, "EB": 350}, "fluctuation_cv": 0.2},
    "intersection": {
      "c_min": 40, "c_max": 120,
      "movements": [{"id": "NB"}, {"id": "EB", "h": 2.2, "yellow": 4}],
      "stages": [{"min_green": 8, "movements": ["NB"]},
                 {"min_green": 8, "movements": ["EB"]}]
    },
    "optimization": {"cycle_grid_step": 10}
  })");
}

ExperimentConfig parse(const json& doc) { return cvro::parse_experiment_config(doc.dump()); }

// Small enough that hundreds of cells run in a few seconds.
json cheap_sweep_doc() {
  json doc = base_doc();
  doc["scenario"]["demand_vph"] = {{"NB", 300}, {"EB", 200}};
  doc["optimization"]["cycle_grid"] = {60};
  doc["optimization"]["max_cvs_per_movement"] = 2;
  doc["sweep"] = {{"methods", {"CV-RO", "CV-DO", "TrueRate"}},
                  {"penetration_rates", {0.1, 0.3, 0.6, 1.0}},
                  {"fluctuation_cvs", {0.1, 0.4}},
                  {"replications", 20},
                  {"training_cycles", 3},
                  {"evaluation_cycles", 2}};
  return doc;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig cfg = parse(base_doc());
  CHECK(cfg.scenario.seed == 3);
  CHECK(cfg.scenario.demand_vph.at("NB") == 500);
  CHECK(cfg.scenario.link.link_length == 500);
  REQUIRE(cfg.intersection.movements.size() == 2);
  CHECK(cfg.intersection.movements[0].stage_index == 0);
  CHECK(cfg.intersection.movements[1].stage_index == 1);
  CHECK(cfg.intersection.movements[1].h == 2.2);
  CHECK(cfg.intersection.movements[1].yellow == 4);
  CHECK(cfg.optimization.alpha == 3600);
  CHECK(cfg.optimization.big_m == 300);
  CHECK(cfg.optimization.epsilon == doctest::Approx(0.001));
  CHECK(cfg.sweep.training_cycles == 40);
  CHECK(cfg.sweep.evaluation_cycles == 100);
  CHECK(cfg.sweep.methods.size() == 3);

  const auto lmax = cvro::lambda_max_by_movement(cfg);
  CHECK(lmax.at("NB") == doctest::Approx(0.5));
  CHECK(lmax.at("EB") == doctest::Approx(1.0 / 2.2));

  const auto grid = cvro::cycle_grid(cfg);
  CHECK(grid.front() == 40);
  CHECK(grid.back() == 120);
  CHECK(grid.size() == 9);
}

TEST_CASE("config validation names the broken field") {
  auto expect_invalid = [](json doc, const std::string& fragment) {
    try {
      parse(doc);
      FAIL("accepted an invalid config");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  {
    json d = base_doc();
    d["sweep"]["replications"] = 0;
    expect_invalid(d, "replications");
  }
  {
    json d = base_doc();
    d["sweep"]["methods"] = json::array();
    expect_invalid(d, "methods");
  }
  {
    json d = base_doc();
    d["sweep"]["methods"] = {"CV-XX"};
    expect_invalid(d, "CV-XX");
  }
  {
    json d = base_doc();
    d["sweep"]["penetration_rates"] = {1.5};
    expect_invalid(d, "penetration");
  }
  {
    json d = base_doc();
    d["scenario"]["demand_vph"].erase("EB");
    expect_invalid(d, "EB");
  }
  {
    json d = base_doc();
    d["optimization"]["mode"] = "adaptive";
    expect_invalid(d, "mode");
  }
  {
    json d = base_doc();
    d["optimization"]["lambda_max"] = "largest";
    expect_invalid(d, "lambda_max");
  }
  {
    json d = base_doc();
    d["scenario"]["fluctuation_cv"] = "high";
    expect_invalid(d, "config");
  }
  CHECK_THROWS_AS(cvro::parse_experiment_config("{ not json"), ValidationError);
  CHECK_THROWS_AS(cvro::parse_experiment_config("[1, 2]"), ValidationError);
}

TEST_CASE("method names") {
  CHECK(cvro::method_from_string("CV-RO") == Method::kCvRo);
  CHECK(cvro::method_from_string("cv-do") == Method::kCvDo);
  CHECK(cvro::method_from_string("true-rate") == Method::kTrueRate);
  CHECK(std::string(cvro::to_string(Method::kTrueRate)) == "TrueRate");
  CHECK_THROWS_AS(cvro::method_from_string("ro"), ValidationError);
}

TEST_CASE("input paths resolve against the config directory") {
  json d = base_doc();
  d["inputs"] = {{"trajectories", "data/t.csv"}, {"box", "/abs/box.json"}};
  const auto cfg = cvro::parse_experiment_config(d.dump(), "/runs/a");
  CHECK(cfg.inputs.trajectories == "/runs/a/data/t.csv");
  CHECK(cfg.inputs.box == "/abs/box.json");
  CHECK(cfg.inputs.cycles.empty());
}

TEST_CASE("cycle spec CSV round trip") {
  std::vector<cvro::CycleSpec> specs{{"NB", 0, 42.0, 90.0, 132.0, 90.0, 3.0},
                                     {"EB", 7, 1000.125, 1045.5, 1080.25, 90.0, 4.0}};
  std::ostringstream out;
  cvro::write_cycle_specs(out, specs);
  std::istringstream in(out.str());
  const auto back = cvro::read_cycle_specs(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].movement_id == "EB");
  CHECK(back[1].cycle_index == 7);
  CHECK(back[1].red_start == doctest::Approx(1000.125));
  CHECK(back[1].green_end == doctest::Approx(1080.25));
  CHECK(back[0].yellow == 3.0);

  std::istringstream bad("movement_id,cycle_index\nNB,0\n");
  CHECK_THROWS_AS(cvro::read_cycle_specs(bad), cvro::ParseError);
  std::istringstream empty("");
  CHECK_THROWS_AS(cvro::read_cycle_specs(empty), cvro::ParseError);
}

TEST_CASE("training and min-green plans respect the phase structure") {
  const ExperimentConfig cfg = parse(base_doc());
  const auto inst = cvro::base_instance(cfg);
  const auto train = cvro::training_plan(cfg);
  CHECK(train.cycle == 90);
  CHECK(cvro::plan_violations(inst, train).empty());
  const auto ming = cvro::min_green_plan(cfg);
  CHECK(ming.cycle == 40);
  CHECK(cvro::plan_violations(inst, ming).empty());
}

TEST_CASE("CV thinning keeps the movements' relative volumes") {
  std::vector<cvro::CvTrajectory> trajs;
  auto add = [&](const std::string& id, int n) {
    for (int i = 0; i < n; ++i) {
      cvro::CvTrajectory t;
      t.vehicle_id = id + std::to_string(i);
      t.movement_id = id;
      t.points = {{10.0 * i, 100.0, 10.0}, {10.0 * i + 20.0, -100.0, 10.0}};
      trajs.push_back(t);
    }
  };
  add("NB", 40);
  add("EB", 20);
  const auto all = cvro::cv_arrival_times(trajs, 10.0, 0);
  CHECK(all.at("NB").size() == 40);
  CHECK(all.at("EB").size() == 20);
  CHECK(std::is_sorted(all.at("NB").begin(), all.at("NB").end()));
  const auto thin = cvro::cv_arrival_times(trajs, 10.0, 10);
  CHECK(thin.at("NB").size() == 10);
  CHECK(thin.at("EB").size() == 5);
  const auto loose = cvro::cv_arrival_times(trajs, 10.0, 50);
  CHECK(loose.at("NB").size() == 40);
}

TEST_CASE("one cell gives one row") {
  json d = cheap_sweep_doc();
  d["sweep"]["methods"] = {"CV-RO"};
  d["sweep"]["penetration_rates"] = {0.5};
  d["sweep"]["fluctuation_cvs"] = {0.2};
  d["sweep"]["replications"] = 1;
  const auto report = cvro::run_sweep(parse(d), 11);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.aggregates.size() == 1);
  CHECK(report.rows[0].ok);
  CHECK(report.rows[0].cycle == 60);
  const std::string csv = cvro::report_csv(report);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("full cross product appears exactly once, in order") {
  const auto cfg = parse(cheap_sweep_doc());
  const auto report = cvro::run_sweep(cfg, 5);
  REQUIRE(report.rows.size() == 3 * 4 * 2 * 20);
  std::set<std::tuple<int, double, double, int>> seen;
  for (const auto& r : report.rows) {
    seen.insert({static_cast<int>(r.method), r.penetration, r.fluctuation, r.replication});
    CHECK(r.ok);
  }
  CHECK(seen.size() == report.rows.size());
  CHECK(report.rows.front().fluctuation == 0.1);
  CHECK(report.rows.back().fluctuation == 0.4);
  CHECK(report.rows.back().method == Method::kTrueRate);
  CHECK(report.aggregates.size() == 3 * 4 * 2);
  for (const auto& a : report.aggregates) CHECK(a.count == 20);
  CHECK(report.failed_cells.empty());
}

TEST_CASE("sweep reports are a function of config and seed") {
  json d = cheap_sweep_doc();
  d["sweep"]["replications"] = 3;
  auto cfg = parse(d);
  const auto a = cvro::run_sweep(cfg, 9);
  cfg.sweep.workers = 3;
  const auto b = cvro::run_sweep(cfg, 9);
  CHECK(cvro::report_csv(a) == cvro::report_csv(b));
  CHECK(cvro::report_json(a) == cvro::report_json(b));
  const auto c = cvro::run_sweep(cfg, 10);
  CHECK(cvro::report_csv(a) != cvro::report_csv(c));
}

TEST_CASE("methods in one cell are scored on the same evaluation demand") {
  json d = cheap_sweep_doc();
  d["sweep"]["penetration_rates"] = {0.4};
  d["sweep"]["replications"] = 4;
  const auto report = cvro::run_sweep(parse(d), 2);
  for (std::size_t i = 0; i + 2 < report.rows.size(); i += 3) {
    CHECK(report.rows[i].vehicles == report.rows[i + 1].vehicles);
    CHECK(report.rows[i].vehicles == report.rows[i + 2].vehicles);
  }
}

TEST_CASE("stage failures are recorded per cell and the sweep continues") {
  json d = cheap_sweep_doc();
  d["sweep"]["replications"] = 1;
  d["sweep"]["penetration_rates"] = {0.5};
  d["optimization"]["cycle_grid"] = {30};  // below the minimum stage spans
  const auto report = cvro::run_sweep(parse(d), 1);
  CHECK(report.rows.size() == 3 * 2);
  CHECK(report.failed_cells.size() == report.rows.size());
  for (const auto& r : report.rows) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
  }
}

TEST_CASE("real-time sweeps are rejected") {
  json d = cheap_sweep_doc();
  d["optimization"]["mode"] = "real_time";
  d["optimization"]["red_start"] = {{"NB", 0}, {"EB", 0}};
  CHECK_THROWS_AS(cvro::run_sweep(parse(d), 1), ValidationError);
}
