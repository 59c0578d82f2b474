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

#include "cvro/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "cvro/errors.hpp"

namespace cvro {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kCycleHeader =
    "movement_id,cycle_index,red_start_s,green_start_s,green_end_s,cycle_length_s,yellow_s";

template <typename T>
T read_or(const json& obj, const char* key, T fallback) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
  return obj.at(key).get<T>();
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

SignalPlan plan_from_spans(const ExperimentConfig& config, const std::vector<double>& spans) {
  SignalPlan plan;
  double start = 0;
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const double end = start + spans[j];
    for (const auto& id : config.intersection.phase.stages[j].movements) {
      for (const auto& m : config.intersection.movements) {
        if (m.movement_id == id) plan.movements.push_back({id, start, end - m.yellow, m.yellow});
      }
    }
    start = end;
  }
  plan.cycle = start;
  return plan;
}

double stddev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / (xs.size() - 1));
}

std::string cell_tag(double pen, double fluct, int rep) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "p%g_cv%g_r%02d", pen, fluct, rep);
  return buf;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::kCvRo: return "CV-RO";
    case Method::kCvDo: return "CV-DO";
    case Method::kTrueRate: return "TrueRate";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "CV-RO" || name == "cv-ro") return Method::kCvRo;
  if (name == "CV-DO" || name == "cv-do") return Method::kCvDo;
  if (name == "TrueRate" || name == "true-rate") return Method::kTrueRate;
  throw ValidationError("unknown method '" + name + "' (expected CV-RO, CV-DO or TrueRate)");
}

void ExperimentConfig::validate() const {
  scenario.validate();
  base_instance(*this).validate();
  const auto& o = optimization;
  if (!(o.grid_step > 0)) throw ValidationError("optimization.cycle_grid_step must be positive");
  if (o.max_cvs_per_movement < 0) {
    throw ValidationError("optimization.max_cvs_per_movement must be >= 0");
  }
  for (const auto& [id, v] : o.lambda_max) {
    if (!(v > 0)) throw ValidationError("optimization.lambda_max of '" + id + "' must be > 0");
  }
  if (!(o.stop_speed > 0) || !(o.min_stop_duration >= 0)) {
    throw ValidationError("optimization stop thresholds must be positive");
  }
  for (double c : o.cycle_grid) {
    if (!(c > 0)) throw ValidationError("optimization.cycle_grid entries must be positive");
  }
  const auto& s = sweep;
  if (s.methods.empty()) throw ValidationError("sweep.methods must not be empty");
  if (s.penetration_rates.empty() || s.fluctuation_cvs.empty()) {
    throw ValidationError("sweep axes must not be empty");
  }
  for (double p : s.penetration_rates) {
    if (!(p >= 0 && p <= 1)) throw ValidationError("sweep penetration rates must lie in [0, 1]");
  }
  for (double f : s.fluctuation_cvs) {
    if (!(f >= 0)) throw ValidationError("sweep fluctuation levels must be >= 0");
  }
  if (s.replications < 1) throw ValidationError("sweep.replications must be >= 1");
  if (s.training_cycles < 1 || s.evaluation_cycles < 1) {
    throw ValidationError("sweep horizons must be >= 1 cycle");
  }
  if (s.workers < 1) throw ValidationError("sweep.workers must be >= 1");
  for (const auto& m : intersection.movements) {
    if (!scenario.demand_vph.count(m.movement_id)) {
      throw ValidationError("scenario.demand_vph has no entry for '" + m.movement_id + "'");
    }
  }
  for (const auto& [id, vph] : scenario.demand_vph) {
    if (std::none_of(intersection.movements.begin(), intersection.movements.end(),
                     [&](const MovementParams& m) { return m.movement_id == id; })) {
      throw ValidationError("scenario.demand_vph names unknown movement '" + id + "'");
    }
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    const json empty = json::object();
    const json& sc = doc.contains("scenario") ? doc.at("scenario") : empty;
    ScenarioConfig& s = cfg.scenario;
    if (sc.contains("demand_vph")) {
      for (const auto& [id, v] : sc.at("demand_vph").items()) s.demand_vph[id] = v.get<double>();
    }
    s.fluctuation_cv = read_or(sc, "fluctuation_cv", s.fluctuation_cv);
    s.penetration_rate = read_or(sc, "penetration_rate", s.penetration_rate);
    s.horizon_cycles = read_or(sc, "horizon_cycles", s.horizon_cycles);
    s.demand_period = read_or(sc, "demand_period", s.demand_period);
    const json& link = sc.contains("link") ? sc.at("link") : empty;
    s.link.link_length = read_or(link, "length", s.link.link_length);
    s.link.free_flow_speed = read_or(link, "free_flow_speed", s.link.free_flow_speed);
    s.link.jam_spacing = read_or(link, "jam_spacing", s.link.jam_spacing);
    s.seed = read_or<std::uint64_t>(doc, "seed", s.seed);

    const json& ix = doc.contains("intersection") ? doc.at("intersection") : empty;
    PhaseStructure& phase = cfg.intersection.phase;
    phase.c_min = read_or(ix, "c_min", phase.c_min);
    phase.c_max = read_or(ix, "c_max", phase.c_max);
    if (ix.contains("stages")) {
      for (const auto& st : ix.at("stages")) {
        Stage stage;
        stage.min_green = read_or(st, "min_green", stage.min_green);
        stage.movements = st.at("movements").get<std::vector<std::string>>();
        phase.stages.push_back(stage);
      }
    }
    if (ix.contains("movements")) {
      for (const auto& mv : ix.at("movements")) {
        MovementParams m;
        m.movement_id = mv.at("id").get<std::string>();
        m.h = read_or(mv, "h", m.h);
        m.yellow = read_or(mv, "yellow", m.yellow);
        m.startup_lost = read_or(mv, "startup_lost", m.startup_lost);
        m.yellow_lost = read_or(mv, "yellow_lost", m.yellow_lost);
        m.stage_index = -1;
        for (std::size_t j = 0; j < phase.stages.size(); ++j) {
          const auto& ids = phase.stages[j].movements;
          if (std::find(ids.begin(), ids.end(), m.movement_id) != ids.end()) {
            m.stage_index = static_cast<int>(j);
          }
        }
        cfg.intersection.movements.push_back(m);
      }
    }

    const json& op = doc.contains("optimization") ? doc.at("optimization") : empty;
    OptimizationConfig& o = cfg.optimization;
    const std::string mode = read_or<std::string>(op, "mode", "fixed_time");
    if (mode == "fixed_time" || mode == "fixed") {
      o.mode = ControlMode::kFixedTime;
    } else if (mode == "real_time" || mode == "real") {
      o.mode = ControlMode::kRealTime;
    } else {
      throw ValidationError("optimization.mode must be fixed_time or real_time");
    }
    o.alpha = read_or(op, "alpha", o.alpha);
    o.grid_step = read_or(op, "cycle_grid_step", o.grid_step);
    o.cycle_grid = read_or(op, "cycle_grid", o.cycle_grid);
    o.big_m = read_or(op, "big_m", o.big_m);
    o.epsilon = read_or(op, "epsilon", o.epsilon);
    o.max_cvs_per_movement = read_or(op, "max_cvs_per_movement", o.max_cvs_per_movement);
    if (op.contains("lambda_max") && op.at("lambda_max").is_string()) {
      if (op.at("lambda_max").get<std::string>() != "empirical") {
        throw ValidationError("optimization.lambda_max must be a map or \"empirical\"");
      }
      o.empirical_lambda_max = true;
    } else {
      o.lambda_max = read_or(op, "lambda_max", o.lambda_max);
    }
    o.red_start = read_or(op, "red_start", o.red_start);
    o.stop_speed = read_or(op, "stop_speed", o.stop_speed);
    o.min_stop_duration = read_or(op, "min_stop_duration", o.min_stop_duration);

    const json& sw = doc.contains("sweep") ? doc.at("sweep") : empty;
    SweepConfig& w = cfg.sweep;
    if (sw.contains("methods")) {
      w.methods.clear();
      for (const auto& name : sw.at("methods")) {
        w.methods.push_back(method_from_string(name.get<std::string>()));
      }
    }
    w.penetration_rates = read_or(sw, "penetration_rates", w.penetration_rates);
    w.fluctuation_cvs = read_or(sw, "fluctuation_cvs", w.fluctuation_cvs);
    w.replications = read_or(sw, "replications", w.replications);
    w.training_cycles = read_or(sw, "training_cycles", w.training_cycles);
    w.evaluation_cycles = read_or(sw, "evaluation_cycles", w.evaluation_cycles);
    w.workers = read_or(sw, "workers", w.workers);
    w.write_cells = read_or(sw, "write_cells", w.write_cells);

    if (doc.contains("training_plan") && !doc.at("training_plan").is_null()) {
      cfg.training_plan = plan_from_json(doc.at("training_plan").dump());
    }
    const json& in = doc.contains("inputs") ? doc.at("inputs") : empty;
    cfg.inputs.trajectories = resolve(base_dir, read_or<std::string>(in, "trajectories", ""));
    cfg.inputs.cycles = resolve(base_dir, read_or<std::string>(in, "cycles", ""));
    cfg.inputs.bounds = resolve(base_dir, read_or<std::string>(in, "bounds", ""));
    cfg.inputs.box = resolve(base_dir, read_or<std::string>(in, "box", ""));
    cfg.inputs.plan = resolve(base_dir, read_or<std::string>(in, "plan", ""));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_experiment_config(slurp(path), base.empty() ? "." : base);
}

void write_cycle_specs(std::ostream& out, std::span<const CycleSpec> cycles) {
  out << kCycleHeader << '\n';
  char buf[160];
  for (const auto& c : cycles) {
    std::snprintf(buf, sizeof(buf), ",%d,%.3f,%.3f,%.3f,%.3f,%.3f\n", c.cycle_index, c.red_start,
                  c.green_start, c.green_end, c.cycle_length, c.yellow);
    out << c.movement_id << buf;
  }
}

std::vector<CycleSpec> read_cycle_specs(std::istream& in) {
  std::vector<CycleSpec> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != kCycleHeader) throw ParseError(line_no, "unexpected cycle spec header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw ParseError(line_no, "expected 7 fields");
    CycleSpec c;
    try {
      c.movement_id = f[0];
      std::size_t used = 0;
      c.cycle_index = std::stoi(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing text");
      double* slots[] = {&c.red_start, &c.green_start, &c.green_end, &c.cycle_length, &c.yellow};
      for (int k = 0; k < 5; ++k) {
        *slots[k] = std::stod(f[k + 2], &used);
        if (used != f[k + 2].size()) throw std::invalid_argument("trailing text");
      }
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "bad number in cycle spec");
    }
    if (c.movement_id.empty()) throw ParseError(line_no, "empty movement id");
    out.push_back(c);
  }
  if (!header) throw ParseError(0, "cycle spec file is empty");
  return out;
}

OptimizationInstance base_instance(const ExperimentConfig& config) {
  OptimizationInstance inst;
  inst.mode = config.optimization.mode;
  inst.movements = config.intersection.movements;
  inst.phase = config.intersection.phase;
  inst.alpha = config.optimization.alpha;
  inst.big_m = config.optimization.big_m;
  inst.epsilon = config.optimization.epsilon;
  inst.red_start = config.optimization.red_start;
  return inst;
}

std::vector<double> cycle_grid(const ExperimentConfig& config) {
  if (!config.optimization.cycle_grid.empty()) return config.optimization.cycle_grid;
  return default_cycle_grid(config.intersection.phase, config.optimization.grid_step);
}

std::map<std::string, double> lambda_max_by_movement(const ExperimentConfig& config) {
  std::map<std::string, double> out;
  for (const auto& m : config.intersection.movements) {
    const auto it = config.optimization.lambda_max.find(m.movement_id);
    out[m.movement_id] = it != config.optimization.lambda_max.end() ? it->second : 1.0 / m.h;
  }
  return out;
}

ClassifyParams classify_params(const ExperimentConfig& config) {
  ClassifyParams p;
  p.stop_speed = config.optimization.stop_speed;
  p.min_stop_duration = config.optimization.min_stop_duration;
  p.jam_spacing = config.scenario.link.jam_spacing;
  p.free_flow_speed = config.scenario.link.free_flow_speed;
  return p;
}

SignalPlan training_plan(const ExperimentConfig& config) {
  if (config.training_plan) return *config.training_plan;
  const OptimizationInstance inst = base_instance(config);
  const auto& phase = config.intersection.phase;
  std::vector<double> spans;
  double used = 0;
  for (std::size_t j = 0; j < phase.stages.size(); ++j) {
    spans.push_back(min_stage_span(inst, static_cast<int>(j)));
    used += spans.back();
  }
  const double cycle = std::max(used, std::clamp(90.0, phase.c_min, phase.c_max));
  for (double& d : spans) d += (cycle - used) / spans.size();
  return plan_from_spans(config, spans);
}

SignalPlan min_green_plan(const ExperimentConfig& config) {
  const OptimizationInstance inst = base_instance(config);
  std::vector<double> spans;
  double used = 0;
  for (std::size_t j = 0; j < config.intersection.phase.stages.size(); ++j) {
    spans.push_back(min_stage_span(inst, static_cast<int>(j)));
    used += spans.back();
  }
  if (used < config.intersection.phase.c_min) {
    spans.back() += config.intersection.phase.c_min - used;
  }
  return plan_from_spans(config, spans);
}

std::map<std::string, std::vector<double>> cv_arrival_times(std::span<const CvTrajectory> trajs,
                                                           double free_flow_speed, int cap) {
  std::map<std::string, std::vector<double>> all;
  for (const auto& t : trajs) all[t.movement_id].push_back(virtual_arrival_time(t, free_flow_speed));
  std::size_t busiest = 0;
  for (auto& [id, times] : all) {
    std::sort(times.begin(), times.end());
    busiest = std::max(busiest, times.size());
  }
  if (cap <= 0 || busiest <= static_cast<std::size_t>(cap)) return all;
  // One sampling ratio for every movement keeps their relative volumes.
  for (auto& [id, times] : all) {
    const std::size_t n = times.size();
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(cap) * n / busiest)));
    if (keep >= n) continue;
    std::vector<double> kept;
    for (std::size_t i = 0; i < keep; ++i) kept.push_back(times[(2 * i + 1) * n / (2 * keep)]);
    times = std::move(kept);
  }
  return all;
}

TrainingDigest digest_trajectories(const ExperimentConfig& config,
                                   std::span<const CvTrajectory> trajs,
                                   std::span<const CycleSpec> cycles) {
  TrainingDigest out;
  const auto observations = observe_cycles(trajs, cycles, classify_params(config));
  auto& lambda_max = out.lambda_max;
  lambda_max = lambda_max_by_movement(config);
  for (const auto& m : config.intersection.movements) {
    std::vector<CycleObservation> mine;
    for (const auto& o : observations) {
      if (o.movement_id == m.movement_id) mine.push_back(o);
    }
    BoundsParams params;
    params.lambda_max = lambda_max.at(m.movement_id);
    params.h_s = m.h;
    if (config.optimization.empirical_lambda_max &&
        !config.optimization.lambda_max.count(m.movement_id)) {
      // Lower bounds do not depend on lambda_max.
      double peak = 0;
      for (const auto& b : all_cycle_bounds(mine, params)) {
        if (b.valid) peak = std::max(peak, b.lower);
      }
      if (peak > 0) params.lambda_max = lambda_max[m.movement_id] = std::min(peak, 1.0 / m.h);
    }
    const auto b = all_cycle_bounds(mine, params);
    out.bounds.insert(out.bounds.end(), b.begin(), b.end());
    out.mean_rates[m.movement_id] = mean_rate_estimate(b, params.lambda_max);
  }
  out.box = build_box_set(out.bounds, lambda_max, &out.warnings);
  out.cv_arrivals = cv_arrival_times(trajs, config.scenario.link.free_flow_speed,
                                     config.optimization.max_cvs_per_movement);
  return out;
}

SolveResult solve_method(const ExperimentConfig& config, Method method,
                         const OptimizationInstance& inst, const TrainingDigest& digest,
                         const RateMap& true_rates) {
  const auto grid = cycle_grid(config);
  switch (method) {
    case Method::kCvRo:
      return inst.mode == ControlMode::kFixedTime ? optimize_fixed_time(inst, digest.box, grid)
                                                  : optimize_real_time(inst, digest.box);
    case Method::kCvDo:
      return deterministic_baseline(inst, digest.mean_rates, grid);
    case Method::kTrueRate:
      return deterministic_baseline(inst, true_rates, grid);
  }
  throw ValidationError("unknown method");
}

EvaluationReport run_sweep(const ExperimentConfig& config, std::uint64_t master_seed) {
  config.validate();
  if (config.optimization.mode != ControlMode::kFixedTime) {
    throw ValidationError("sweeps evaluate fixed-time plans; set optimization.mode to fixed_time");
  }
  const SweepConfig& sw = config.sweep;
  const std::size_t n_methods = sw.methods.size();
  const std::size_t n_pen = sw.penetration_rates.size();
  const std::size_t n_fl = sw.fluctuation_cvs.size();
  const std::size_t n_rep = static_cast<std::size_t>(sw.replications);

  EvaluationReport report;
  report.rows.resize(n_fl * n_pen * n_rep * n_methods);
  auto row_index = [&](std::size_t f, std::size_t p, std::size_t r, std::size_t m) {
    return ((f * n_pen + p) * n_rep + r) * n_methods + m;
  };

  const SignalPlan train_plan = training_plan(config);
  const std::vector<MovementParams>& movements = config.intersection.movements;

  // One unit of work per (fluctuation, replication): it shares the training
  // and evaluation demand across every penetration and method.
  auto run_group = [&](std::size_t f, std::size_t r) {
    const double fluct = sw.fluctuation_cvs[f];
    const std::uint64_t group = mix_seed(mix_seed(master_seed, f), r);
    ScenarioConfig train_sc = config.scenario;
    train_sc.fluctuation_cv = fluct;
    train_sc.horizon_cycles = sw.training_cycles;
    ScenarioConfig eval_sc = train_sc;
    eval_sc.horizon_cycles = sw.evaluation_cycles;

    std::optional<SimResult> train;
    std::map<std::string, std::vector<double>> eval_demand;
    RateMap true_rates;
    std::string setup_error;
    try {
      const auto train_demand = generate_all_demand(train_sc, mix_seed(group, "train"));
      train = simulate(train_plan, train_demand, movements, config.scenario.link,
                       train_sc.horizon_seconds());
      for (const auto& m : movements) {
        const auto it = train_demand.find(m.movement_id);
        const double n = it == train_demand.end() ? 0.0 : static_cast<double>(it->second.size());
        true_rates[m.movement_id] = n / train_sc.horizon_seconds();
      }
      eval_demand = generate_all_demand(eval_sc, mix_seed(group, "eval"));
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    const std::uint64_t cv_seed = mix_seed(group, "cv");

    for (std::size_t p = 0; p < n_pen; ++p) {
      const double pen = sw.penetration_rates[p];
      std::optional<TrainingDigest> digest;
      std::optional<OptimizationInstance> inst;
      std::string digest_error = setup_error;
      if (digest_error.empty()) {
        try {
          const auto trajs = sample_cvs(*train, pen, cv_seed, config.scenario.link);
          const auto specs = cycle_specs(*train);
          digest = digest_trajectories(config, trajs, specs);
          inst = base_instance(config);
          inst->cv_arrivals = digest->cv_arrivals;
        } catch (const std::exception& e) {
          digest_error = e.what();
        }
      }
      for (std::size_t m = 0; m < n_methods; ++m) {
        CellResult& cell = report.rows[row_index(f, p, r, m)];
        cell.method = sw.methods[m];
        cell.penetration = pen;
        cell.fluctuation = fluct;
        cell.replication = static_cast<int>(r);
        if (!digest_error.empty()) {
          cell.status = "Error";
          cell.error = digest_error;
          continue;
        }
        try {
          const auto t0 = std::chrono::steady_clock::now();
          cell.solve = solve_method(config, cell.method, *inst, *digest, true_rates);
          cell.solve_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          cell.status = to_string(cell.solve.status);
          if (!cell.solve.optimal()) {
            cell.error = cell.solve.diagnostics.empty() ? "solve failed"
                                                        : cell.solve.diagnostics.front();
            continue;
          }
          cell.cycle = cell.solve.plan.cycle;
          cell.objective = cell.solve.objective;
          const SimResult eval = simulate(cell.solve.plan, eval_demand, movements,
                                          config.scenario.link, eval_sc.horizon_seconds());
          const SimSummary s = measure(eval);
          cell.mean_delay = s.mean_delay;
          cell.median_delay = s.median_delay;
          cell.residual_queue_frequency = s.residual_queue_frequency;
          cell.vehicles = s.vehicles;
          cell.unfinished = s.unfinished;
          cell.spillback = eval.spillback;
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.status = "Error";
          cell.error = e.what();
        }
      }
    }
  };

  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t f = 0; f < n_fl; ++f) {
    for (std::size_t r = 0; r < n_rep; ++r) groups.emplace_back(f, r);
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(sw.workers), groups.size());
  if (workers <= 1) {
    for (const auto& [f, r] : groups) run_group(f, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < groups.size(); i = next++) {
          run_group(groups[i].first, groups[i].second);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t f = 0; f < n_fl; ++f) {
    for (std::size_t p = 0; p < n_pen; ++p) {
      for (std::size_t m = 0; m < n_methods; ++m) {
        CellAggregate agg;
        agg.method = sw.methods[m];
        agg.penetration = sw.penetration_rates[p];
        agg.fluctuation = sw.fluctuation_cvs[f];
        std::vector<double> delays, residual;
        double solve_total = 0;
        for (std::size_t r = 0; r < n_rep; ++r) {
          const CellResult& cell = report.rows[row_index(f, p, r, m)];
          if (!cell.ok) continue;
          delays.push_back(cell.mean_delay);
          residual.push_back(cell.residual_queue_frequency);
          solve_total += cell.solve_seconds;
        }
        agg.count = static_cast<int>(delays.size());
        if (agg.count > 0) {
          for (double d : delays) agg.mean_delay += d;
          agg.mean_delay /= agg.count;
          for (double q : residual) agg.mean_residual_frequency += q;
          agg.mean_residual_frequency /= agg.count;
          agg.sd_delay = stddev(delays, agg.mean_delay);
          agg.sd_residual_frequency = stddev(residual, agg.mean_residual_frequency);
          agg.mean_solve_seconds = solve_total / agg.count;
        }
        report.aggregates.push_back(agg);
      }
    }
  }
  for (const auto& cell : report.rows) {
    if (!cell.ok) {
      report.failed_cells.push_back(std::string(to_string(cell.method)) + " " +
                                    cell_tag(cell.penetration, cell.fluctuation,
                                             cell.replication) +
                                    ": " + cell.status + (cell.error.empty() ? "" : " " + cell.error));
    }
  }
  return report;
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "method,penetration,fluctuation_cv,replication,status,cycle_s,objective,mean_delay_s,"
        "median_delay_s,residual_queue_frequency,vehicles,unfinished,spillback\n";
  for (const auto& c : report.rows) {
    os << to_string(c.method) << ',' << num(c.penetration) << ',' << num(c.fluctuation) << ','
       << c.replication << ',' << c.status << ',' << num(c.cycle) << ',' << num(c.objective)
       << ',' << num(c.mean_delay) << ',' << num(c.median_delay) << ','
       << num(c.residual_queue_frequency) << ',' << c.vehicles << ',' << c.unfinished << ','
       << (c.spillback ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string report_json(const EvaluationReport& report) {
  ordered_json doc;
  ordered_json rows = ordered_json::array();
  for (const auto& c : report.rows) {
    ordered_json row{{"method", to_string(c.method)},
                     {"penetration", c.penetration},
                     {"fluctuation_cv", c.fluctuation},
                     {"replication", c.replication},
                     {"status", c.status},
                     {"ok", c.ok},
                     {"cycle_s", c.cycle},
                     {"objective", c.objective},
                     {"mean_delay_s", c.mean_delay},
                     {"median_delay_s", c.median_delay},
                     {"residual_queue_frequency", c.residual_queue_frequency},
                     {"vehicles", c.vehicles},
                     {"unfinished", c.unfinished},
                     {"spillback", c.spillback}};
    if (!c.error.empty()) row["error"] = c.error;
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  ordered_json aggs = ordered_json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back({{"method", to_string(a.method)},
                    {"penetration", a.penetration},
                    {"fluctuation_cv", a.fluctuation},
                    {"count", a.count},
                    {"mean_delay_s", a.mean_delay},
                    {"sd_delay_s", a.sd_delay},
                    {"mean_residual_queue_frequency", a.mean_residual_frequency},
                    {"sd_residual_queue_frequency", a.sd_residual_frequency}});
  }
  doc["aggregates"] = std::move(aggs);
  doc["failed_cells"] = report.failed_cells;
  return doc.dump(2) + "\n";
}

std::string timing_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "method,penetration,fluctuation_cv,replication,solve_seconds\n";
  for (const auto& c : report.rows) {
    os << to_string(c.method) << ',' << num(c.penetration) << ',' << num(c.fluctuation) << ','
       << c.replication << ',' << num(c.solve_seconds) << '\n';
  }
  return os.str();
}

void write_report(const EvaluationReport& report, const std::string& dir, bool write_cells) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file(fs::path(dir) / "report.csv", report_csv(report));
  write_file(fs::path(dir) / "report.json", report_json(report));
  write_file(fs::path(dir) / "timing.csv", timing_csv(report));
  if (!write_cells) return;
  for (const auto& c : report.rows) {
    const fs::path cell = fs::path(dir) / "cells" / cell_tag(c.penetration, c.fluctuation,
                                                             c.replication);
    fs::create_directories(cell);
    std::string body;
    if (c.status == "Error") {
      ordered_json err{{"status", "Error"}, {"error", c.error}};
      body = err.dump(2) + "\n";
    } else {
      body = solve_result_to_json(c.solve);
    }
    write_file(cell / (std::string(to_string(c.method)) + ".json"), body);
  }
}

}  // namespace cvro
