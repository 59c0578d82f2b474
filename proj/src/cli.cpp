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

#include "cvro/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvro/errors.hpp"
#include "cvro/experiment.hpp"

namespace cvro {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Common flags of every subcommand.
struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  InputPaths inputs;  // non-empty entries override the config
};

struct OptimizeArgs {
  std::string mode;
  std::string baseline = "cv-ro";
  std::vector<double> cycle_grid;
  bool dump_model = false;
};

struct SimulateArgs {
  std::string plan;
  std::optional<double> penetration;
};

struct SweepArgs {
  std::optional<int> workers;
};

// Infeasible or otherwise unsolved models.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "master seed; defaults to the config seed");
}

void add_inputs(CLI::App* cmd, CommonArgs& args, bool estimates) {
  cmd->add_option("--trajectories", args.inputs.trajectories, "CV trajectory CSV");
  cmd->add_option("--cycles", args.inputs.cycles, "cycle spec CSV");
  if (!estimates) return;
  cmd->add_option("--bounds", args.inputs.bounds, "per-cycle bounds CSV");
  cmd->add_option("--box", args.inputs.box, "box set JSON");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path prepare_out(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config);
  if (args.seed) cfg.scenario.seed = *args.seed;
  const InputPaths& in = args.inputs;
  if (!in.trajectories.empty()) cfg.inputs.trajectories = in.trajectories;
  if (!in.cycles.empty()) cfg.inputs.cycles = in.cycles;
  if (!in.bounds.empty()) cfg.inputs.bounds = in.bounds;
  if (!in.box.empty()) cfg.inputs.box = in.box;
  return cfg;
}

std::string need(const std::string& path, const char* key) {
  if (path.empty()) throw ValidationError(std::string("config is missing inputs.") + key);
  return path;
}

std::vector<CycleSpec> read_cycles(const std::string& path) {
  std::istringstream in(read_text(path));
  return read_cycle_specs(in);
}

std::vector<ArrivalBounds> read_bounds(const std::string& path) {
  std::istringstream in(read_text(path));
  return read_bounds_csv(in);
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int cmd_bounds(const CommonArgs& args, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load(args);
  const auto trajs = read_trajectory_file(need(cfg.inputs.trajectories, "trajectories"));
  const auto cycles = read_cycles(need(cfg.inputs.cycles, "cycles"));
  const TrainingDigest digest = digest_trajectories(cfg, trajs, cycles);

  const fs::path dir = prepare_out(args.out);
  std::ostringstream csv;
  write_bounds_csv(csv, digest.bounds);
  write_text(dir / "bounds.csv", csv.str());
  write_text(dir / "box.json", box_to_json(digest.box));

  for (const auto& w : digest.warnings) err << "warning: " << w << '\n';
  out << "movement  l_hat   u_hat   cycles\n";
  for (const auto& [id, b] : digest.box.movements) {
    out << id << "  " << fixed3(b.l_hat) << "  " << fixed3(b.u_hat) << "  " << b.support_count
        << (b.fallback ? "  (fallback)" : "") << '\n';
  }
  return kExitOk;
}

// Point rates for the deterministic baseline: bounds midpoints when bounds
// are at hand, box midpoints otherwise.
RateMap midpoint_rates(const ExperimentConfig& cfg, const std::vector<ArrivalBounds>* bounds,
                       const BoxUncertaintySet& box) {
  RateMap rates;
  const auto lambda_max = lambda_max_by_movement(cfg);
  for (const auto& m : cfg.intersection.movements) {
    if (bounds) {
      std::vector<ArrivalBounds> mine;
      for (const auto& b : *bounds) {
        if (b.movement_id == m.movement_id) mine.push_back(b);
      }
      rates[m.movement_id] = mean_rate_estimate(mine, lambda_max.at(m.movement_id));
    } else {
      const MovementBox& b = box.at(m.movement_id);
      rates[m.movement_id] = 0.5 * (b.l_hat + b.u_hat);
    }
  }
  return rates;
}

int cmd_optimize(const CommonArgs& args, const OptimizeArgs& opt, std::ostream& out,
                 std::ostream& err) {
  ExperimentConfig cfg = load(args);
  if (!opt.mode.empty()) {
    if (opt.mode == "fixed" || opt.mode == "fixed_time") {
      cfg.optimization.mode = ControlMode::kFixedTime;
    } else if (opt.mode == "real" || opt.mode == "real_time") {
      cfg.optimization.mode = ControlMode::kRealTime;
    } else {
      throw ValidationError("--mode must be fixed or real");
    }
  }
  if (!opt.cycle_grid.empty()) cfg.optimization.cycle_grid = opt.cycle_grid;
  const Method method = method_from_string(opt.baseline);

  OptimizationInstance inst = base_instance(cfg);
  std::optional<std::vector<ArrivalBounds>> bounds;
  std::optional<TrainingDigest> digest;
  if (!cfg.inputs.trajectories.empty()) {
    const auto trajs = read_trajectory_file(cfg.inputs.trajectories);
    if (!cfg.inputs.cycles.empty() && cfg.inputs.box.empty() && cfg.inputs.bounds.empty()) {
      digest = digest_trajectories(cfg, trajs, read_cycles(cfg.inputs.cycles));
      for (const auto& w : digest->warnings) err << "warning: " << w << '\n';
      bounds = digest->bounds;
    }
    inst.cv_arrivals = cv_arrival_times(trajs, cfg.scenario.link.free_flow_speed,
                                        cfg.optimization.max_cvs_per_movement);
  }

  BoxUncertaintySet box;
  if (!cfg.inputs.box.empty()) {
    box = box_from_json(read_text(cfg.inputs.box));
  } else if (!cfg.inputs.bounds.empty()) {
    bounds = read_bounds(cfg.inputs.bounds);
    std::vector<std::string> warnings;
    box = build_box_set(*bounds, lambda_max_by_movement(cfg), &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
  } else if (digest) {
    box = digest->box;
  } else if (method != Method::kTrueRate) {
    throw ValidationError("optimize needs inputs.box, inputs.bounds or trajectories with cycles");
  }
  if (!cfg.inputs.bounds.empty() && !bounds) bounds = read_bounds(cfg.inputs.bounds);

  RateMap rates;
  if (method == Method::kCvRo) {
    rates = robust_counterpart(box);
  } else if (method == Method::kCvDo) {
    rates = midpoint_rates(cfg, bounds ? &*bounds : nullptr, box);
  } else {
    for (const auto& [id, vph] : cfg.scenario.demand_vph) rates[id] = vph / 3600.0;
  }

  const auto grid = cycle_grid(cfg);
  const SolveResult result = method == Method::kCvRo
                                 ? (inst.mode == ControlMode::kFixedTime
                                        ? optimize_fixed_time(inst, box, grid)
                                        : optimize_real_time(inst, box))
                                 : deterministic_baseline(inst, rates, grid);

  const fs::path dir = prepare_out(args.out);
  write_text(dir / "solve.json", solve_result_to_json(result));
  if (opt.dump_model) {
    const SignalModel model =
        inst.mode == ControlMode::kFixedTime
            ? build_fixed_time_model(inst, rates,
                                     result.optimal() ? result.plan.cycle : grid.front())
            : build_real_time_model(inst, rates);
    write_text(dir / "model.lp", to_lp_text(model.lp));
  }
  for (const auto& d : result.diagnostics) err << "note: " << d << '\n';
  if (!result.optimal()) throw InfeasibleError(std::string("solve ended ") + to_string(result.status));

  out << "status " << to_string(result.status) << "  objective " << result.objective
      << "  cycle " << result.plan.cycle << '\n';
  for (const auto& m : result.plan.movements) {
    out << m.movement_id << "  green " << m.g_s << " .. " << m.g_e << "  Q "
        << result.queues.at(m.movement_id) << '\n';
  }
  return kExitOk;
}

SignalPlan choose_plan(const ExperimentConfig& cfg, const std::string& flag) {
  const std::string& path = flag.empty() ? cfg.inputs.plan : flag;
  if (path.empty() || path == "training") return training_plan(cfg);
  if (path == "min-green") return min_green_plan(cfg);
  return plan_from_json(read_text(path));
}

int cmd_simulate(const CommonArgs& args, const SimulateArgs& sim, std::ostream& out,
                 std::ostream& /*err*/) {
  const ExperimentConfig cfg = load(args);
  if (sim.penetration && !(*sim.penetration >= 0 && *sim.penetration <= 1)) {
    throw ValidationError("--penetration must lie in [0, 1]");
  }
  const SignalPlan plan = choose_plan(cfg, sim.plan);
  const std::uint64_t seed = cfg.scenario.seed;
  const auto demand = generate_all_demand(cfg.scenario, mix_seed(seed, "demand"));
  const SimResult result = simulate(plan, demand, cfg.intersection.movements, cfg.scenario.link,
                                    cfg.scenario.horizon_seconds());
  const SimSummary s = measure(result);

  const fs::path dir = prepare_out(args.out);
  write_text(dir / "ground_truth.json", ground_truth_json(result));
  std::ostringstream cycles;
  write_cycle_specs(cycles, cycle_specs(result));
  write_text(dir / "cycles.csv", cycles.str());
  ordered_json summary{{"vehicles", s.vehicles},
                       {"unfinished", s.unfinished},
                       {"mean_delay_s", s.mean_delay},
                       {"median_delay_s", s.median_delay},
                       {"residual_queue_frequency", s.residual_queue_frequency},
                       {"spillback", result.spillback},
                       {"cycle_s", result.plan.cycle}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  if (sim.penetration) {
    const auto trajs = sample_cvs(result, *sim.penetration, mix_seed(seed, "cv"), cfg.scenario.link);
    std::ostringstream csv;
    write_trajectories(csv, trajs);
    write_text(dir / "trajectories.csv", csv.str());
  }
  out << "vehicles " << s.vehicles << "  mean delay " << s.mean_delay << " s  residual frequency "
      << s.residual_queue_frequency << (result.spillback ? "  spillback" : "") << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const SweepArgs& sw, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load(args);
  if (sw.workers) {
    if (*sw.workers < 1) throw ValidationError("--workers must be >= 1");
    cfg.sweep.workers = *sw.workers;
  }
  const EvaluationReport report = run_sweep(cfg, cfg.scenario.seed);
  write_report(report, args.out, cfg.sweep.write_cells);
  for (const auto& f : report.failed_cells) err << "failed: " << f << '\n';
  out << "method    penetration  fluctuation  n   mean_delay_s  residual_freq\n";
  for (const auto& a : report.aggregates) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-9s %-12g %-12g %-3d %-13.3f %.3f\n", to_string(a.method),
                  a.penetration, a.fluctuation, a.count, a.mean_delay, a.mean_residual_frequency);
    out << line;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust signal timing from connected-vehicle trajectories", "cvro"};
  app.require_subcommand(1);

  CommonArgs common;
  OptimizeArgs opt;
  SimulateArgs sim;
  SweepArgs sw;

  CLI::App* bounds = app.add_subcommand("bounds", "per-cycle arrival-rate bounds and the box set");
  add_common(bounds, common);
  add_inputs(bounds, common, false);

  CLI::App* optimize = app.add_subcommand("optimize", "solve for a signal plan");
  add_common(optimize, common);
  add_inputs(optimize, common, true);
  optimize->add_option("--mode", opt.mode, "fixed or real (overrides the config)");
  optimize->add_option("--baseline", opt.baseline, "cv-ro, cv-do or true-rate")
      ->capture_default_str();
  optimize->add_option("--cycle-grid", opt.cycle_grid, "candidate cycle lengths, comma separated")
      ->delimiter(',');
  optimize->add_flag("--dump-model", opt.dump_model, "write the model as LP text");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "simulate one plan");
  add_common(simulate_cmd, common);
  simulate_cmd->add_option("--plan", sim.plan, "plan JSON, or 'training' / 'min-green'");
  simulate_cmd->add_option("--penetration", sim.penetration, "also emit sampled CV trajectories");

  CLI::App* sweep = app.add_subcommand("sweep", "run the method comparison sweep");
  add_common(sweep, common);
  sweep->add_option("--workers", sw.workers, "parallel work groups");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (bounds->parsed()) return cmd_bounds(common, out, err);
    if (optimize->parsed()) return cmd_optimize(common, opt, out, err);
    if (simulate_cmd->parsed()) return cmd_simulate(common, sim, out, err);
    return cmd_sweep(common, sw, out, err);
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace cvro
