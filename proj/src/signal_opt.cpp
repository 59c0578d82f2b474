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

#include "cvro/signal_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "cvro/errors.hpp"
#include "cvro/simplex.hpp"

namespace cvro {
namespace {

using Model = LinearModel<double>;
using Terms = std::vector<LinearTerm<double>>;

// Accumulates coefficients so a variable appears at most once per row.
class RowBuilder {
 public:
  RowBuilder& add(int var, double coef) {
    for (auto& t : terms_) {
      if (t.var == var) {
        t.coef += coef;
        return *this;
      }
    }
    terms_.push_back({var, coef});
    return *this;
  }
  Terms take() {
    Terms out;
    for (const auto& t : terms_) {
      if (t.coef != 0.0) out.push_back(t);
    }
    return out;
  }

 private:
  Terms terms_;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

int stage_of(const OptimizationInstance& inst, const std::string& movement_id) {
  const auto& stages = inst.phase.stages;
  for (int j = 0; j < static_cast<int>(stages.size()); ++j) {
    const auto& members = stages[j].movements;
    if (std::find(members.begin(), members.end(), movement_id) != members.end()) return j;
  }
  throw ValidationError("movement '" + movement_id + "' belongs to no stage");
}

double rate_of(const RateMap& rates, const std::string& movement_id) {
  const auto it = rates.find(movement_id);
  if (it == rates.end()) {
    throw ValidationError("no arrival rate for movement '" + movement_id + "'");
  }
  if (!(it->second >= 0) || !std::isfinite(it->second)) {
    throw ValidationError("arrival rate of '" + movement_id + "' must be finite and >= 0");
  }
  return it->second;
}

std::vector<double> arrivals_of(const OptimizationInstance& inst, const std::string& id) {
  const auto it = inst.cv_arrivals.find(id);
  return it == inst.cv_arrivals.end() ? std::vector<double>{} : it->second;
}

double total_min_span(const OptimizationInstance& inst) {
  double total = 0;
  for (int j = 0; j < static_cast<int>(inst.phase.stages.size()); ++j) {
    total += min_stage_span(inst, j);
  }
  return total;
}

// Stage spans, queues and per-CV delay variables shared by both modes.
void add_common_variables(const OptimizationInstance& inst, double span_upper, SignalModel& out) {
  Model& lp = out.lp;
  for (int j = 0; j < static_cast<int>(inst.phase.stages.size()); ++j) {
    out.layout.stage_span.push_back(
        lp.add_variable("D" + std::to_string(j + 1), min_stage_span(inst, j), span_upper));
  }
  for (const auto& m : inst.movements) {
    out.layout.queue[m.movement_id] = lp.add_variable("Q_" + m.movement_id, 0, Model::kInf,
                                                      inst.alpha);
  }
}

SignalPlan extract_plan(const OptimizationInstance& inst, const SignalModel& model,
                        const Eigen::VectorXd& x) {
  SignalPlan plan;
  plan.cycle = model.layout.cycle >= 0 ? x(model.layout.cycle) : model.fixed_cycle;
  std::vector<double> ends;
  double acc = 0;
  for (int var : model.layout.stage_span) {
    const auto& v = model.lp.variable(var);
    acc += std::clamp(x(var), v.lower, v.upper);
    ends.push_back(acc);
  }
  // Absorb roundoff so the last stage ends exactly at C.
  if (!ends.empty()) ends.back() = plan.cycle;
  for (const auto& m : inst.movements) {
    const int j = stage_of(inst, m.movement_id);
    const double start = j == 0 ? 0.0 : ends[j - 1];
    plan.movements.push_back({m.movement_id, start, ends[j] - m.yellow, m.yellow});
  }
  return plan;
}

SolveResult run_grid(const OptimizationInstance& inst, const RateMap& rates,
                     const std::vector<double>& cycle_grid, const MilpOptions& options) {
  if (cycle_grid.empty()) throw ParameterError("cycle grid is empty");
  SolveResult best;
  best.status = SolveStatus::kInfeasible;
  bool have_best = false;
  std::vector<std::string> diagnostics;
  std::int64_t nodes = 0;
  std::int64_t pivots = 0;
  std::vector<double> grid = cycle_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  bool hit_limit = false;
  for (double c : grid) {
    if (c < inst.phase.c_min - 1e-9 || c > inst.phase.c_max + 1e-9) {
      throw ParameterError(fmt("cycle %g lies outside [C_min, C_max]", c));
    }
    if (c < total_min_span(inst) - 1e-9) {
      diagnostics.push_back(fmt("C=%g: minimum stage spans exceed the cycle", c));
      continue;
    }
    SolveResult r = solve(build_fixed_time_model(inst, rates, c), inst, options);
    nodes += r.nodes;
    pivots += r.pivots;
    if (!r.optimal()) {
      if (r.status == SolveStatus::kIterationLimit) hit_limit = true;
      diagnostics.push_back(fmt("C=%g: ", c) + to_string(r.status));
      continue;
    }
    // The grid is ascending, so keeping the first of tied objectives picks
    // the shortest cycle.
    const double tol = 1e-9 * std::max(1.0, std::abs(best.objective));
    if (!have_best || r.objective < best.objective - tol) {
      best = std::move(r);
      have_best = true;
    }
  }
  if (!have_best && hit_limit) best.status = SolveStatus::kIterationLimit;
  best.nodes = nodes;
  best.pivots = pivots;
  best.diagnostics.insert(best.diagnostics.begin(), diagnostics.begin(), diagnostics.end());
  return best;
}

SolveResult run_real_time(const OptimizationInstance& inst, const RateMap& rates,
                          const MilpOptions& options) {
  SignalModel model = build_real_time_model(inst, rates);
  SolveResult first = solve(model, inst, options);
  if (!first.optimal()) return first;

  // Among optimal plans prefer the shortest cycle, then re-minimize the
  // original objective with that cycle pinned so delays sit on their
  // lower envelopes.
  SignalModel tie = model;
  RowBuilder cap;
  for (int j = 0; j < tie.lp.num_variables(); ++j) {
    if (tie.lp.variable(j).cost != 0.0) cap.add(j, tie.lp.variable(j).cost);
  }
  const double slack = 1e-9 * std::max(1.0, std::abs(first.objective));
  tie.lp.add_row("objective_cap", cap.take(), Sense::kLessEqual, first.objective + slack);
  for (int j = 0; j < tie.lp.num_variables(); ++j) tie.lp.set_cost(j, 0.0);
  tie.lp.set_cost(tie.layout.cycle, 1.0);
  const auto shortest = solve_lp(tie.lp, options.lp);
  if (shortest.status != SolveStatus::kOptimal) return first;

  SignalModel pinned = model;
  const double c = shortest.x(model.layout.cycle);
  pinned.lp.set_bounds(model.layout.cycle, c, c);
  SolveResult second = solve(pinned, inst, options);
  if (!second.optimal() || second.objective > first.objective + 1e-7 * (1 + std::abs(first.objective))) {
    return first;
  }
  second.diagnostics = first.diagnostics;
  second.pivots += first.pivots + shortest.pivots;
  return second;
}

}  // namespace

const MovementTiming& SignalPlan::at(const std::string& movement_id) const {
  for (const auto& m : movements) {
    if (m.movement_id == movement_id) return m;
  }
  throw ValidationError("plan has no movement '" + movement_id + "'");
}

double SignalPlan::red_time(const std::string& movement_id) const {
  const auto& m = at(movement_id);
  return cycle - (m.g_e - m.g_s + m.yellow);
}

double SignalPlan::red_start(const std::string& movement_id) const {
  const auto& m = at(movement_id);
  return m.g_e + m.yellow;
}

double effective_green(const SignalPlan& plan, const MovementParams& params) {
  const auto& m = plan.at(params.movement_id);
  return m.g_e - m.g_s + m.yellow - params.yellow_lost - params.startup_lost;
}

const MovementParams& OptimizationInstance::movement(const std::string& movement_id) const {
  for (const auto& m : movements) {
    if (m.movement_id == movement_id) return m;
  }
  throw ValidationError("unknown movement '" + movement_id + "'");
}

void OptimizationInstance::validate() const {
  if (movements.empty()) throw ValidationError("instance has no movements");
  if (phase.stages.empty()) throw ValidationError("phase structure has no stages");
  if (!(alpha > 0)) throw ValidationError("alpha must be positive");
  if (!(phase.c_min > 0) || phase.c_min > phase.c_max) {
    throw ValidationError("cycle bounds must satisfy 0 < C_min <= C_max");
  }
  if (!(big_m > phase.c_max)) throw ValidationError("big-M must exceed C_max");
  if (!(epsilon > 0) || epsilon >= 1) throw ValidationError("epsilon must lie in (0, 1)");
  std::set<std::string> seen;
  for (const auto& m : movements) {
    if (!seen.insert(m.movement_id).second) {
      throw ValidationError("duplicate movement '" + m.movement_id + "'");
    }
    if (!(m.h > 0)) throw ValidationError("movement '" + m.movement_id + "': h must be > 0");
    if (!(m.startup_lost >= 0) || !(m.yellow_lost >= 0) || m.yellow < m.yellow_lost) {
      throw ValidationError("movement '" + m.movement_id +
                            "': need Y >= L_y >= 0 and L_s >= 0");
    }
    if (stage_of(*this, m.movement_id) != m.stage_index) {
      throw ValidationError("movement '" + m.movement_id + "' has a stage index that " +
                            "disagrees with the phase structure");
    }
  }
  std::set<std::string> staged;
  for (const auto& stage : phase.stages) {
    if (!(stage.min_green > 0)) throw ValidationError("min_green must be positive");
    for (const auto& id : stage.movements) {
      if (!seen.count(id)) throw ValidationError("stage lists unknown movement '" + id + "'");
      if (!staged.insert(id).second) {
        throw ValidationError("movement '" + id + "' appears in two stages");
      }
    }
  }
  for (const auto& [id, times] : cv_arrivals) {
    if (!seen.count(id)) throw ValidationError("arrivals for unknown movement '" + id + "'");
    for (double t : times) {
      if (!std::isfinite(t)) throw ValidationError("non-finite arrival time for '" + id + "'");
    }
  }
  if (mode == ControlMode::kRealTime) {
    for (const auto& m : movements) {
      if (!red_start.count(m.movement_id)) {
        throw ValidationError("real-time instance lacks the red start of '" + m.movement_id +
                              "'");
      }
    }
  }
}

double min_stage_span(const OptimizationInstance& inst, int stage) {
  const Stage& s = inst.phase.stages.at(stage);
  double span = s.min_green;
  for (const auto& id : s.movements) {
    const auto& m = inst.movement(id);
    span = std::max({span, s.min_green + m.yellow, m.startup_lost + m.yellow_lost});
  }
  return span;
}

CyclicTerms cyclic_arrival_terms(double t0, double cycle, double g_e, double yellow) {
  if (!(cycle > 0)) throw ParameterError("cycle length must be positive");
  CyclicTerms out;
  out.t_mod = t0 - std::floor(t0 / cycle) * cycle;
  const double expr = out.t_mod - g_e - yellow;
  out.b = expr < -kCyclicTieTol ? 1 : 0;
  out.t_i = out.b == 1 ? expr + cycle : std::max(0.0, expr);
  return out;
}

RateMap robust_counterpart(const BoxUncertaintySet& box) {
  RateMap out;
  for (const auto& [id, entry] : box.movements) out[id] = entry.u_hat;
  return out;
}

SignalModel build_fixed_time_model(const OptimizationInstance& inst, const RateMap& rates,
                                   double cycle) {
  inst.validate();
  if (!(cycle > 0) || cycle >= inst.big_m) {
    throw ParameterError(fmt("cycle %g must lie in (0, big-M)", cycle));
  }
  SignalModel out;
  out.mode = ControlMode::kFixedTime;
  out.fixed_cycle = cycle;
  Model& lp = out.lp;
  add_common_variables(inst, cycle, out);
  const auto& span = out.layout.stage_span;

  RowBuilder total;
  for (int var : span) total.add(var, 1.0);
  lp.add_row("cycle", total.take(), Sense::kEqual, cycle);

  for (const auto& m : inst.movements) {
    const double lambda = rate_of(rates, m.movement_id);
    const int j = stage_of(inst, m.movement_id);
    const double a = 1.0 - lambda * m.h;
    const auto times = arrivals_of(inst, m.movement_id);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const std::string tag = m.movement_id + "_" + std::to_string(i + 1);
      const CyclicTerms terms = cyclic_arrival_terms(times[i], cycle, 0.0, 0.0);
      ModelLayout::Cv cv{m.movement_id, times[i], 0.0, -1, -1};
      cv.delay = lp.add_variable("d_" + tag, 0, Model::kInf, 1.0);
      cv.binary = lp.add_binary("b_" + tag);

      // With P_j the end of stage j, t_i = t_mod - P_j + b C and b = 1
      // exactly when the arrival precedes the red start P_j.
      RowBuilder lo;
      RowBuilder hi;
      RowBuilder delay;
      for (int s = 0; s <= j; ++s) {
        lo.add(span[s], -1.0);
        hi.add(span[s], -1.0);
        delay.add(span[s], -a);
      }
      lo.add(cv.binary, inst.big_m);
      hi.add(cv.binary, inst.big_m);
      lp.add_row("wrap_lo_" + tag, lo.take(), Sense::kGreaterEqual, -terms.t_mod);
      lp.add_row("wrap_hi_" + tag, hi.take(), Sense::kLessEqual,
                 inst.big_m - inst.epsilon - terms.t_mod);
      // d_i >= C - D_j + L_s - a t_i
      delay.add(cv.delay, 1.0).add(span[j], 1.0).add(cv.binary, a * cycle);
      lp.add_row("delay_" + tag, delay.take(), Sense::kGreaterEqual,
                 cycle + m.startup_lost - a * terms.t_mod);
      out.layout.cvs.push_back(cv);
    }
    // Q_k >= lambda C - (D_j - L_y - L_s) / h
    RowBuilder queue;
    queue.add(out.layout.queue.at(m.movement_id), 1.0).add(span[j], 1.0 / m.h);
    lp.add_row("queue_" + m.movement_id, queue.take(), Sense::kGreaterEqual,
               lambda * cycle + (m.yellow_lost + m.startup_lost) / m.h);
  }
  return out;
}

SignalModel build_real_time_model(const OptimizationInstance& inst, const RateMap& rates) {
  inst.validate();
  SignalModel out;
  out.mode = ControlMode::kRealTime;
  Model& lp = out.lp;
  add_common_variables(inst, inst.phase.c_max, out);
  const auto& span = out.layout.stage_span;
  out.layout.cycle = lp.add_variable("C", inst.phase.c_min, inst.phase.c_max);

  RowBuilder total;
  for (int var : span) total.add(var, 1.0);
  total.add(out.layout.cycle, -1.0);
  lp.add_row("cycle", total.take(), Sense::kEqual, 0.0);

  for (const auto& m : inst.movements) {
    const double lambda = rate_of(rates, m.movement_id);
    const int j = stage_of(inst, m.movement_id);
    const double a = 1.0 - lambda * m.h;
    const double rs = inst.red_start.at(m.movement_id);
    const auto times = arrivals_of(inst, m.movement_id);
    int clamped = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const std::string tag = m.movement_id + "_" + std::to_string(i + 1);
      ModelLayout::Cv cv{m.movement_id, times[i], std::max(0.0, times[i] - rs), -1, -1};
      if (times[i] < rs) ++clamped;
      cv.delay = lp.add_variable("d_" + tag, 0, Model::kInf, 1.0);
      RowBuilder delay;
      delay.add(cv.delay, 1.0).add(out.layout.cycle, -1.0).add(span[j], 1.0);
      lp.add_row("delay_" + tag, delay.take(), Sense::kGreaterEqual,
                 m.startup_lost - a * cv.t_i);
      out.layout.cvs.push_back(cv);
    }
    if (clamped > 0) {
      out.notes.push_back(m.movement_id + ": " + std::to_string(clamped) +
                          " CV arrival(s) before red start clamped to t_i = 0");
    }
    RowBuilder queue;
    queue.add(out.layout.queue.at(m.movement_id), 1.0)
        .add(out.layout.cycle, -lambda)
        .add(span[j], 1.0 / m.h);
    lp.add_row("queue_" + m.movement_id, queue.take(), Sense::kGreaterEqual,
               (m.yellow_lost + m.startup_lost) / m.h);
  }
  return out;
}

SolveResult solve(const SignalModel& model, const OptimizationInstance& inst,
                  const MilpOptions& options) {
  SolveResult out;
  out.diagnostics = model.notes;
  Eigen::VectorXd x;
  if (model.lp.num_binaries() > 0) {
    const auto milp = solve_milp(model.lp, options);
    out.status = milp.status;
    out.objective = milp.objective;
    out.nodes = milp.nodes;
    out.pivots = milp.pivots;
    x = milp.x;
  } else {
    const auto lp = solve_lp(model.lp, options.lp);
    out.status = lp.status;
    out.objective = lp.objective;
    out.pivots = lp.pivots;
    x = lp.x;
  }
  if (out.status != SolveStatus::kOptimal) return out;

  out.plan = extract_plan(inst, model, x);
  for (const auto& cv : model.layout.cvs) {
    CvOutcome o{cv.movement_id, cv.t0, cv.t_i, std::max(0.0, x(cv.delay)), std::nullopt};
    if (cv.binary >= 0) {
      const auto& t = out.plan.at(cv.movement_id);
      o.b_i = static_cast<int>(std::lround(x(cv.binary)));
      o.t_i = cyclic_arrival_terms(cv.t0, out.plan.cycle, t.g_e, t.yellow).t_i;
    }
    out.cvs.push_back(o);
  }
  for (const auto& [id, var] : model.layout.queue) out.queues[id] = std::max(0.0, x(var));
  return out;
}

std::vector<double> default_cycle_grid(const PhaseStructure& phase, double step) {
  if (!(step > 0)) throw ParameterError("cycle grid step must be positive");
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double c = phase.c_min + i * step;
    if (c > phase.c_max + 1e-9) break;
    grid.push_back(c);
  }
  return grid;
}

SolveResult optimize_fixed_time(const OptimizationInstance& inst, const BoxUncertaintySet& box,
                                const std::vector<double>& cycle_grid,
                                const MilpOptions& options) {
  return run_grid(inst, robust_counterpart(box), cycle_grid, options);
}

SolveResult optimize_real_time(const OptimizationInstance& inst, const BoxUncertaintySet& box,
                               const MilpOptions& options) {
  return run_real_time(inst, robust_counterpart(box), options);
}

SolveResult deterministic_baseline(const OptimizationInstance& inst, const RateMap& point_rates,
                                   const std::vector<double>& cycle_grid,
                                   const MilpOptions& options) {
  if (inst.mode == ControlMode::kRealTime) return run_real_time(inst, point_rates, options);
  return run_grid(inst, point_rates, cycle_grid, options);
}

double closed_form_delay(double red, double startup_lost, double rate, double h, double t_i) {
  return std::max(0.0, red + startup_lost - (1.0 - rate * h) * t_i);
}

double closed_form_queue(double rate, double cycle, double g_eff, double h) {
  return std::max(0.0, rate * cycle - g_eff / h);
}

ClosedFormEvaluation evaluate_plan_closed_form(const OptimizationInstance& inst,
                                               const SignalPlan& plan, const RateMap& rates) {
  ClosedFormEvaluation out;
  for (const auto& m : inst.movements) {
    const double lambda = rate_of(rates, m.movement_id);
    const auto& timing = plan.at(m.movement_id);
    const double red = plan.red_time(m.movement_id);
    for (double t0 : arrivals_of(inst, m.movement_id)) {
      CvOutcome o{m.movement_id, t0, 0.0, 0.0, std::nullopt};
      if (inst.mode == ControlMode::kFixedTime) {
        const auto terms = cyclic_arrival_terms(t0, plan.cycle, timing.g_e, timing.yellow);
        o.t_i = terms.t_i;
        o.b_i = terms.b;
      } else {
        o.t_i = std::max(0.0, t0 - inst.red_start.at(m.movement_id));
      }
      o.d_i = closed_form_delay(red, m.startup_lost, lambda, m.h, o.t_i);
      out.objective += o.d_i;
      out.cvs.push_back(o);
    }
    const double q =
        closed_form_queue(lambda, plan.cycle, effective_green(plan, m), m.h);
    out.queues[m.movement_id] = q;
    out.objective += inst.alpha * q;
  }
  return out;
}

std::vector<std::string> plan_violations(const OptimizationInstance& inst, const SignalPlan& plan,
                                         double tol) {
  std::vector<std::string> out;
  const double c = plan.cycle;
  for (const auto& m : inst.movements) {
    const auto& t = plan.at(m.movement_id);
    const std::string who = m.movement_id + ": ";
    if (t.g_s < -tol || !(t.g_s < t.g_e) || t.g_e > c + tol) out.push_back(who + "0 <= g_s < g_e <= C");
    if (plan.red_time(m.movement_id) < -tol) out.push_back(who + "negative red time");
    if (effective_green(plan, m) < -tol) out.push_back(who + "negative effective green");
    if (t.g_e - t.g_s < inst.phase.stages[stage_of(inst, m.movement_id)].min_green - tol) {
      out.push_back(who + "green shorter than the stage minimum");
    }
  }
  const auto& stages = inst.phase.stages;
  for (std::size_t j = 0; j + 1 < stages.size(); ++j) {
    double end = -1e300;
    for (const auto& id : stages[j].movements) end = std::max(end, plan.red_start(id));
    for (const auto& id : stages[j + 1].movements) {
      if (plan.at(id).g_s < end - tol) {
        out.push_back("stage " + std::to_string(j + 2) + " starts before stage " +
                      std::to_string(j + 1) + " ends");
      }
    }
  }
  return out;
}

std::string solve_result_to_json(const SolveResult& result) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["status"] = to_string(result.status);
  doc["objective"] = result.objective;
  doc["C"] = result.plan.cycle;
  ordered_json movements = ordered_json::object();
  for (const auto& m : result.plan.movements) {
    const auto q = result.queues.find(m.movement_id);
    movements[m.movement_id] = {{"g_s", m.g_s},
                                {"g_e", m.g_e},
                                {"yellow", m.yellow},
                                {"Q_k", q == result.queues.end() ? 0.0 : q->second}};
  }
  doc["movements"] = movements;
  ordered_json cvs = ordered_json::array();
  for (const auto& cv : result.cvs) {
    ordered_json row = {{"movement_id", cv.movement_id},
                        {"t_i0", cv.t0},
                        {"t_i", cv.t_i},
                        {"d_i", cv.d_i}};
    row["b_i"] = cv.b_i ? ordered_json(*cv.b_i) : ordered_json(nullptr);
    cvs.push_back(row);
  }
  doc["cvs"] = cvs;
  doc["diagnostics"] = result.diagnostics;
  return doc.dump(2) + "\n";
}

SignalPlan plan_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("plan JSON: ") + e.what());
  }
  SignalPlan plan;
  try {
    plan.cycle = doc.at("C").get<double>();
    for (const auto& [id, m] : doc.at("movements").items()) {
      plan.movements.push_back(
          {id, m.at("g_s").get<double>(), m.at("g_e").get<double>(), m.value("yellow", 0.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("plan JSON: ") + e.what());
  }
  if (!(plan.cycle > 0)) throw ValidationError("plan JSON: C must be positive");
  return plan;
}

}  // namespace cvro
