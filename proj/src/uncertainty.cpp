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

#include "cvro/uncertainty.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "cvro/errors.hpp"

namespace cvro {
namespace {

constexpr std::string_view kBoundsHeader = "movement_id,cycle_index,lower_vps,upper_vps,valid";

void require_informative(const CycleObservation& obs) {
  if (!obs.p_lq || !obs.t_lq) {
    throw ParameterError("cycle " + std::to_string(obs.cycle_index) + " of '" +
                         obs.movement_id + "' has no queued CV");
  }
}

double first_non_queued_time(const CycleObservation& obs) {
  if (obs.oversaturated || !obs.tau_fn) return obs.cycle_length;
  return *obs.tau_fn;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

void BoundsParams::validate() const {
  if (!(lambda_max > 0) || !std::isfinite(lambda_max)) {
    throw ParameterError("lambda_max must be positive");
  }
  if (!(h_s > 0) || !std::isfinite(h_s)) throw ParameterError("h_s must be positive");
}

const MovementBox& BoxUncertaintySet::at(const std::string& movement_id) const {
  const auto it = movements.find(movement_id);
  if (it == movements.end()) {
    throw ValidationError("box set has no movement '" + movement_id + "'");
  }
  return it->second;
}

double first_arrivals_count(const CycleObservation& obs) {
  require_informative(obs);
  const double p_lq = *obs.p_lq;
  if (!obs.oversaturated || !obs.p_lr || !obs.t_lr) return p_lq;
  const double span = *obs.t_lq - *obs.t_lr;
  if (!(span > 0)) {
    throw DegenerateCycleError("cycle " + std::to_string(obs.cycle_index) +
                               ": t_lq <= t_lr in an oversaturated cycle");
  }
  return (p_lq - *obs.p_lr) * *obs.t_lq / span;
}

double effective_max_rate(const CycleObservation& obs, const BoundsParams& params) {
  params.validate();
  require_informative(obs);
  if (!obs.tau_lq) {
    throw ParameterError("cycle " + std::to_string(obs.cycle_index) + " lacks tau_lq");
  }
  const double tau_fn = first_non_queued_time(obs);
  const double t_lq = *obs.t_lq;
  if (!(tau_fn > t_lq)) {
    throw DegenerateCycleError("cycle " + std::to_string(obs.cycle_index) +
                               ": tau_fn <= t_lq");
  }
  const double rate = (tau_fn - *obs.tau_lq) / (params.h_s * (tau_fn - t_lq));
  return std::max(0.0, std::min(params.lambda_max, rate));
}

ArrivalBounds cycle_arrival_bounds(const CycleObservation& obs, const BoundsParams& params) {
  params.validate();
  ArrivalBounds out;
  out.movement_id = obs.movement_id;
  out.cycle_index = obs.cycle_index;
  if (!obs.informative() || !obs.tau_lq) {
    out.reason = "no queued CV";
    return out;
  }
  if (!(obs.cycle_length > 0)) {
    out.reason = "non-positive cycle length";
    return out;
  }
  const double c = obs.cycle_length;
  try {
    const double n1 = first_arrivals_count(obs);
    const double cap = effective_max_rate(obs, params);
    const double tau_fn = first_non_queued_time(obs);
    out.lower = (n1 + obs.n_nq) / c;
    out.upper = (n1 + cap * (tau_fn - *obs.t_lq) + params.lambda_max * (c - tau_fn)) / c;
  } catch (const DegenerateCycleError& e) {
    out.reason = e.what();
    return out;
  }
  out.valid = out.lower >= 0 && out.lower <= out.upper;
  if (!out.valid) out.reason = "lower bound exceeds upper bound";
  return out;
}

std::vector<ArrivalBounds> all_cycle_bounds(std::span<const CycleObservation> observations,
                                            const BoundsParams& params) {
  std::vector<ArrivalBounds> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) out.push_back(cycle_arrival_bounds(obs, params));
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ParameterError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

BoxUncertaintySet build_box_set(std::span<const ArrivalBounds> bounds,
                                const std::map<std::string, double>& lambda_max,
                                std::vector<std::string>* warnings) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> samples;
  for (const auto& [movement, cap] : lambda_max) samples[movement];
  for (const ArrivalBounds& b : bounds) {
    auto& [lowers, uppers] = samples[b.movement_id];
    if (!b.valid) continue;
    lowers.push_back(b.lower);
    uppers.push_back(b.upper);
  }

  BoxUncertaintySet box;
  for (const auto& [movement, sample] : samples) {
    MovementBox& entry = box.movements[movement];
    const auto& [lowers, uppers] = sample;
    entry.support_count = static_cast<int>(lowers.size());
    if (!lowers.empty()) {
      entry.l_hat = median(lowers);
      entry.u_hat = median(uppers);
      continue;
    }
    const auto cap = lambda_max.find(movement);
    if (cap == lambda_max.end()) {
      throw ParameterError("movement '" + movement + "' has no valid cycle and no lambda_max");
    }
    entry.l_hat = 0;
    entry.u_hat = cap->second;
    entry.fallback = true;
    if (warnings) {
      warnings->push_back("movement '" + movement +
                          "' has no valid cycle; using the box [0, lambda_max]");
    }
  }
  return box;
}

double mean_rate_estimate(std::span<const ArrivalBounds> bounds, double lambda_max) {
  double sum = 0;
  int count = 0;
  for (const ArrivalBounds& b : bounds) {
    if (!b.valid) continue;
    sum += 0.5 * (b.lower + b.upper);
    ++count;
  }
  return count == 0 ? 0.5 * lambda_max : sum / count;
}

void write_bounds_csv(std::ostream& out, std::span<const ArrivalBounds> bounds) {
  out << kBoundsHeader << '\n';
  char buf[96];
  for (const ArrivalBounds& b : bounds) {
    std::snprintf(buf, sizeof(buf), ",%d,%.10g,%.10g,%s\n", b.cycle_index, b.lower, b.upper,
                  b.valid ? "true" : "false");
    out << b.movement_id << buf;
  }
}

std::vector<ArrivalBounds> read_bounds_csv(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || trim(line) != kBoundsHeader) {
    throw ParseError(1, "expected header '" + std::string(kBoundsHeader) + "'");
  }
  std::vector<ArrivalBounds> out;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = row.find(',', start);
      fields.push_back(trim(row.substr(start, comma == row.npos ? row.npos : comma - start)));
      if (comma == row.npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) throw ParseError(line_no, "expected 5 fields");
    ArrivalBounds b;
    b.movement_id = std::string(fields[0]);
    auto number = [&](std::string_view f, auto& value) {
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(line_no, "bad number '" + std::string(f) + "'");
      }
    };
    number(fields[1], b.cycle_index);
    number(fields[2], b.lower);
    number(fields[3], b.upper);
    if (fields[4] == "true" || fields[4] == "1") {
      b.valid = true;
    } else if (fields[4] != "false" && fields[4] != "0") {
      throw ParseError(line_no, "bad validity flag '" + std::string(fields[4]) + "'");
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::string box_to_json(const BoxUncertaintySet& box) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [movement, entry] : box.movements) {
    doc[movement] = {{"l_hat", entry.l_hat},
                     {"u_hat", entry.u_hat},
                     {"support_count", entry.support_count}};
  }
  return doc.dump(2) + "\n";
}

BoxUncertaintySet box_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("box JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("box JSON must be an object");
  BoxUncertaintySet box;
  for (const auto& [movement, entry] : doc.items()) {
    MovementBox m;
    try {
      m.l_hat = entry.at("l_hat").get<double>();
      m.u_hat = entry.at("u_hat").get<double>();
      m.support_count = entry.value("support_count", 0);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("box entry '" + movement + "': " + e.what());
    }
    if (!(0 <= m.l_hat && m.l_hat <= m.u_hat)) {
      throw ValidationError("box entry '" + movement + "' violates 0 <= l_hat <= u_hat");
    }
    m.fallback = m.support_count == 0;
    box.movements.emplace(movement, m);
  }
  return box;
}

}  // namespace cvro
