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
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"

#include "cvro/errors.hpp"
#include "cvro/uncertainty.hpp"

using cvro::ArrivalBounds;
using cvro::BoundsParams;
using cvro::CycleObservation;

namespace {

CycleObservation undersaturated(int p_lq, int n_nq, double t_lq, double tau_lq, double tau_fn,
                                double c = 100.0) {
  CycleObservation obs;
  obs.movement_id = "NB_T";
  obs.cycle_length = c;
  obs.p_lq = p_lq;
  obs.t_lq = t_lq;
  obs.tau_lq = tau_lq;
  obs.n_nq = n_nq;
  obs.tau_fn = tau_fn;
  return obs;
}

CycleObservation oversaturated(int p_lq, int p_lr, double t_lq, double t_lr, double tau_lq,
                               double c = 100.0) {
  CycleObservation obs;
  obs.movement_id = "NB_T";
  obs.cycle_length = c;
  obs.p_lq = p_lq;
  obs.t_lq = t_lq;
  obs.tau_lq = tau_lq;
  obs.p_lr = p_lr;
  obs.t_lr = t_lr;
  obs.oversaturated = true;
  return obs;
}

ArrivalBounds bounds(const std::string& movement, int cycle, double lo, double hi) {
  return {movement, cycle, lo, hi, true, ""};
}

}  // namespace

TEST_CASE("first arrivals count") {
  CHECK(cvro::first_arrivals_count(undersaturated(6, 0, 30, 45, 60)) == 6.0);
  CHECK(cvro::first_arrivals_count(oversaturated(10, 4, 50, -20, 70)) ==
        doctest::Approx(6.0 * 50.0 / 70.0));
  CHECK(cvro::first_arrivals_count(oversaturated(7, 7, 50, -20, 70)) == 0.0);
  CHECK_THROWS_AS(cvro::first_arrivals_count(oversaturated(10, 4, 10, 10, 70)),
                  cvro::DegenerateCycleError);
  CHECK_THROWS_AS(cvro::first_arrivals_count(CycleObservation{}), cvro::ParameterError);
}

TEST_CASE("effective maximum rate") {
  const auto obs = undersaturated(6, 2, 30, 45, 60);
  CHECK(cvro::effective_max_rate(obs, {0.5, 2.0}) == doctest::Approx(0.25));
  CHECK(cvro::effective_max_rate(obs, {0.1, 2.0}) == doctest::Approx(0.1));
  CHECK(cvro::effective_max_rate(undersaturated(6, 2, 30, 45, 45), {0.5, 2.0}) == 0.0);
  CHECK_THROWS_AS(cvro::effective_max_rate(undersaturated(6, 2, 30, 45, 30), {0.5, 2.0}),
                  cvro::DegenerateCycleError);
  CHECK_THROWS_AS(cvro::effective_max_rate(obs, {0.0, 2.0}), cvro::ParameterError);
}

TEST_CASE("cycle bounds: undersaturated worked example") {
  const BoundsParams params{0.5, 2.0};
  const auto b = cvro::cycle_arrival_bounds(undersaturated(6, 2, 30, 45, 60), params);
  REQUIRE(b.valid);
  CHECK(b.lower == doctest::Approx(0.08));
  CHECK(b.upper == doctest::Approx(0.335));

  // Recompute from scratch, one column at a time.
  const double c = 100, p = 6, n = 2, t = 30, tau_q = 45, tau_f = 60, h = 2, lmax = 0.5;
  const double cap_col = std::min(lmax, (tau_f - tau_q) / (h * (tau_f - t)));
  const double head_col = p;
  const double mid_col = cap_col * (tau_f - t);
  const double tail_col = lmax * (c - tau_f);
  CHECK(b.upper == doctest::Approx((head_col + mid_col + tail_col) / c));
  CHECK(b.lower == doctest::Approx((head_col + n) / c));
}

TEST_CASE("cycle bounds: oversaturated cycle uses tau_fn = C") {
  const BoundsParams params{0.5, 2.0};
  const auto obs = oversaturated(10, 4, 50, -20, 70);
  const auto b = cvro::cycle_arrival_bounds(obs, params);
  REQUIRE(b.valid);
  const double n1 = 6.0 * 50.0 / 70.0;
  const double cap = std::min(0.5, (100.0 - 70.0) / (2.0 * (100.0 - 50.0)));
  CHECK(b.lower == doctest::Approx(n1 / 100.0));
  CHECK(b.upper == doctest::Approx((n1 + cap * (100.0 - 50.0)) / 100.0));

  // A stray tau_fn does not enter an oversaturated cycle.
  auto with_fn = obs;
  with_fn.tau_fn = 80.0;
  const auto b2 = cvro::cycle_arrival_bounds(with_fn, params);
  CHECK(b2.upper == b.upper);
}

TEST_CASE("cycle bounds: uninformative and degenerate cycles are invalid") {
  const BoundsParams params{0.5, 2.0};
  CycleObservation empty;
  empty.cycle_length = 100;
  CHECK_FALSE(cvro::cycle_arrival_bounds(empty, params).valid);
  CHECK_FALSE(cvro::cycle_arrival_bounds(oversaturated(10, 4, 10, 12, 70), params).valid);
  CHECK_FALSE(cvro::cycle_arrival_bounds(undersaturated(6, 2, 30, 45, 25), params).valid);
}

TEST_CASE("box set medians") {
  const std::vector<ArrivalBounds> odd{bounds("k", 0, 0.05, 0.2), bounds("k", 1, 0.07, 0.3),
                                       bounds("k", 2, 0.09, 0.4)};
  auto box = cvro::build_box_set(odd, {});
  CHECK(box.at("k").l_hat == doctest::Approx(0.07));
  CHECK(box.at("k").u_hat == doctest::Approx(0.3));
  CHECK(box.at("k").support_count == 3);

  const std::vector<ArrivalBounds> even{bounds("k", 0, 0.05, 0.2), bounds("k", 1, 0.07, 0.3)};
  box = cvro::build_box_set(even, {});
  CHECK(box.at("k").l_hat == doctest::Approx(0.06));
  CHECK(box.at("k").u_hat == doctest::Approx(0.25));

  const std::vector<ArrivalBounds> one{bounds("k", 4, 0.11, 0.27)};
  box = cvro::build_box_set(one, {});
  CHECK(box.at("k").l_hat == 0.11);
  CHECK(box.at("k").u_hat == 0.27);
}

TEST_CASE("box set fallback and invalid-cycle exclusion") {
  std::vector<ArrivalBounds> input{bounds("a", 0, 0.1, 0.2), bounds("a", 1, 0.9, 1.0)};
  input[1].valid = false;
  input.push_back({"b", 0, 0.0, 0.0, false, "no queued CV"});
  std::vector<std::string> warnings;
  const auto box = cvro::build_box_set(input, {{"a", 0.5}, {"b", 0.5}, {"c", 0.4}}, &warnings);
  CHECK(box.at("a").support_count == 1);
  CHECK(box.at("a").u_hat == 0.2);
  CHECK(box.at("b").fallback);
  CHECK(box.at("b").u_hat == 0.5);
  CHECK(box.at("c").l_hat == 0.0);
  CHECK(box.at("c").u_hat == 0.4);
  CHECK(warnings.size() == 2);
  CHECK_THROWS_AS(box.at("zz"), cvro::ValidationError);
}

TEST_CASE("mean rate estimate") {
  const std::vector<ArrivalBounds> one{bounds("k", 0, 0.08, 0.335)};
  CHECK(cvro::mean_rate_estimate(one, 0.5) == doctest::Approx(0.2075));
  const std::vector<ArrivalBounds> two{bounds("k", 0, 0.1, 0.2), bounds("k", 1, 0.2, 0.4)};
  CHECK(cvro::mean_rate_estimate(two, 0.5) == doctest::Approx(0.225));
  const std::vector<ArrivalBounds> flat{bounds("k", 0, 0.17, 0.17), bounds("k", 1, 0.17, 0.17)};
  CHECK(cvro::mean_rate_estimate(flat, 0.5) == doctest::Approx(0.17));
  CHECK(cvro::mean_rate_estimate({}, 0.5) == 0.25);
}

TEST_CASE("median coverage holds on random samples") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  std::uniform_int_distribution<int> size(1, 40);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ArrivalBounds> input;
    const int n = size(rng);
    for (int m = 0; m < n; ++m) {
      double lo = u(rng);
      double hi = u(rng);
      if (lo > hi) std::swap(lo, hi);
      input.push_back(bounds("k", m, lo, hi));
    }
    const auto box = cvro::build_box_set(input, {});
    const auto& k = box.at("k");
    CHECK(k.l_hat <= k.u_hat);
    const int need = (n + 1) / 2;
    int covered_lo = 0;
    int covered_hi = 0;
    for (const auto& b : input) {
      covered_lo += b.lower <= k.u_hat;
      covered_hi += b.upper >= k.l_hat;
    }
    CHECK(covered_lo >= need);
    CHECK(covered_hi >= need);
  }
}

TEST_CASE("box set is invariant to cycle order") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  std::vector<ArrivalBounds> input;
  for (int m = 0; m < 25; ++m) {
    const double lo = u(rng);
    input.push_back(bounds(m % 2 ? "a" : "b", m, lo, lo + u(rng)));
  }
  const auto reference = cvro::box_to_json(cvro::build_box_set(input, {}));
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(input.begin(), input.end(), rng);
    CHECK(cvro::box_to_json(cvro::build_box_set(input, {})) == reference);
  }
}

TEST_CASE("bounds scale inversely with the time unit") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  const std::vector<CycleObservation> cases{undersaturated(6, 2, 30, 45, 60),
                                            undersaturated(3, 0, 12, 20, 70, 90),
                                            oversaturated(10, 4, 50, -20, 70)};
  const BoundsParams base{0.5, 2.0};
  for (const auto& obs : cases) {
    const auto ref = cvro::cycle_arrival_bounds(obs, base);
    REQUIRE(ref.valid);
    for (int trial = 0; trial < 20; ++trial) {
      const double c = scale(rng);
      auto scaled = obs;
      scaled.cycle_length *= c;
      *scaled.t_lq *= c;
      *scaled.tau_lq *= c;
      if (scaled.tau_fn) *scaled.tau_fn *= c;
      if (scaled.t_lr) *scaled.t_lr *= c;
      const auto b = cvro::cycle_arrival_bounds(scaled, {base.lambda_max / c, base.h_s * c});
      CHECK(b.lower == doctest::Approx(ref.lower / c).epsilon(1e-12));
      CHECK(b.upper == doctest::Approx(ref.upper / c).epsilon(1e-12));
    }
  }
}

TEST_CASE("exports round trip") {
  std::vector<ArrivalBounds> input{bounds("NB_T", 0, 0.08, 0.335),
                                   {"NB_T", 1, 0.0, 0.0, false, "no queued CV"},
                                   bounds("EB_L", 0, 1.0 / 3.0, 0.5)};
  std::ostringstream csv;
  cvro::write_bounds_csv(csv, input);
  CHECK(csv.str().rfind("movement_id,cycle_index,lower_vps,upper_vps,valid\n", 0) == 0);
  std::istringstream in(csv.str());
  const auto back = cvro::read_bounds_csv(in);
  REQUIRE(back.size() == 3);
  CHECK_FALSE(back[1].valid);
  CHECK(back[2].lower == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  const auto box = cvro::build_box_set(input, {{"NB_T", 0.5}, {"EB_L", 0.5}});
  const auto text = cvro::box_to_json(box);
  const auto parsed = cvro::box_from_json(text);
  CHECK(cvro::box_to_json(parsed) == text);
  CHECK(parsed.at("EB_L").support_count == 1);
  CHECK_THROWS_AS(cvro::box_from_json(R"({"x": {"l_hat": 0.3, "u_hat": 0.1}})"),
                  cvro::ValidationError);
}
