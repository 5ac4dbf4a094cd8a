#include <doctest.h>

#include <algorithm>

#include "cthrv/errors.hpp"
#include "cthrv/simulator.hpp"
#include "test_support.hpp"

using namespace cthrv;
using cthrv::test::kTrueParams;

TEST_CASE("simulate_follower at equilibrium stays put") {
  const std::vector<double> lead(500, 24.4);
  const auto t = simulate_follower(kTrueParams, lead, 24.4, 1.5 * 24.4, 0.1);
  REQUIRE(t.size() == lead.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    REQUIRE(t.v()[i] == doctest::Approx(24.4).epsilon(1e-12));
    REQUIRE(t.s()[i] == doctest::Approx(36.6).epsilon(1e-12));
  }
}

TEST_CASE("simulate_follower first Euler step") {
  const std::vector<double> lead{24.4, 24.4, 24.4};
  const auto t = simulate_follower(kTrueParams, lead, 24.4, 62.5, 0.1);
  CHECK(t.v()[1] == doctest::Approx(24.6072).epsilon(1e-14));
  CHECK(t.s()[1] == 62.5);
}

TEST_CASE("gap update is exact") {
  const auto t = test::benchmark_trajectory();
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    REQUIRE(t.s()[k + 1] == t.s()[k] + t.dt() * (t.v_lead()[k] - t.v()[k]));
  }
}

TEST_CASE("scalar and matrix recurrences agree over the benchmark run") {
  const auto lead = generate_lead_profile(benchmark_lead_spec());
  const auto m = build_state_matrices(kTrueParams, 0.1);
  const auto scalar = simulate_follower(kTrueParams, lead, 24.4, 62.5, 0.1);
  const auto matrix = simulate_state_space(m, lead, 24.4, 62.5);
  double worst = 0.0;
  for (std::size_t k = 0; k < scalar.size(); ++k) {
    worst = std::max({worst, std::abs(scalar.v()[k] - matrix.v()[k]),
                      std::abs(scalar.s()[k] - matrix.s()[k])});
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("simulate_follower signals collapse") {
  const std::vector<double> lead(200, 0.0);
  try {
    (void)simulate_follower(kTrueParams, lead, 20.0, 5.0, 0.1);
    FAIL("expected collapse");
  } catch (const TrajectoryCollapseError& e) {
    CHECK(e.vehicle() == 0);
    CHECK(e.step() > 0);
  }
  CHECK_THROWS_AS(simulate_follower(kTrueParams, std::vector<double>{1.0}, 1.0, 1.0, 0.1),
                  ValidationError);
  CHECK_THROWS_AS(simulate_follower(kTrueParams, lead, 1.0, -1.0, 0.1), ValidationError);
}

TEST_CASE("generate_lead_profile") {
  SUBCASE("no events") {
    LeadProfileSpec spec;
    spec.duration = 10.0;
    spec.dt = 0.1;
    spec.base_speed = 24.4;
    const auto p = generate_lead_profile(spec);
    REQUIRE(p.size() == 100);
    CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v == 24.4; }));
  }
  SUBCASE("single ramp reaches the target at 3.2 s") {
    LeadProfileSpec spec;
    spec.duration = 10.0;
    spec.dt = 0.1;
    spec.base_speed = 24.4;
    spec.events = {{1.0, 20.0, 2.0}};
    const auto p = generate_lead_profile(spec);
    CHECK(p[10] == 24.4);
    CHECK(p[21] == doctest::Approx(22.2).epsilon(1e-12));
    CHECK(p[31] > 20.0);
    CHECK(p[32] == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(p[33] == 20.0);
    CHECK(p.back() == 20.0);
  }
  SUBCASE("seeded jitter is reproducible") {
    auto spec = benchmark_lead_spec();
    spec.jitter_std = 0.1;
    spec.seed = 99;
    const auto a = generate_lead_profile(spec);
    const auto b = generate_lead_profile(spec);
    CHECK(a == b);
    spec.seed = 100;
    CHECK(generate_lead_profile(spec) != a);
    CHECK(std::all_of(a.begin(), a.end(), [](double v) { return v >= 0.0; }));
  }
  SUBCASE("overlapping events are rejected") {
    LeadProfileSpec spec;
    spec.events = {{1.0, 20.0, 1.0}, {2.0, 24.0, 1.0}};
    CHECK_THROWS_AS(generate_lead_profile(spec), ValidationError);
  }
  SUBCASE("invalid fields") {
    LeadProfileSpec spec;
    spec.dt = 0.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = {};
    spec.events = {{1.0, 20.0, 0.0}};
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = {};
    spec.jitter_std = -1.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }
}

TEST_CASE("benchmark lead profile shape") {
  const auto spec = benchmark_lead_spec();
  const auto p = generate_lead_profile(spec);
  REQUIRE(p.size() == 6200);
  CHECK(p.front() == 24.4);
  CHECK(*std::min_element(p.begin(), p.end()) == doctest::Approx(18.4));
  CHECK(*std::max_element(p.begin(), p.end()) == doctest::Approx(24.4));
  // dip bottoms 4 s after each dip start
  for (double dip : {60.0, 240.0, 420.0}) {
    CHECK(p[static_cast<std::size_t>(std::lround((dip + 4.0) / 0.1))] == doctest::Approx(18.4));
  }
}

TEST_CASE("simulate_platoon") {
  SUBCASE("constant lead leaves every follower at rest") {
    const std::vector<double> lead(1000, 24.4);
    const auto r = simulate_platoon(kTrueParams, 4, lead, 0.1);
    REQUIRE(r.followers.size() == 4);
    CHECK(r.lead_speed == lead);
    for (double d : r.peak_deviation) CHECK(d < 1e-12);
  }
  SUBCASE("string-unstable parameters amplify the dip") {
    const auto lead = generate_lead_profile(standard_dip_spec());
    const auto r = simulate_platoon(kTrueParams, 6, lead, 0.1);
    CHECK(r.peak_deviation[5] > r.peak_deviation[1]);
  }
  SUBCASE("string-stable parameters damp the dip") {
    const auto lead = generate_lead_profile(standard_dip_spec());
    const auto r = simulate_platoon(ModelParams(0.5, 0.5, 2.0), 6, lead, 0.1);
    CHECK(r.peak_deviation[5] < r.peak_deviation[1]);
  }
  SUBCASE("preconditions") {
    std::vector<double> lead(1000, 24.4);
    CHECK_THROWS_AS(simulate_platoon(kTrueParams, 1, lead, 0.1), ValidationError);
    lead[10] = 20.0;
    CHECK_THROWS_AS(simulate_platoon(kTrueParams, 3, lead, 0.1), ValidationError);
  }
  SUBCASE("collapse reports the follower index") {
    std::vector<double> lead(3000, 24.4);
    for (std::size_t k = 60; k < lead.size(); ++k) lead[k] = 0.0;  // instant stop
    try {
      (void)simulate_platoon(ModelParams(0.02, 0.01, 1.0), 3, lead, 0.1);
      FAIL("expected collapse");
    } catch (const TrajectoryCollapseError& e) {
      CHECK(e.vehicle() == 0);
    }
  }
}
