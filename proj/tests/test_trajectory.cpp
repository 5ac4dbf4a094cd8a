#include <doctest.h>

#include <random>
#include <sstream>

#include "cthrv/errors.hpp"
#include "cthrv/trajectory.hpp"
#include "test_support.hpp"

using namespace cthrv;

namespace {

const char* kLeadCsv =
    "time,v,s,v_l\n"
    "0.0,24.4,62.5,24.4\n"
    "0.1,24.6,62.5,24.5\n"
    "0.2,24.7,62.49,24.3\n"
    "0.3,24.8,62.45,24.0\n";

Trajectory parse(const std::string& text, TrajectoryFormat fmt = TrajectoryFormat::Auto) {
  std::istringstream in(text);
  return load_trajectory(in, fmt);
}

}  // namespace

TEST_CASE("load_trajectory lead-speed format") {
  const auto t = parse(kLeadCsv, TrajectoryFormat::LeadSpeed);
  CHECK(t.size() == 4);
  CHECK(t.dt() == doctest::Approx(0.1));
  CHECK(t.t0() == 0.0);
  CHECK(t.v()[2] == 24.7);
  CHECK(t.s()[3] == 62.45);
  CHECK(t.v_lead()[1] == 24.5);
}

TEST_CASE("relative-speed format reconstructs v_l = v + dv") {
  const auto direct = parse(kLeadCsv);
  std::ostringstream rel;
  rel << "time,v,s,dv\n";
  rel.precision(17);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    rel << direct.time(i) << ',' << direct.v()[i] << ',' << direct.s()[i] << ','
        << direct.v_lead()[i] - direct.v()[i] << '\n';
  }
  const auto t = parse(rel.str(), TrajectoryFormat::RelativeSpeed);
  REQUIRE(t.size() == direct.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.v_lead()[i] == doctest::Approx(direct.v_lead()[i]).epsilon(1e-15));
  }
}

TEST_CASE("column order and CRLF line endings are tolerated") {
  const auto t = parse("s,time,v_l,v\r\n10,0,20,21\r\n11,0.5,20,21\r\n");
  CHECK(t.size() == 2);
  CHECK(t.dt() == 0.5);
  CHECK(t.s()[1] == 11.0);
  CHECK(t.v()[0] == 21.0);
}

TEST_CASE("load_trajectory errors") {
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0.0,1,2,3\n0.1,1,2,3\n0.25,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s\n0,1,2\n0.1,1,2\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0,1,0,3\n0.1,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0,1,abc,3\n0.1,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0,1,2\n0.1,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
  CHECK_THROWS_AS(parse("time,v,s,v_l\n0.1,1,2,3\n0.0,1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse("time,v,s,dv\n0,1,2,3\n0.1,1,2,3\n", TrajectoryFormat::LeadSpeed), DataError);
}

TEST_CASE("timestamps within tolerance are accepted") {
  const auto t = parse("time,v,s,v_l\n0,1,2,3\n0.1,1,2,3\n0.2000004,1,2,3\n0.3,1,2,3\n");
  CHECK(t.size() == 4);
}

TEST_CASE("load -> emit -> load is the identity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 40.0);
  std::uniform_real_distribution<double> start(-100.0, 1000.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 50;
    std::vector<double> v(n), s(n), vl(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = u(rng);
      s[i] = u(rng);
      vl[i] = u(rng);
    }
    const double dt = trial % 2 == 0 ? 0.1 : 0.05 * (1 + static_cast<double>(trial % 7));
    const Trajectory original(dt, trial % 3 == 0 ? 0.0 : start(rng), v, s, vl);

    std::stringstream first;
    write_trajectory(first, original);
    const auto loaded = load_trajectory(first);
    std::stringstream second;
    write_trajectory(second, loaded);
    const auto reloaded = load_trajectory(second);

    REQUIRE(reloaded == loaded);
    CHECK(second.str() == [&] {
      std::stringstream again;
      write_trajectory(again, reloaded);
      return again.str();
    }());
    // series values survive the first text hop bit-exactly
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(loaded.v()[i] == v[i]);
      REQUIRE(loaded.s()[i] == s[i]);
      REQUIRE(loaded.v_lead()[i] == vl[i]);
    }
  }
}

TEST_CASE("resample_uniform") {
  const std::vector<double> t{0.0, 1.0};
  const std::vector<double> x{0.0, 10.0};
  CHECK(resample_uniform(t, x, 0.5) == std::vector<double>{0.0, 5.0, 10.0});

  const std::vector<double> t3{0.0, 1.0, 2.0};
  const std::vector<double> x3{0.0, 10.0, 0.0};
  const auto r = resample_uniform(t3, x3, 0.25);
  REQUIRE(r.size() == 9);
  CHECK(r[6] == doctest::Approx(5.0));
  CHECK(r[2] == doctest::Approx(5.0));
  CHECK(r[4] == 10.0);

  SUBCASE("original grid is the identity") {
    std::vector<double> tt, xx;
    for (int i = 0; i < 20; ++i) {
      tt.push_back(i * 0.5);
      xx.push_back(std::sin(i));
    }
    CHECK(resample_uniform(tt, xx, 0.5) == xx);
  }
  SUBCASE("exact on affine data") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> tt{0.0};
    for (int i = 0; i < 30; ++i) tt.push_back(tt.back() + u(rng));
    const double a = 2.5, b = -7.0;
    std::vector<double> xx;
    for (double ti : tt) xx.push_back(a * ti + b);
    const double step = 0.137;
    const auto out = resample_uniform(tt, xx, step);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double ti = std::min(static_cast<double>(i) * step, tt.back());
      REQUIRE(std::abs(out[i] - (a * ti + b)) < 1e-12);
    }
    CHECK(static_cast<double>(out.size() - 1) * step <= tt.back() + 1e-9);
  }

  CHECK_THROWS_AS(resample_uniform(std::vector<double>{}, std::vector<double>{}, 0.1), DataError);
  CHECK_THROWS_AS(resample_uniform(t, x, 0.0), ValidationError);
  CHECK_THROWS_AS(resample_uniform(std::vector<double>{0, 0}, std::vector<double>{1, 2}, 0.1),
                  DataError);
}

TEST_CASE("compare_sensors") {
  const auto base = test::benchmark_trajectory();

  SUBCASE("identical trajectories") {
    const auto c = compare_sensors(base, base);
    CHECK(c.mean_gap_err == 0.0);
    CHECK(c.std_gap_err == 0.0);
    CHECK(c.mean_rel_speed_err == 0.0);
    CHECK(c.std_rel_speed_err == 0.0);
    CHECK(c.histogram_gap.total() == base.size());
    CHECK(c.histogram_gap.counts.size() == 1);
  }
  SUBCASE("constant gap offset") {
    std::vector<double> s(base.s().begin(), base.s().end());
    for (double& x : s) x += 1.0;
    const Trajectory radar(base.dt(), base.t0(), {base.v().begin(), base.v().end()}, s,
                           {base.v_lead().begin(), base.v_lead().end()});
    const auto c = compare_sensors(radar, base);
    CHECK(c.mean_gap_err == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.std_gap_err < 1e-12);
    CHECK(c.histogram_rel_speed.total() == base.size());
  }
  SUBCASE("population standard deviation") {
    const Trajectory gps(0.1, 0.0, {20, 20, 20}, {10, 10, 10}, {20, 20, 20});
    const Trajectory radar(0.1, 0.0, {20, 20, 20}, {9, 10, 11}, {20, 20, 20});
    const auto c = compare_sensors(radar, gps);
    CHECK(c.mean_gap_err == 0.0);
    CHECK(c.std_gap_err == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    // bins of width 0.1 centred on -1, 0, 1
    CHECK(c.histogram_gap.total() == 3);
    CHECK(c.histogram_gap.edges.front() == doctest::Approx(-1.05));
    CHECK(c.histogram_gap.edges.back() == doctest::Approx(1.05));
    CHECK(c.histogram_gap.counts.front() == 1);
    CHECK(c.histogram_gap.counts.back() == 1);
  }
  SUBCASE("length mismatch") {
    const Trajectory short_traj(0.1, 0.0, {20, 20}, {10, 10}, {20, 20});
    CHECK_THROWS_AS(compare_sensors(base, short_traj), DataError);
  }
}

TEST_CASE("read_csv_columns keeps every named column") {
  std::istringstream in("time, v_l ,x\n0,1,2\n0.5,3,4\n\n");
  const auto table = read_csv_columns(in);
  REQUIRE(table.names == std::vector<std::string>{"time", "v_l", "x"});
  REQUIRE(table.find("v_l") != nullptr);
  CHECK(*table.find("v_l") == std::vector<double>{1.0, 3.0});
  CHECK(table.find("s") == nullptr);

  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_AS(read_csv_columns(ragged), DataError);
  std::istringstream blank("\n\n");
  CHECK_THROWS_AS(read_csv_columns(blank), DataError);
}

TEST_CASE("uniform_step") {
  CHECK(uniform_step(std::vector<double>{1.0, 1.25, 1.5}) == 0.25);
  CHECK_THROWS_AS(uniform_step(std::vector<double>{0.0}), DataError);
  CHECK_THROWS_AS(uniform_step(std::vector<double>{0.0, 0.1, 0.3}), DataError);
  CHECK_THROWS_AS(uniform_step(std::vector<double>{0.0, -0.1}), DataError);
}

TEST_CASE("format_number round-trips") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    REQUIRE(std::stod(format_number(x)) == x);
  }
}
