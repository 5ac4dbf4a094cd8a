#include <doctest.h>

#include <cmath>
#include <limits>

#include "cthrv/errors.hpp"
#include "cthrv/estimator_batch.hpp"
#include "cthrv/simulator.hpp"
#include "test_support.hpp"

using namespace cthrv;
using cthrv::test::kTrueParams;

namespace {

const Trajectory& bench() {
  static const Trajectory t = test::benchmark_trajectory();
  return t;
}

}  // namespace

TEST_CASE("rmse_spacing") {
  CHECK(rmse_spacing(kTrueParams, bench()) == 0.0);

  SUBCASE("constant offset after the shared initial sample") {
    const std::size_t n = 400;
    const std::vector<double> v(n, 24.4);
    std::vector<double> s(n, 1.5 * 24.4 + 2.0);
    s[0] = 1.5 * 24.4;
    const Trajectory t(0.1, 0.0, v, s, v);
    const double expected = 2.0 * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
    CHECK(rmse_spacing(kTrueParams, t) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("mismatched parameters against an independent simulation") {
    const ModelParams other(0.0227, 0.194, 1.227);
    const auto sim = simulate_state_space(build_state_matrices(other, 0.1), bench().v_lead(),
                                          bench().v()[0], bench().s()[0]);
    double ss = 0.0;
    for (std::size_t i = 0; i < bench().size(); ++i) {
      ss += std::pow(bench().s()[i] - sim.s()[i], 2);
    }
    const double expected = std::sqrt(ss / static_cast<double>(bench().size()));
    const double got = rmse_spacing(other, bench());
    CHECK(got > 0.0);
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }

  SUBCASE("collisions give +infinity") {
    std::vector<double> lead(2000, 24.4);
    for (std::size_t k = 100; k < lead.size(); ++k) lead[k] = 0.0;
    const auto t = simulate_follower(ModelParams(0.5, 0.5, 2.0), lead, 24.4, 48.8, 0.1);
    CHECK(std::isinf(rmse_spacing(ModelParams(0.001, 0.001, 0.1), t)));
  }
}

TEST_CASE("nelder_mead on a bounded quadratic") {
  const std::array<Bounds, 3> box{{{-5, 5}, {-5, 5}, {1, 5}}};
  const auto f = [](const Eigen::Vector3d& x) {
    return std::pow(x(0) - 1.0, 2) + 10 * std::pow(x(1) + 2.0, 2) + std::pow(x(2), 2);
  };
  const auto r = nelder_mead(f, Eigen::Vector3d(4, 4, 4), box, {5000, 1e-14, 1e-9});
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x(1) == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(r.x(2) == 1.0);  // pinned to the lower bound
  CHECK(r.evaluations <= 5000 + 3);
  for (std::size_t i = 1; i < r.best_trace.size(); ++i) {
    REQUIRE(r.best_trace[i] <= r.best_trace[i - 1]);
  }
}

TEST_CASE("nelder_mead respects the evaluation budget") {
  const std::array<Bounds, 3> box{{{-5, 5}, {-5, 5}, {-5, 5}}};
  std::size_t calls = 0;
  const auto f = [&](const Eigen::Vector3d& x) {
    ++calls;
    return x.squaredNorm();
  };
  const auto r = nelder_mead(f, Eigen::Vector3d(3, 3, 3), box, {100, 0.0, 0.0});
  CHECK(r.evaluations == calls);
  CHECK(r.evaluations <= 103);
}

TEST_CASE("fit_batch recovers the benchmark parameters") {
  const auto r = fit_batch(bench());
  CHECK(std::abs(r.params.k1() - 0.08) <= 1e-3);
  CHECK(std::abs(r.params.k2() - 0.12) <= 1e-3);
  CHECK(std::abs(r.params.tau() - 1.5) <= 1e-3);
  CHECK(r.objective < 0.05);
  REQUIRE(r.per_start.size() == 10);

  for (const auto& s : r.per_start) {
    for (std::size_t i = 1; i < s.best_trace.size(); ++i) {
      REQUIRE(s.best_trace[i] <= s.best_trace[i - 1]);
    }
    CHECK(s.objective <= rmse_spacing(s.initial, bench()));
    CHECK(r.objective <= s.objective);
  }

  SUBCASE("final objective beats +-10% single-coordinate perturbations of the truth") {
    const Eigen::Vector3d truth = kTrueParams.as_vector();
    for (int c = 0; c < 3; ++c) {
      for (double f : {0.9, 1.1}) {
        Eigen::Vector3d x = truth;
        x(c) *= f;
        CHECK(r.objective < rmse_spacing(ModelParams(x(0), x(1), x(2)), bench()));
      }
    }
  }
}

TEST_CASE("fit_batch is deterministic for a seed and independent of thread count") {
  BatchConfig cfg;
  cfg.n_starts = 4;
  cfg.max_evals = 300;
  cfg.seed = 17;
  cfg.threads = 1;
  const auto a = fit_batch(bench(), cfg);
  cfg.threads = 3;
  const auto b = fit_batch(bench(), cfg);
  CHECK(a.params == b.params);
  CHECK(a.objective == b.objective);
  REQUIRE(a.per_start.size() == b.per_start.size());
  for (std::size_t i = 0; i < a.per_start.size(); ++i) {
    CHECK(a.per_start[i].initial == b.per_start[i].initial);
    CHECK(a.per_start[i].final == b.per_start[i].final);
    CHECK(a.per_start[i].objective == b.per_start[i].objective);
    CHECK(a.per_start[i].evaluations == b.per_start[i].evaluations);
  }
  cfg.seed = 18;
  CHECK_FALSE(fit_batch(bench(), cfg).per_start[0].initial == a.per_start[0].initial);
}

TEST_CASE("ties go to the lowest start index") {
  BatchConfig cfg;
  cfg.max_evals = 200;
  const ModelParams start(0.3, 0.3, 1.0);
  const auto r = fit_batch_from(bench(), cfg, {start, start});
  REQUIRE(r.per_start[0].objective == r.per_start[1].objective);
  CHECK(r.params == r.per_start[0].final);
}

TEST_CASE("batch config validation") {
  BatchConfig cfg;
  cfg.n_starts = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_evals = 50;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.bounds[2] = {3.0, 0.1};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.bounds[0] = {0.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("thread count honours the environment cap") {
  CHECK(resolve_thread_count(3, 10) == 3);
  CHECK(resolve_thread_count(8, 2) == 2);
  CHECK(resolve_thread_count(0, 5) >= 1);
}
