#include "cthrv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cthrv/errors.hpp"
#include "cthrv/model.hpp"
#include "cthrv/simulator.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << "series length mismatch: " << a.size() << " vs " << b.size();
    throw DataError(msg.str());
  }
  if (a.empty()) throw DataError("empty series");
}

constexpr std::size_t kMaxBins = 10'000'000;

}  // namespace

std::size_t Histogram::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double mean(std::span<const double> x) {
  if (x.empty()) throw DataError("mean of empty series");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double population_std(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double xi : x) ss += (xi - m) * (xi - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double mae(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double rmse(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

std::vector<double> difference(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

Histogram histogram_zero_centered(std::span<const double> x, double bin_width) {
  if (!(bin_width > 0.0)) throw ValidationError("histogram bin width must be positive");
  Histogram h;
  if (x.empty()) {
    h.edges = {-bin_width / 2.0, bin_width / 2.0};
    h.counts = {0};
    return h;
  }
  const auto index_of = [bin_width](double v) {
    return static_cast<long long>(std::floor(v / bin_width + 0.5));
  };
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const long long lo = index_of(*lo_it);
  const long long hi = index_of(*hi_it);
  const auto bins = static_cast<std::size_t>(hi - lo + 1);
  if (bins > kMaxBins) throw ValidationError("histogram bin width too small for the error range");
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t j = 0; j <= bins; ++j) {
    h.edges[j] = (static_cast<double>(lo + static_cast<long long>(j)) - 0.5) * bin_width;
  }
  for (double v : x) ++h.counts[static_cast<std::size_t>(index_of(v) - lo)];
  return h;
}

Histogram histogram_symmetric(std::span<const double> x, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m == 0.0) m = 1.0;
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  const double width = 2.0 * m / static_cast<double>(bins);
  for (std::size_t j = 0; j <= bins; ++j) h.edges[j] = -m + static_cast<double>(j) * width;
  h.edges.back() = m;
  for (double v : x) {
    auto j = static_cast<std::size_t>(std::max(0.0, std::floor((v + m) / width)));
    ++h.counts[std::min(j, bins - 1)];
  }
  return h;
}

FitReport fit_report(const Trajectory& measured, const ModelParams& params) {
  const Trajectory sim =
      simulate_follower(params, measured.v_lead(), measured.v()[0], measured.s()[0], measured.dt());
  const auto err_speed = difference(sim.v(), measured.v());
  const auto err_spacing = difference(sim.s(), measured.s());

  FitReport r{};
  r.mae_speed = mae(sim.v(), measured.v());
  r.mae_spacing = mae(sim.s(), measured.s());
  r.rmse_spacing = rmse(sim.s(), measured.s());
  r.pct_err_speed = 100.0 * r.mae_speed / mean(measured.v());
  r.pct_err_spacing = 100.0 * r.mae_spacing / mean(measured.s());
  r.mean_err_speed = mean(err_speed);
  r.mean_err_spacing = mean(err_spacing);
  r.std_err_speed = population_std(err_speed);
  r.std_err_spacing = population_std(err_spacing);
  r.hist_speed = histogram_symmetric(err_speed);
  r.hist_spacing = histogram_symmetric(err_spacing);
  return r;
}

nlohmann::json to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}};
}

nlohmann::json to_json(const FitReport& r) {
  return {
      {"mae_speed", r.mae_speed},
      {"mae_spacing", r.mae_spacing},
      {"rmse_spacing", r.rmse_spacing},
      {"pct_err_speed", r.pct_err_speed},
      {"pct_err_spacing", r.pct_err_spacing},
      {"mean_err_speed", r.mean_err_speed},
      {"mean_err_spacing", r.mean_err_spacing},
      {"std_err_speed", r.std_err_speed},
      {"std_err_spacing", r.std_err_spacing},
      {"hist_speed", to_json(r.hist_speed)},
      {"hist_spacing", to_json(r.hist_spacing)},
  };
}

std::string fit_report_csv_header() {
  return "mae_speed,mae_spacing,rmse_spacing,pct_err_speed,pct_err_spacing,mean_err_speed,"
         "mean_err_spacing,std_err_speed,std_err_spacing";
}

std::string fit_report_csv_row(const FitReport& r) {
  const double fields[] = {r.mae_speed,        r.mae_spacing,      r.rmse_spacing,
                           r.pct_err_speed,    r.pct_err_spacing,  r.mean_err_speed,
                           r.mean_err_spacing, r.std_err_speed,    r.std_err_spacing};
  std::string row;
  char buf[32];
  for (double f : fields) {
    if (!row.empty()) row += ',';
    std::snprintf(buf, sizeof buf, "%.17g", f);
    row += buf;
  }
  return row;
}

}  // namespace cthrv
