#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cthrv {

class ModelParams;
class Trajectory;

/// Binned counts; edges.size() == counts.size() + 1, bins are [lo, hi)
/// except the last, which is closed.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  std::size_t total() const noexcept;
};

double mean(std::span<const double> x);
/// Standard deviation with divisor n.
double population_std(std::span<const double> x);

/// Mean absolute difference. Throws DataError on length mismatch or empty input.
double mae(std::span<const double> a, std::span<const double> b);
double rmse(std::span<const double> a, std::span<const double> b);

/// Element-wise a - b.
std::vector<double> difference(std::span<const double> a, std::span<const double> b);

/// Fixed-width bins centred on zero: bin j covers [(j - 1/2) w, (j + 1/2) w).
Histogram histogram_zero_centered(std::span<const double> x, double bin_width);

/// `bins` equal-width bins over [-m, m] with m = max |x| (m = 1 if x is all zero).
Histogram histogram_symmetric(std::span<const double> x, std::size_t bins = 50);

/// Simulated-vs-measured comparison; errors are simulated minus measured.
struct FitReport {
  double mae_speed;
  double mae_spacing;
  double rmse_spacing;
  double pct_err_speed;
  double pct_err_spacing;
  double mean_err_speed;
  double mean_err_spacing;
  double std_err_speed;
  double std_err_spacing;
  Histogram hist_speed;
  Histogram hist_spacing;
};

/// Re-simulates `measured` under `params` from its first sample and scores
/// the result. Percent errors divide MAE by the mean of the measured series.
/// Throws TrajectoryCollapseError if the simulated gap closes.
FitReport fit_report(const Trajectory& measured, const ModelParams& params);

nlohmann::json to_json(const Histogram& h);
nlohmann::json to_json(const FitReport& r);

/// Header matching fit_report_csv_row.
std::string fit_report_csv_header();
std::string fit_report_csv_row(const FitReport& r);

}  // namespace cthrv
