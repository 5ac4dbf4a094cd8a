#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cthrv/metrics.hpp"

namespace cthrv {

/// Uniformly sampled follower trajectory: speed, space gap and lead speed.
/// Immutable once built; every constructor path validates.
class Trajectory {
 public:
  /// Throws DataError unless the three series share a length n >= 2,
  /// dt > 0, and every gap is positive.
  Trajectory(double dt, double t0, std::vector<double> v, std::vector<double> s,
             std::vector<double> v_lead);

  double dt() const noexcept { return dt_; }
  double t0() const noexcept { return t0_; }
  std::size_t size() const noexcept { return v_.size(); }
  double time(std::size_t i) const noexcept { return t0_ + static_cast<double>(i) * dt_; }
  double duration() const noexcept { return static_cast<double>(size() - 1) * dt_; }

  std::span<const double> v() const noexcept { return v_; }
  std::span<const double> s() const noexcept { return s_; }
  std::span<const double> v_lead() const noexcept { return v_lead_; }

  /// Relative speed v_lead - v per sample.
  std::vector<double> relative_speed() const;

  /// Same samples, different clock origin.
  Trajectory with_start_time(double t0) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  double dt_;
  double t0_;
  std::vector<double> v_;
  std::vector<double> s_;
  std::vector<double> v_lead_;
};

/// CSV column layouts.
///   LeadSpeed:     time,v,s,v_l
///   RelativeSpeed: time,v,s,dv   (v_l = v + dv)
///   Auto:          chosen from the header row
enum class TrajectoryFormat { LeadSpeed, RelativeSpeed, Auto };

inline constexpr double kTimestampTolerance = 1e-6;

/// Parses a trajectory CSV. Throws DataError on malformed rows, missing
/// columns, non-uniform timestamps, non-positive gaps, or fewer than 2 rows.
Trajectory load_trajectory(std::istream& in, TrajectoryFormat format = TrajectoryFormat::Auto);
Trajectory load_trajectory_file(const std::string& path,
                                TrajectoryFormat format = TrajectoryFormat::Auto);

/// Numeric CSV with a header row; every column has one entry per data row.
struct CsvColumns {
  std::vector<std::string> names;
  std::vector<std::vector<double>> data;
  /// Column by header name, or nullptr.
  const std::vector<double>* find(std::string_view name) const;
};

/// Throws DataError on an empty stream, ragged rows or unparsable numbers.
CsvColumns read_csv_columns(std::istream& in);

/// Sample period of strictly increasing timestamps that are uniform to
/// kTimestampTolerance. Throws DataError otherwise.
double uniform_step(std::span<const double> t);

/// 17 significant digits, enough to round-trip a double.
std::string format_number(double x);

/// Writes the LeadSpeed layout with 17 significant digits.
void write_trajectory(std::ostream& out, const Trajectory& traj);
void write_trajectory_file(const std::string& path, const Trajectory& traj);

/// Linear interpolation of (times, values) onto t0, t0 + dt_out, ... up to
/// the last input time. `times` must be strictly increasing.
std::vector<double> resample_uniform(std::span<const double> times, std::span<const double> values,
                                     double dt_out);

struct SensorComparison {
  double mean_gap_err;
  double std_gap_err;
  double mean_rel_speed_err;
  double std_rel_speed_err;
  Histogram histogram_gap;
  Histogram histogram_rel_speed;
};

inline constexpr double kDefaultGapBinWidth = 0.1;
inline constexpr double kDefaultSpeedBinWidth = 0.05;

/// Radar-minus-GPS error statistics for gap and relative speed. Both
/// trajectories must already share n and dt.
SensorComparison compare_sensors(const Trajectory& radar, const Trajectory& gps,
                                 double bin_width_gap = kDefaultGapBinWidth,
                                 double bin_width_speed = kDefaultSpeedBinWidth);

}  // namespace cthrv
