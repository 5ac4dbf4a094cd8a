#include "cthrv/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "cthrv/errors.hpp"

namespace cthrv {

namespace {

std::string_view trim(std::string_view sv) {
  while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
  while (!sv.empty() && (sv.back() == ' ' || sv.back() == '\t' || sv.back() == '\r')) {
    sv.remove_suffix(1);
  }
  return sv;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t row, std::string_view column) {
  double value = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty() || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "row " << row << ": bad number '" << field << "' in column " << column;
    throw DataError(msg.str());
  }
  return value;
}

}  // namespace

Trajectory::Trajectory(double dt, double t0, std::vector<double> v, std::vector<double> s,
                       std::vector<double> v_lead)
    : dt_(dt), t0_(t0), v_(std::move(v)), s_(std::move(s)), v_lead_(std::move(v_lead)) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw DataError("trajectory dt must be positive");
  if (v_.size() != s_.size() || v_.size() != v_lead_.size()) {
    throw DataError("trajectory series lengths differ");
  }
  if (v_.size() < 2) throw DataError("trajectory needs at least 2 samples");
  for (std::size_t i = 0; i < s_.size(); ++i) {
    if (!(s_[i] > 0.0)) {
      std::ostringstream msg;
      msg << "non-positive space gap " << s_[i] << " at sample " << i;
      throw DataError(msg.str());
    }
  }
}

std::vector<double> Trajectory::relative_speed() const {
  std::vector<double> dv(size());
  for (std::size_t i = 0; i < size(); ++i) dv[i] = v_lead_[i] - v_[i];
  return dv;
}

Trajectory Trajectory::with_start_time(double t0) const {
  return Trajectory(dt_, t0, v_, s_, v_lead_);
}

const std::vector<double>* CsvColumns::find(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return nullptr;
  return &data[static_cast<std::size_t>(it - names.begin())];
}

CsvColumns read_csv_columns(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  // First non-blank line is the header.
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError("empty CSV");
  CsvColumns table;
  for (const auto name : split(line)) table.names.emplace_back(name);
  table.data.resize(table.names.size());

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != table.names.size()) {
      std::ostringstream msg;
      msg << "row " << line_no << ": expected " << table.names.size() << " fields, got "
          << fields.size();
      throw DataError(msg.str());
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      table.data[c].push_back(parse_number(fields[c], line_no, table.names[c]));
    }
  }
  return table;
}

double uniform_step(std::span<const double> t) {
  if (t.size() < 2) throw DataError("need at least 2 timestamps");
  const double dt = t[1] - t[0];
  if (!(dt > 0.0)) throw DataError("timestamps must be strictly increasing");
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (std::abs((t[i + 1] - t[i]) - dt) > kTimestampTolerance) {
      std::ostringstream msg;
      msg << "non-uniform timestamps: interval " << (t[i + 1] - t[i]) << " s at t=" << t[i]
          << " differs from " << dt << " s";
      throw DataError(msg.str());
    }
  }
  return dt;
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Trajectory load_trajectory(std::istream& in, TrajectoryFormat format) {
  auto table = read_csv_columns(in);
  const auto* time_col = table.find("time");
  const auto* v_col = table.find("v");
  const auto* s_col = table.find("s");
  const auto* vl_col = table.find("v_l");
  const auto* dv_col = table.find("dv");

  if (format == TrajectoryFormat::Auto) {
    if (vl_col) {
      format = TrajectoryFormat::LeadSpeed;
    } else if (dv_col) {
      format = TrajectoryFormat::RelativeSpeed;
    } else {
      throw DataError("CSV header has neither a v_l nor a dv column");
    }
  }
  const auto* lead_col = format == TrajectoryFormat::LeadSpeed ? vl_col : dv_col;
  if (!time_col || !v_col || !s_col || !lead_col) {
    std::string header;
    for (const auto& name : table.names) header += (header.empty() ? "" : ",") + name;
    throw DataError("CSV header '" + header + "' is missing one of time, v, s, " +
                    (format == TrajectoryFormat::LeadSpeed ? "v_l" : "dv"));
  }
  if (time_col->size() < 2) throw DataError("trajectory CSV needs at least 2 data rows");

  const double dt = uniform_step(*time_col);
  std::vector<double> vl = *lead_col;
  if (format == TrajectoryFormat::RelativeSpeed) {
    for (std::size_t i = 0; i < vl.size(); ++i) vl[i] += (*v_col)[i];
  }
  return Trajectory(dt, time_col->front(), *v_col, *s_col, std::move(vl));
}

Trajectory load_trajectory_file(const std::string& path, TrajectoryFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_trajectory(in, format);
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  out << "time,v,s,v_l\n";
  const auto v = traj.v();
  const auto s = traj.s();
  const auto vl = traj.v_lead();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_number(traj.time(i)) << ',' << format_number(v[i]) << ','
        << format_number(s[i]) << ',' << format_number(vl[i]) << '\n';
  }
}

void write_trajectory_file(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_trajectory(out, traj);
  if (!out) throw DataError("write failed for " + path);
}

std::vector<double> resample_uniform(std::span<const double> times, std::span<const double> values,
                                     double dt_out) {
  if (times.empty() || values.empty()) throw DataError("resample: empty input");
  if (times.size() != values.size()) throw DataError("resample: times and values differ in length");
  if (!(dt_out > 0.0)) throw ValidationError("resample: dt_out must be positive");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw DataError("resample: times must be strictly increasing");
  }
  const double t0 = times.front();
  const double span = times.back() - t0;
  // Small slack so a grid point landing on the last input time is kept.
  const auto count = static_cast<std::size_t>(std::floor(span / dt_out + 1e-9)) + 1;

  std::vector<double> out(count);
  std::size_t j = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = std::min(t0 + static_cast<double>(i) * dt_out, times.back());
    while (j + 2 < times.size() && times[j + 1] <= t) ++j;
    if (times.size() == 1) {
      out[i] = values[0];
      continue;
    }
    const double ta = times[j];
    const double tb = times[j + 1];
    const double w = (t - ta) / (tb - ta);
    out[i] = w == 1.0 ? values[j + 1] : values[j] + w * (values[j + 1] - values[j]);
  }
  return out;
}

SensorComparison compare_sensors(const Trajectory& radar, const Trajectory& gps,
                                 double bin_width_gap, double bin_width_speed) {
  if (radar.size() != gps.size()) throw DataError("compare_sensors: trajectory lengths differ");
  if (std::abs(radar.dt() - gps.dt()) > kTimestampTolerance) {
    throw DataError("compare_sensors: sample periods differ; resample first");
  }
  const auto gap_err = difference(radar.s(), gps.s());
  const auto rel_err = difference(radar.relative_speed(), gps.relative_speed());
  return SensorComparison{
      mean(gap_err),
      population_std(gap_err),
      mean(rel_err),
      population_std(rel_err),
      histogram_zero_centered(gap_err, bin_width_gap),
      histogram_zero_centered(rel_err, bin_width_speed),
  };
}

}  // namespace cthrv
