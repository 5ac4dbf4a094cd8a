#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cthrv/errors.hpp"
#include "cthrv/estimator_ls.hpp"
#include "cthrv/metrics.hpp"
#include "cthrv/model.hpp"

#ifndef CTHRV_VERSION
#define CTHRV_VERSION "0.0.0"
#endif

namespace cthrv::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("bad value for '") + key + "'");
  }
}

template <int N>
Eigen::Matrix<double, N, 1> get_vector(const json& j, const char* key,
                                       const Eigen::Matrix<double, N, 1>& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N) {
    throw ValidationError(std::string("'") + key + "' must be an array of " + std::to_string(N) +
                          " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!a[static_cast<std::size_t>(i)].is_number()) {
      throw ValidationError(std::string("'") + key + "' must hold numbers");
    }
    out(i) = a[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

template <int N>
json vector_json(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

json params_json(const ModelParams& p) { return {{"k1", p.k1()}, {"k2", p.k2()}, {"tau", p.tau()}}; }

ModelParams parse_params(const json& j) {
  check_keys(j, {"k1", "k2", "tau"}, "params");
  if (!j.contains("k1") || !j.contains("k2") || !j.contains("tau")) {
    throw ValidationError("params needs k1, k2 and tau");
  }
  return {get_or(j, "k1", 0.0), get_or(j, "k2", 0.0), get_or(j, "tau", 0.0)};
}

LeadProfileSpec parse_lead(const json& j) {
  check_keys(j, {"preset", "duration", "dt", "base_speed", "events", "seed", "jitter_std"}, "lead");
  LeadProfileSpec spec;
  const auto preset = get_or<std::string>(j, "preset", "");
  if (preset == "benchmark") {
    spec = benchmark_lead_spec();
  } else if (preset == "standard_dip") {
    spec = standard_dip_spec();
  } else if (!preset.empty()) {
    throw ValidationError("unknown lead preset '" + preset + "'");
  }
  spec.duration = get_or(j, "duration", spec.duration);
  spec.dt = get_or(j, "dt", spec.dt);
  spec.base_speed = get_or(j, "base_speed", spec.base_speed);
  spec.seed = get_or(j, "seed", spec.seed);
  spec.jitter_std = get_or(j, "jitter_std", spec.jitter_std);
  if (j.contains("events")) {
    if (!j.at("events").is_array()) throw ValidationError("'events' must be an array");
    spec.events.clear();
    for (const auto& e : j.at("events")) {
      check_keys(e, {"start", "target", "rate"}, "event");
      if (!e.contains("start") || !e.contains("target") || !e.contains("rate")) {
        throw ValidationError("event needs start, target and rate");
      }
      spec.events.push_back({get_or(e, "start", 0.0), get_or(e, "target", 0.0), get_or(e, "rate", 0.0)});
    }
  }
  spec.validate();
  return spec;
}

json lead_json(const LeadProfileSpec& spec) {
  json events = json::array();
  for (const auto& e : spec.events) {
    events.push_back({{"start", e.start}, {"target", e.target}, {"rate", e.rate}});
  }
  return {{"duration", spec.duration}, {"dt", spec.dt},         {"base_speed", spec.base_speed},
          {"events", events},          {"seed", spec.seed},     {"jitter_std", spec.jitter_std}};
}

std::string_view policy_name(DegeneratePolicy p) {
  switch (p) {
    case DegeneratePolicy::Exclude: return "exclude";
    case DegeneratePolicy::CountUnstable: return "count_unstable";
    case DegeneratePolicy::CountStable: return "count_stable";
  }
  return "exclude";
}

DegeneratePolicy parse_policy(const std::string& name) {
  if (name == "exclude") return DegeneratePolicy::Exclude;
  if (name == "count_unstable") return DegeneratePolicy::CountUnstable;
  if (name == "count_stable") return DegeneratePolicy::CountStable;
  throw ValidationError("unknown degenerate policy '" + name + "'");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Trajectory load_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  if (in.peek() == std::ifstream::traits_type::eof()) {
    throw ValidationError("input " + path + " is empty");
  }
  return load_trajectory(in);
}

/// Lead speed series from a CSV with time and v_l columns.
std::pair<std::vector<double>, double> load_lead(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  const auto table = read_csv_columns(in);
  const auto* t = table.find("time");
  const auto* vl = table.find("v_l");
  if (!t || !vl) throw DataError(path + ": lead CSV needs time and v_l columns");
  return {*vl, uniform_step(*t)};
}

std::string csv_cell(const json& v) {
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

std::string flat_csv(const std::vector<std::pair<std::string, json>>& fields) {
  std::string header;
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const char* sep = i == 0 ? "" : ",";
    header += sep + fields[i].first;
    row += sep + csv_cell(fields[i].second);
  }
  return header + "\n" + row + "\n";
}

/// Output goes to `path`, or to `out` when the path is empty. The manifest
/// sits next to the first output, or on `err` when nothing was written to disk.
struct Sink {
  std::ostream& out;
  std::ostream& err;
  std::string manifest_path;
};

void emit_manifest(const RunManifest& m, const Sink& sink, const std::string& first_output) {
  std::string path = sink.manifest_path;
  if (path.empty() && !first_output.empty()) path = first_output + ".manifest.json";
  if (path.empty()) {
    sink.err << m.to_json().dump() << "\n";
    return;
  }
  try {
    write_text(path, dump(m.to_json()));
  } catch (const std::exception& e) {
    sink.err << "cthrv: " << e.what() << "\n";
  }
}

template <class F>
int guarded(RunManifest& manifest, const Sink& sink, const std::string& first_output,
            bool estimating, F&& body) {
  int code = kExitOk;
  try {
    code = body();
  } catch (const std::exception& e) {
    code = exit_code_for(e, estimating);
    manifest.set_error(error_json(e, estimating));
    sink.err << json{{"error", error_json(e, estimating)}}.dump() << "\n";
  }
  emit_manifest(manifest, sink, first_output);
  return code;
}

}  // namespace

std::string_view version() noexcept { return CTHRV_VERSION; }

int exit_code_for(const std::exception& e, bool estimating) {
  if (dynamic_cast<const EstimationError*>(&e)) return kExitEstimation;
  if (dynamic_cast<const TrajectoryCollapseError*>(&e)) {
    return estimating ? kExitEstimation : kExitUsage;
  }
  if (dynamic_cast<const ValidationError*>(&e)) return kExitUsage;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  return kExitInternal;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const TooFewSamplesError*>(&e)) return "too_few_samples";
  if (dynamic_cast<const RankDeficientError*>(&e)) return "rank_deficient";
  if (dynamic_cast<const DegenerateDynamicsError*>(&e)) return "degenerate_dynamics";
  if (dynamic_cast<const WeightCollapseError*>(&e)) return "weight_collapse";
  if (dynamic_cast<const EstimationError*>(&e)) return "estimation";
  if (dynamic_cast<const TrajectoryCollapseError*>(&e)) return "trajectory_collapse";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  return "internal";
}

json error_json(const std::exception& e, bool estimating) {
  json j = {{"type", error_type(e)}, {"message", e.what()}, {"exit_code", exit_code_for(e, estimating)}};
  if (const auto* w = dynamic_cast<const WeightCollapseError*>(&e)) j["step"] = w->step();
  if (const auto* c = dynamic_cast<const TrajectoryCollapseError*>(&e)) {
    j["vehicle"] = c->vehicle();
    j["step"] = c->step();
  }
  return j;
}

RunManifest::RunManifest(std::string subcommand) : subcommand_(std::move(subcommand)) {}

void RunManifest::record(const std::string& name, double seconds) {
  for (auto& [n, s] : phases_) {
    if (n == name) {
      s += seconds;
      return;
    }
  }
  phases_.emplace_back(name, seconds);
}

json RunManifest::to_json() const {
  json phases = json::object();
  for (const auto& [n, s] : phases_) phases[n] = s;
  const std::chrono::duration<double> total = std::chrono::steady_clock::now() - started_;
  phases["total"] = total.count();
  return {{"subcommand", subcommand_},
          {"version", std::string(version())},
          {"config", config_},
          {"seed", seed_ ? json(*seed_) : json(nullptr)},
          {"inputs", inputs_},
          {"outputs", outputs_},
          {"runtime_s", phases},
          {"success", success()},
          {"error", error_}};
}

GenerateSpec parse_generate_spec(const json& j) {
  check_keys(j, {"lead", "params", "v0", "s0", "noise"}, "generate spec");
  GenerateSpec spec;
  if (j.contains("lead")) spec.lead = parse_lead(j.at("lead"));
  if (j.contains("params")) spec.params = parse_params(j.at("params"));
  spec.v0 = get_or(j, "v0", spec.v0);
  spec.s0 = get_or(j, "s0", spec.s0);
  VehicleState(spec.v0, spec.s0);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, {"gap_std", "speed_std", "seed"}, "noise");
    spec.noise_gap_std = get_or(n, "gap_std", 0.0);
    spec.noise_speed_std = get_or(n, "speed_std", 0.0);
    spec.noise_seed = get_or<std::uint64_t>(n, "seed", 0);
    if (!(spec.noise_gap_std >= 0.0) || !(spec.noise_speed_std >= 0.0)) {
      throw ValidationError("noise standard deviations must be >= 0");
    }
  }
  spec.lead.validate();
  return spec;
}

json to_json(const GenerateSpec& spec) {
  return {{"lead", lead_json(spec.lead)},
          {"params", params_json(spec.params)},
          {"v0", spec.v0},
          {"s0", spec.s0},
          {"noise",
           {{"gap_std", spec.noise_gap_std},
            {"speed_std", spec.noise_speed_std},
            {"seed", spec.noise_seed}}}};
}

Trajectory generate(const GenerateSpec& spec) {
  const auto lead = generate_lead_profile(spec.lead);
  auto traj = simulate_follower(spec.params, lead, spec.v0, spec.s0, spec.lead.dt);
  if (spec.noise_gap_std == 0.0 && spec.noise_speed_std == 0.0) return traj;
  Rng rng(spec.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(traj.v().begin(), traj.v().end());
  std::vector<double> s(traj.s().begin(), traj.s().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    s[i] += spec.noise_gap_std * gauss(rng);
    v[i] += spec.noise_speed_std * gauss(rng);
  }
  return {traj.dt(), traj.t0(), std::move(v), std::move(s),
          std::vector<double>(traj.v_lead().begin(), traj.v_lead().end())};
}

FitSettings parse_fit_settings(const json& j) {
  check_keys(j, {"batch", "pf"}, "fit config");
  FitSettings out;
  if (j.contains("batch")) {
    const auto& b = j.at("batch");
    check_keys(b, {"bounds", "n_starts", "max_evals", "seed", "ftol", "xtol", "threads"}, "batch");
    auto& c = out.batch;
    if (b.contains("bounds")) {
      const auto& bj = b.at("bounds");
      check_keys(bj, {"k1", "k2", "tau"}, "bounds");
      const char* names[3] = {"k1", "k2", "tau"};
      for (int i = 0; i < 3; ++i) {
        if (!bj.contains(names[i])) continue;
        const auto pair = get_vector<2>(bj, names[i], Eigen::Vector2d::Zero());
        c.bounds[static_cast<std::size_t>(i)] = {pair(0), pair(1)};
      }
    }
    c.n_starts = get_or(b, "n_starts", c.n_starts);
    c.max_evals = get_or(b, "max_evals", c.max_evals);
    c.seed = get_or(b, "seed", c.seed);
    c.ftol = get_or(b, "ftol", c.ftol);
    c.xtol = get_or(b, "xtol", c.xtol);
    c.threads = get_or(b, "threads", c.threads);
  }
  if (j.contains("pf")) {
    const auto& p = j.at("pf");
    check_keys(p, {"n_particles", "init_mean", "init_std", "q_std", "r_std", "seed",
                   "state_from_data", "degenerate"},
               "pf");
    auto& c = out.pf;
    c.n_particles = get_or(p, "n_particles", c.n_particles);
    c.init_mean = get_vector<5>(p, "init_mean", c.init_mean);
    c.init_std = get_vector<5>(p, "init_std", c.init_std);
    c.q_std = get_vector<5>(p, "q_std", c.q_std);
    c.r_std = get_vector<2>(p, "r_std", c.r_std);
    c.seed = get_or(p, "seed", c.seed);
    c.state_from_data = get_or(p, "state_from_data", c.state_from_data);
    if (p.contains("degenerate")) c.degenerate = parse_policy(get_or<std::string>(p, "degenerate", ""));
  }
  out.batch.validate();
  out.pf.validate();
  return out;
}

json to_json(const FitSettings& s) {
  const auto& b = s.batch;
  const auto& p = s.pf;
  json bounds = {{"k1", {b.bounds[0].low, b.bounds[0].high}},
                 {"k2", {b.bounds[1].low, b.bounds[1].high}},
                 {"tau", {b.bounds[2].low, b.bounds[2].high}}};
  return {{"batch",
           {{"bounds", bounds},
            {"n_starts", b.n_starts},
            {"max_evals", b.max_evals},
            {"seed", b.seed},
            {"ftol", b.ftol},
            {"xtol", b.xtol},
            {"threads", b.threads}}},
          {"pf",
           {{"n_particles", p.n_particles},
            {"init_mean", vector_json<5>(p.init_mean)},
            {"init_std", vector_json<5>(p.init_std)},
            {"q_std", vector_json<5>(p.q_std)},
            {"r_std", vector_json<2>(p.r_std)},
            {"seed", p.seed},
            {"state_from_data", p.state_from_data},
            {"degenerate", std::string(policy_name(p.degenerate))}}}};
}

void override_seed(FitSettings& settings, std::uint64_t seed) {
  settings.batch.seed = seed;
  settings.pf.seed = seed;
}

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Ls: return "ls";
    case Method::Batch: return "batch";
    case Method::Pf: return "pf";
  }
  return "ls";
}

Method parse_method(std::string_view name) {
  if (name == "ls") return Method::Ls;
  if (name == "batch") return Method::Batch;
  if (name == "pf") return Method::Pf;
  throw ValidationError("unknown method '" + std::string(name) + "'");
}

namespace {

/// Estimator call plus method-specific extras; `extras` receives keys that
/// belong in the report.
ModelParams run_estimator(const Trajectory& traj, Method method, const FitSettings& settings,
                          json& extras, std::optional<PFResult>* pf_out) {
  switch (method) {
    case Method::Ls:
      return fit_least_squares(traj);
    case Method::Batch: {
      const auto r = fit_batch(traj, settings.batch);
      std::size_t evals = 0;
      for (const auto& s : r.per_start) evals += s.evaluations;
      extras["objective_rmse_spacing"] = r.objective;
      extras["evaluations"] = evals;
      return r.params;
    }
    case Method::Pf: {
      auto r = fit_particle_filter(traj, settings.pf);
      extras["instability_probability"] = r.instability_probability;
      extras["degenerate_fraction"] = r.degenerate_fraction;
      extras["clamp_events"] = r.clamp_events;
      const Vector5d last_std = r.std.row(r.std.rows() - 1).transpose();
      extras["posterior_std"] = {{"k1", last_std(kK1)}, {"k2", last_std(kK2)}, {"tau", last_std(kTau)}};
      const ModelParams p = r.params;
      if (pf_out) *pf_out = std::move(r);
      return p;
    }
  }
  throw ValidationError("unknown method");
}

json estimate_report_impl(const Trajectory& traj, Method method, const FitSettings& settings,
                          std::optional<PFResult>* pf_out) {
  json rep = {{"method", std::string(to_string(method))}};
  try {
    json extras = json::object();
    const auto start = std::chrono::steady_clock::now();
    const ModelParams p = run_estimator(traj, method, settings, extras, pf_out);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    rep["params"] = params_json(p);
    rep["runtime_s"] = took.count();
    rep.update(extras);

    StabilityVerdict verdict{};
    try {
      verdict = string_stability(p);
    } catch (const ValidationError& e) {
      throw EstimationError(std::string("estimate is non-physical: ") + e.what());
    }
    rep["lambda"] = verdict.lambda;
    rep["classification"] = std::string(cthrv::to_string(verdict.classification));

    const auto fit = fit_report(traj, p);
    rep["mae_speed"] = fit.mae_speed;
    rep["mae_spacing"] = fit.mae_spacing;
    rep["fit"] = to_json(fit);
    rep["error"] = nullptr;
  } catch (const std::exception& e) {
    rep["error"] = error_json(e, true);
  }
  return rep;
}

}  // namespace

json estimate_report(const Trajectory& traj, Method method, const FitSettings& settings) {
  return estimate_report_impl(traj, method, settings, nullptr);
}

json without_timing(json report) {
  report.erase("runtime_s");
  return report;
}

namespace {

const std::vector<std::string> kTableRows = {"k1",          "k2",          "tau",      "runtime_s",
                                             "mae_speed",   "mae_spacing", "stability"};

json table_cell(const json& report, const std::string& row) {
  if (!report.at("error").is_null()) {
    return "error: " + report.at("error").at("type").get<std::string>();
  }
  if (row == "k1" || row == "k2" || row == "tau") return report.at("params").at(row);
  if (row == "stability") return report.at("classification");
  return report.at(row);
}

std::string table_csv(const json& reports) {
  std::ostringstream out;
  out << "metric";
  for (const auto& r : reports) out << ',' << r.at("method").get<std::string>();
  out << '\n';
  for (const auto& row : kTableRows) {
    out << row;
    for (const auto& r : reports) out << ',' << csv_cell(table_cell(r, row));
    out << '\n';
  }
  return out.str();
}

json table_json(const json& reports) {
  json columns = json::array();
  json table = json::object();
  for (const auto& r : reports) {
    const auto name = r.at("method").get<std::string>();
    columns.push_back(name);
    json col = json::object();
    for (const auto& row : kTableRows) col[row] = table_cell(r, row);
    table[name] = col;
  }
  return {{"rows", kTableRows}, {"columns", columns}, {"table", table}, {"reports", reports}};
}

std::string pf_trace_csv(const Trajectory& traj, const PFResult& r) {
  std::ostringstream out;
  out << "time,s_mean,v_mean,k1_mean,k2_mean,tau_mean,s_std,v_std,k1_std,k2_std,tau_std\n";
  for (Eigen::Index k = 0; k < r.mean.rows(); ++k) {
    out << format_number(traj.time(static_cast<std::size_t>(k)));
    for (int c = 0; c < 5; ++c) out << ',' << format_number(r.mean(k, c));
    for (int c = 0; c < 5; ++c) out << ',' << format_number(r.std(k, c));
    out << '\n';
  }
  return out.str();
}

/// Streams the trajectory through the filter paced at `speedup` times the
/// sampling rate, printing the posterior once per simulated second.
void replay(const Trajectory& traj, const PFConfig& config, double speedup, std::ostream& out) {
  ParticleFilter filter(config, traj.dt());
  const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / traj.dt())));
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const std::chrono::duration<double> due(static_cast<double>(k) * traj.dt() / speedup);
    std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(due));
    filter.push({traj.s()[k], traj.v()[k], traj.v_lead()[k]});
    if (k % every == 0 || k + 1 == traj.size()) {
      const auto p = filter.params();
      out << json{{"time", traj.time(k)},
                  {"k1", p.k1()},
                  {"k2", p.k2()},
                  {"tau", p.tau()},
                  {"instability_probability", filter.instability().probability}}
                 .dump()
          << "\n";
    }
  }
}

FitSettings load_settings(const std::string& config_path, std::optional<std::uint64_t> seed,
                          RunManifest& manifest) {
  FitSettings settings;
  if (!config_path.empty()) {
    manifest.add_input(config_path);
    settings = parse_fit_settings(read_json_file(config_path));
  }
  if (seed) override_seed(settings, *seed);
  return settings;
}

struct Options {
  std::string input;
  std::string output;
  std::string config;
  std::string manifest;
  std::string method = "ls";
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  std::string trace;
  double realtime = 0.0;
  std::optional<double> k1, k2, tau, v0, s0;
  std::vector<std::string> sensors;
  double bin_gap = kDefaultGapBinWidth;
  double bin_speed = kDefaultSpeedBinWidth;
};

int cmd_generate(const Options& o, const Sink& sink) {
  RunManifest m("generate");
  m.set_seed(o.seed);
  return guarded(m, sink, o.output, false, [&] {
    json raw = json::object();
    if (!o.config.empty()) {
      m.add_input(o.config);
      raw = read_json_file(o.config);
    }
    auto spec = parse_generate_spec(raw);
    if (o.seed) {
      spec.lead.seed = *o.seed;
      spec.noise_seed = *o.seed;
    }
    m.set_config(to_json(spec));
    const auto traj = m.phase("simulate", [&] { return generate(spec); });
    m.phase("write", [&] {
      if (o.output.empty()) {
        write_trajectory(sink.out, traj);
      } else {
        write_trajectory_file(o.output, traj);
        m.add_output(o.output);
      }
    });
    return kExitOk;
  });
}

int cmd_simulate(const Options& o, const Sink& sink) {
  RunManifest m("simulate");
  return guarded(m, sink, o.output, false, [&] {
    if (o.input.empty()) throw ValidationError("simulate needs --input <lead CSV>");
    if (!o.k1 || !o.k2 || !o.tau) throw ValidationError("simulate needs --k1, --k2 and --tau");
    const ModelParams params(*o.k1, *o.k2, *o.tau);
    m.add_input(o.input);
    const auto [lead, dt] = m.phase("load", [&] { return load_lead(o.input); });
    const double v0 = o.v0.value_or(lead.front());
    const double s0 = o.s0.value_or(params.tau() * v0);
    m.set_config({{"params", params_json(params)}, {"v0", v0}, {"s0", s0}, {"dt", dt}});
    const auto traj = m.phase("simulate", [&] { return simulate_follower(params, lead, v0, s0, dt); });
    m.phase("write", [&] {
      if (o.output.empty()) {
        write_trajectory(sink.out, traj);
      } else {
        write_trajectory_file(o.output, traj);
        m.add_output(o.output);
      }
    });
    return kExitOk;
  });
}

std::string fit_csv(const json& rep) {
  std::vector<std::pair<std::string, json>> fields = {{"method", rep.at("method")}};
  if (!rep.at("error").is_null()) {
    fields.emplace_back("error", rep.at("error").at("type"));
    fields.emplace_back("message", rep.at("error").at("message"));
    return flat_csv(fields);
  }
  for (const char* k : {"k1", "k2", "tau"}) fields.emplace_back(k, rep.at("params").at(k));
  for (const char* k : {"runtime_s", "lambda", "classification"}) fields.emplace_back(k, rep.at(k));
  if (rep.contains("instability_probability")) {
    fields.emplace_back("instability_probability", rep.at("instability_probability"));
  }
  const auto& fit = rep.at("fit");
  for (const char* k : {"mae_speed", "mae_spacing", "rmse_spacing", "pct_err_speed",
                        "pct_err_spacing", "mean_err_speed", "mean_err_spacing", "std_err_speed",
                        "std_err_spacing"}) {
    fields.emplace_back(k, fit.at(k));
  }
  return flat_csv(fields);
}

int cmd_fit(const Options& o, const Sink& sink) {
  RunManifest m("fit");
  m.set_seed(o.seed);
  return guarded(m, sink, o.output, true, [&] {
    if (o.input.empty()) throw ValidationError("fit needs --input <trajectory CSV>");
    const Method method = parse_method(o.method);
    auto settings = load_settings(o.config, o.seed, m);
    json config = to_json(settings);
    config["method"] = o.method;
    config["format"] = o.format;
    m.set_config(config);
    m.add_input(o.input);
    const auto traj = m.phase("load", [&] { return load_input(o.input); });

    std::optional<PFResult> pf;
    const json rep = m.phase("estimate", [&] {
      return estimate_report_impl(traj, method, settings, method == Method::Pf ? &pf : nullptr);
    });
    if (o.realtime > 0.0) {
      if (method != Method::Pf) throw ValidationError("--realtime applies to --method pf only");
      m.phase("replay", [&] { replay(traj, settings.pf, o.realtime, sink.err); });
    }
    m.phase("write", [&] {
      const std::string text = o.format == "csv" ? fit_csv(rep) : dump(rep);
      if (o.output.empty()) {
        sink.out << text;
      } else {
        write_text(o.output, text);
        m.add_output(o.output);
      }
      if (!o.trace.empty()) {
        if (method != Method::Pf) throw ValidationError("--trace applies to --method pf only");
        if (rep.at("error").is_null()) {
          write_text(o.trace, pf_trace_csv(traj, *pf));
          m.add_output(o.trace);
        }
      }
    });
    if (!rep.at("error").is_null()) {
      m.set_error(rep.at("error"));
      sink.err << json{{"error", rep.at("error")}}.dump() << "\n";
      return rep.at("error").at("exit_code").get<int>();
    }
    return kExitOk;
  });
}

int cmd_benchmark(const Options& o, const Sink& sink) {
  RunManifest m("benchmark");
  m.set_seed(o.seed);
  const std::string csv_path = o.output.empty() ? "" : o.output + ".csv";
  return guarded(m, sink, o.output, true, [&] {
    if (o.input.empty()) throw ValidationError("benchmark needs --input <trajectory CSV>");
    auto settings = load_settings(o.config, o.seed, m);
    m.set_config(to_json(settings));
    m.add_input(o.input);
    const auto traj = m.phase("load", [&] { return load_input(o.input); });
    json reports = json::array();
    for (const Method method : {Method::Ls, Method::Batch, Method::Pf}) {
      reports.push_back(m.phase(std::string("estimate_") + std::string(to_string(method)),
                                [&] { return estimate_report(traj, method, settings); }));
    }
    m.phase("write", [&] {
      if (o.output.empty()) {
        sink.out << (o.format == "csv" ? table_csv(reports) : dump(table_json(reports)));
        return;
      }
      write_text(csv_path, table_csv(reports));
      write_text(o.output + ".json", dump(table_json(reports)));
      m.add_output(csv_path);
      m.add_output(o.output + ".json");
    });
    return kExitOk;
  });
}

int cmd_stability(const Options& o, const Sink& sink) {
  RunManifest m("stability");
  return guarded(m, sink, o.output, false, [&] {
    std::optional<ModelParams> params;
    if (!o.input.empty()) {
      m.add_input(o.input);
      const auto report = read_json_file(o.input);
      if (!report.contains("params")) throw ValidationError(o.input + " has no params object");
      params = parse_params(report.at("params"));
    } else {
      if (!o.k1 || !o.k2 || !o.tau) {
        throw ValidationError("stability needs --k1, --k2 and --tau, or --input <report>");
      }
      params = ModelParams(*o.k1, *o.k2, *o.tau);
    }
    m.set_config({{"params", params_json(*params)}});
    const auto verdict = m.phase("analyse", [&] { return string_stability(*params); });
    const json result = {{"params", params_json(*params)},
                         {"lambda", verdict.lambda},
                         {"classification", std::string(cthrv::to_string(verdict.classification))}};
    const std::string text =
        o.format == "csv" ? flat_csv({{"k1", params->k1()},
                                      {"k2", params->k2()},
                                      {"tau", params->tau()},
                                      {"lambda", verdict.lambda},
                                      {"classification", result.at("classification")}})
                          : dump(result);
    if (o.output.empty()) {
      sink.out << text;
    } else {
      write_text(o.output, text);
      m.add_output(o.output);
    }
    return kExitOk;
  });
}

int cmd_compare_sensors(const Options& o, const Sink& sink) {
  RunManifest m("compare-sensors");
  return guarded(m, sink, o.output, false, [&] {
    if (o.sensors.size() != 2) throw ValidationError("compare-sensors needs <radar.csv> <gps.csv>");
    m.set_config({{"bin_width_gap", o.bin_gap}, {"bin_width_speed", o.bin_speed}});
    for (const auto& p : o.sensors) m.add_input(p);
    const auto radar = m.phase("load", [&] { return load_input(o.sensors[0]); });
    const auto gps = m.phase("load", [&] { return load_input(o.sensors[1]); });
    const auto cmp = m.phase("compare", [&] { return compare_sensors(radar, gps, o.bin_gap, o.bin_speed); });
    std::string text;
    if (o.format == "csv") {
      text = flat_csv({{"mean_gap_err", cmp.mean_gap_err},
                       {"std_gap_err", cmp.std_gap_err},
                       {"mean_rel_speed_err", cmp.mean_rel_speed_err},
                       {"std_rel_speed_err", cmp.std_rel_speed_err}});
    } else {
      text = dump({{"mean_gap_err", cmp.mean_gap_err},
                   {"std_gap_err", cmp.std_gap_err},
                   {"mean_rel_speed_err", cmp.mean_rel_speed_err},
                   {"std_rel_speed_err", cmp.std_rel_speed_err},
                   {"histogram_gap", to_json(cmp.histogram_gap)},
                   {"histogram_rel_speed", to_json(cmp.histogram_rel_speed)}});
    }
    if (o.output.empty()) {
      sink.out << text;
    } else {
      write_text(o.output, text);
      m.add_output(o.output);
    }
    return kExitOk;
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CTH-RV car-following identification toolkit", "cthrv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));
  Options o;

  auto add_io = [&](CLI::App* sub) {
    sub->add_option("--output,-o", o.output, "Output path (stdout if omitted)");
    sub->add_option("--manifest", o.manifest, "Manifest path (default: <output>.manifest.json)");
  };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  };
  auto add_params = [&](CLI::App* sub) {
    sub->add_option("--k1", o.k1, "Gap gain, 1/s^2");
    sub->add_option("--k2", o.k2, "Relative-speed gain, 1/s");
    sub->add_option("--tau", o.tau, "Time headway, s");
  };

  auto* gen = app.add_subcommand("generate", "Simulate a synthetic follower trajectory");
  gen->add_option("--config,-c", o.config, "Generation spec (JSON); default is the benchmark");
  gen->add_option("--seed", o.seed, "Overrides lead jitter and noise seeds");
  add_io(gen);

  auto* sim = app.add_subcommand("simulate", "Simulate a follower behind a recorded lead");
  sim->add_option("--input,-i", o.input, "CSV with time and v_l columns");
  add_params(sim);
  sim->add_option("--v0", o.v0, "Initial follower speed (default: first lead speed)");
  sim->add_option("--s0", o.s0, "Initial gap (default: equilibrium tau * v0)");
  add_io(sim);

  auto* fit = app.add_subcommand("fit", "Estimate model parameters from a trajectory");
  fit->add_option("--input,-i", o.input, "Trajectory CSV");
  fit->add_option("--method,-m", o.method, "Estimator")->check(CLI::IsMember({"ls", "batch", "pf"}));
  fit->add_option("--config,-c", o.config, "Estimator settings (JSON)");
  fit->add_option("--seed", o.seed, "Seed for batch starts and the particle filter");
  fit->add_option("--trace", o.trace, "pf: per-step posterior CSV");
  fit->add_option("--realtime", o.realtime,
                  "pf: also replay the data at this multiple of real time, printing the posterior");
  add_format(fit);
  add_io(fit);

  auto* bench = app.add_subcommand("benchmark", "Run every estimator on one trajectory");
  bench->add_option("--input,-i", o.input, "Trajectory CSV");
  bench->add_option("--config,-c", o.config, "Estimator settings (JSON)");
  bench->add_option("--seed", o.seed, "Seed for batch starts and the particle filter");
  bench->add_option("--output,-o", o.output, "Writes <output>.csv and <output>.json");
  bench->add_option("--manifest", o.manifest, "Manifest path (default: <output>.manifest.json)");
  add_format(bench);

  auto* stab = app.add_subcommand("stability", "String-stability verdict");
  add_params(stab);
  stab->add_option("--input,-i", o.input, "Fit report JSON to read params from");
  add_format(stab);
  add_io(stab);

  auto* cmp = app.add_subcommand("compare-sensors", "Radar-minus-GPS error statistics");
  cmp->add_option("sensors", o.sensors, "radar.csv gps.csv")->expected(2);
  cmp->add_option("--bin-gap", o.bin_gap, "Gap histogram bin width, m");
  cmp->add_option("--bin-speed", o.bin_speed, "Relative-speed histogram bin width, m/s");
  add_format(cmp);
  add_io(cmp);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", {{"type", "usage"}, {"message", e.what()}, {"exit_code", kExitUsage}}}}.dump()
        << "\n";
    return kExitUsage;
  }

  const Sink sink{out, err, o.manifest};
  if (gen->parsed()) return cmd_generate(o, sink);
  if (sim->parsed()) return cmd_simulate(o, sink);
  if (fit->parsed()) return cmd_fit(o, sink);
  if (bench->parsed()) return cmd_benchmark(o, sink);
  if (stab->parsed()) return cmd_stability(o, sink);
  if (cmp->parsed()) return cmd_compare_sensors(o, sink);
  return kExitUsage;
}

}  // namespace cthrv::cli
