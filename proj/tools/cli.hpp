#pragma once
#include <chrono>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cthrv/estimator_batch.hpp"
#include "cthrv/estimator_pf.hpp"
#include "cthrv/simulator.hpp"
#include "cthrv/trajectory.hpp"

namespace cthrv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitEstimation = 4;

std::string_view version() noexcept;

/// Entry point. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for an exception escaping a subcommand. Gap collapse counts as
/// an estimation failure when `estimating`, otherwise as invalid input.
int exit_code_for(const std::exception& e, bool estimating);

/// Stable error tag ("validation", "data", "too_few_samples", ...).
std::string error_type(const std::exception& e);

nlohmann::json error_json(const std::exception& e, bool estimating);

/// Records one invocation: what ran, with which resolved settings, how long
/// each phase took and whether it succeeded.
class RunManifest {
 public:
  explicit RunManifest(std::string subcommand);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::optional<std::uint64_t> seed) { seed_ = seed; }
  void add_input(std::string path) { inputs_.push_back(std::move(path)); }
  void add_output(std::string path) { outputs_.push_back(std::move(path)); }
  void set_error(nlohmann::json error) { error_ = std::move(error); }
  bool success() const { return error_.is_null(); }

  /// Runs `f`, adding its wall-clock time to phase `name`.
  template <class F>
  decltype(auto) phase(const std::string& name, F&& f) {
    struct Timer {
      RunManifest& self;
      const std::string& name;
      std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
      ~Timer() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
        self.record(name, d.count());
      }
    } timer{*this, name};
    return std::forward<F>(f)();
  }
  void record(const std::string& name, double seconds);

  nlohmann::json to_json() const;

 private:
  std::string subcommand_;
  nlohmann::json config_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, double>> phases_;
  nlohmann::json error_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

/// Generation spec: lead profile, true parameters, initial state and
/// optional measurement noise.
struct GenerateSpec {
  LeadProfileSpec lead = benchmark_lead_spec();
  ModelParams params{0.08, 0.12, 1.5};
  double v0 = 24.4;
  double s0 = 62.5;
  double noise_gap_std = 0.0;
  double noise_speed_std = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Missing keys keep their defaults; unknown keys and out-of-domain values
/// throw ValidationError.
GenerateSpec parse_generate_spec(const nlohmann::json& j);
nlohmann::json to_json(const GenerateSpec& spec);
Trajectory generate(const GenerateSpec& spec);

struct FitSettings {
  BatchConfig batch;
  PFConfig pf;
};

/// Sections "batch" and "pf"; missing keys keep their defaults.
FitSettings parse_fit_settings(const nlohmann::json& j);
nlohmann::json to_json(const FitSettings& settings);
/// Sets both estimator seeds.
void override_seed(FitSettings& settings, std::uint64_t seed);

enum class Method { Ls, Batch, Pf };
std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

/// Estimates, times the estimator call alone, then scores the fit. On
/// failure the partial report carries an "error" object instead of
/// throwing. Keys: method, params, runtime_s, mae_speed, mae_spacing,
/// lambda, classification, fit, [instability_probability, ...], error.
nlohmann::json estimate_report(const Trajectory& traj, Method method, const FitSettings& settings);

/// Same report JSON with runtime_s removed, for reproducibility checks.
nlohmann::json without_timing(nlohmann::json report);

}  // namespace cthrv::cli
