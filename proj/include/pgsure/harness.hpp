#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgsure/image.hpp"
#include "pgsure/kernels.hpp"
#include "pgsure/linop.hpp"
#include "pgsure/solvers.hpp"

namespace pgsure {

enum class Task { Deblur, SuperResolve };

/// Named degradation configuration mirroring the experiment tables.
struct Scenario {
  std::string name;
  Task task = Task::Deblur;
  KernelSpec kernel;
  double sigma_sq = 0.0;  // display-scale noise variance
  double xi = 0.0;
  int alpha = 1;  // 1 for Deblur, >= 2 for SuperResolve
};

/// Builtin sets: "paper-deblur" and "paper-sr" (6 rows each). Anything
/// else is treated as a JSON file path.
std::vector<Scenario> load_scenarios(const std::string& path_or_builtin);

/// Looks a scenario up by name across both builtin sets, or loads it
/// from a JSON file when `ref` names one.
Scenario resolve_scenario(const std::string& ref);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

struct Degraded {
  Image observed;
  Image truth;  // center-cropped ground truth matching the hr grid
  Scenario scenario;
  std::uint64_t seed = 0;
  bool cropped = false;
};

/// y = H x + e. Center-crops the input to the largest size divisible by
/// both alpha and the network stride when needed.
Degraded degrade(const Image& image, const Scenario& scenario, std::uint64_t seed);

SpectralOperator make_operator(const Scenario& scenario, int hr_rows, int hr_cols);

/// Iteration budgets for a sweep: "desk" for CI-scale runs, "paper" for
/// the full published protocol.
struct SweepConfig {
  std::vector<std::string> methods;  // dip, gsure, pnp-gsure, pnp-ls, pnp-dip
  std::string budget = "desk";
  int jobs = 1;
  std::uint64_t base_seed = 0;
  std::string out_dir;  // when set: report.csv / report.json / restored PNGs
  DenoiserSpec denoiser = DenoiserSpec::tv();
};

struct ReportRow {
  std::string image;
  std::string scenario;
  std::string method;
  double psnr = -1.0;
  int selected_iteration = 0;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // or the failure message (fail-soft)
  std::string crop;           // "HxW" when the input was center-cropped
};

struct Aggregate {
  std::string scenario;
  std::string method;
  double mean_psnr = 0.0;
  int count = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<Aggregate> aggregates;

  std::string to_csv(bool include_wall_time = true) const;
  std::string to_json() const;
  void compute_aggregates();
};

/// Cross product of images x scenarios x methods with per-run seeds
/// hash(base seed, image, scenario, method). Run failures are recorded
/// per row without aborting the sweep.
Report run_experiment(const std::string& images_dir, const std::vector<Scenario>& scenarios,
                      const SweepConfig& config);

/// Dispatches one restoration by method name with the budget's
/// hyperparameters. Used by both the sweep and the CLI.
/// `override_iterations` > 0 replaces the budget's (outer) iteration count.
RestorationResult run_method(const std::string& method, const Scenario& scenario,
                             const SpectralOperator& op, const Image& observed,
                             const std::string& budget, std::uint64_t seed,
                             const DenoiserSpec& denoiser, const EvalHook& hook = {},
                             int override_iterations = 0);

/// Deterministic synthetic test image (smooth ramp + shapes + texture).
Image make_test_image(int height, int width, int channels, std::uint64_t seed);

std::string task_name(Task t);

}  // namespace pgsure
