// Batch CLI for single-image restoration: degrade / restore / eval /
// sweep / scenarios. Exit codes: 0 success, 1 runtime failure, 2 usage
// error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "pgsure/harness.hpp"
#include "pgsure/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pgsure;

namespace {

void print_resolved(const json& config) {
  std::cout << "config: " << config.dump() << std::endl;
}

std::string sidecar_path(const std::string& image_path) { return image_path + ".json"; }

int default_jobs() {
  if (const char* env = std::getenv("PGSURE_JOBS")) {
    const int j = std::atoi(env);
    if (j >= 1) return j;
  }
  return 1;
}

void write_trace_csv(const std::string& path, const RestorationResult& res) {
  std::ofstream out(path);
  out << "iteration,loss,psnr,projected_mse,wall_time\n";
  out.precision(12);
  for (const auto& row : res.traces)
    out << row.iteration << ',' << row.loss << ',' << row.psnr << ',' << row.projected_mse
        << ',' << row.wall_time << '\n';
}

int cmd_degrade(const std::string& input, const std::string& scenario_ref,
                std::uint64_t seed, const std::string& output, const std::string& truth_out) {
  Scenario sc = resolve_scenario(scenario_ref);
  print_resolved({{"subcommand", "degrade"},
                  {"input", input},
                  {"scenario", json::parse(scenario_to_json(sc))},
                  {"seed", seed},
                  {"output", output}});
  Image x = load_image(input);
  Degraded d = degrade(x, sc, seed);
  save_image(d.observed, output);
  json sidecar{{"scenario", json::parse(scenario_to_json(sc))},
               {"seed", seed},
               {"sigma_sq", sc.sigma_sq},
               {"source", input}};
  if (d.cropped)
    sidecar["crop"] = std::to_string(d.truth.height) + "x" + std::to_string(d.truth.width);
  std::ofstream(sidecar_path(output)) << sidecar.dump(2) << '\n';
  if (!truth_out.empty()) save_image(d.truth, truth_out);
  std::cout << "wrote " << output << " and " << sidecar_path(output) << std::endl;
  return 0;
}

int cmd_restore(const std::string& input, std::string scenario_ref, const std::string& method,
                int iterations, const std::string& denoiser_name, std::uint64_t seed,
                const std::string& output, const std::string& trace_path, double sigma_sq,
                const std::string& budget, const std::string& truth_path) {
  Scenario sc;
  bool have_scenario = false;
  if (fs::exists(sidecar_path(input))) {
    std::ifstream in(sidecar_path(input));
    json sidecar = json::parse(in);
    sc = scenario_from_json(sidecar.at("scenario").dump());
    have_scenario = true;
  }
  if (!scenario_ref.empty()) {
    sc = resolve_scenario(scenario_ref);
    have_scenario = true;
  }
  if (!have_scenario)
    throw CLI::ValidationError("--scenario",
                               "no scenario given and no sidecar JSON next to the input");
  if (sigma_sq >= 0.0) sc.sigma_sq = sigma_sq;
  const bool needs_sigma = method == "gsure" || method == "pnp-gsure" || method == "pnp-ls";
  if (needs_sigma && sc.sigma_sq <= 0.0)
    throw CLI::ValidationError(
        "--sigma-sq", "method " + method +
                          " needs the noise level; pass --sigma-sq > 0 or use a scenario "
                          "with nonzero noise");

  // The observed grid is the lr grid; the restoration grid is alpha
  // times larger per axis.
  Image y = load_image(input);
  const int hr_rows = y.height * sc.alpha;
  const int hr_cols = y.width * sc.alpha;
  SpectralOperator op = make_operator(sc, hr_rows, hr_cols);

  print_resolved({{"subcommand", "restore"},
                  {"input", input},
                  {"scenario", json::parse(scenario_to_json(sc))},
                  {"method", method},
                  {"iterations", iterations},
                  {"denoiser", denoiser_name},
                  {"seed", seed},
                  {"budget", budget},
                  {"output", output}});

  Image truth;
  EvalHook hook;
  if (!truth_path.empty()) {
    truth = load_image(truth_path);
    if (truth.height != hr_rows || truth.width != hr_cols)
      throw std::runtime_error("truth image dimensions do not match the restoration grid");
    hook.truth = &truth;
  }

  DenoiserSpec denoiser = denoiser_from_name(denoiser_name);
  RestorationResult res = run_method(method, sc, op, y, budget, seed, denoiser, hook,
                                     iterations);

  save_image(res.restored, output);
  if (!trace_path.empty()) write_trace_csv(trace_path, res);
  json result{{"method", method},
              {"selected_iteration", res.selected_iteration},
              {"seed", res.seed},
              {"config", res.config_json.empty() ? json{} : json::parse(res.config_json)},
              {"output", output}};
  if (hook.truth) result["psnr"] = psnr(res.restored, truth);
  std::ofstream(output + ".result.json") << result.dump(2) << '\n';
  std::cout << "wrote " << output;
  if (hook.truth) std::cout << "  psnr=" << psnr(res.restored, truth);
  std::cout << std::endl;
  return 0;
}

int cmd_eval(const std::string& restored, const std::string& truth) {
  Image a = load_image(restored);
  Image b = load_image(truth);
  if (!a.same_shape(b)) throw std::runtime_error("image dimensions differ");
  std::cout.precision(6);
  std::cout << psnr(a, b) << std::endl;
  return 0;
}

int cmd_sweep(const std::string& images_dir, const std::string& scenarios_ref,
              const std::vector<std::string>& methods, const std::string& out_dir, int jobs,
              const std::string& budget, std::uint64_t seed, const std::string& denoiser_name) {
  SweepConfig cfg;
  cfg.methods = methods;
  cfg.budget = budget;
  cfg.jobs = jobs;
  cfg.base_seed = seed;
  cfg.out_dir = out_dir;
  cfg.denoiser = denoiser_from_name(denoiser_name);
  auto scenarios = load_scenarios(scenarios_ref);
  print_resolved({{"subcommand", "sweep"},
                  {"images_dir", images_dir},
                  {"scenarios", scenarios_ref},
                  {"methods", methods},
                  {"out_dir", out_dir},
                  {"jobs", jobs},
                  {"budget", budget},
                  {"seed", seed},
                  {"denoiser", denoiser_name}});
  Report report = run_experiment(images_dir, scenarios, cfg);
  std::cout << report.to_csv();
  int failures = 0;
  for (const auto& row : report.rows)
    if (row.status != "ok") ++failures;
  if (failures > 0)
    std::cerr << failures << " of " << report.rows.size() << " runs failed" << std::endl;
  return 0;
}

int cmd_scenarios(const std::string& set_ref) {
  auto scenarios = load_scenarios(set_ref);
  json out = json::array();
  for (const auto& s : scenarios) out.push_back(json::parse(scenario_to_json(s)));
  std::cout << out.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image restoration (deblurring / super-resolution) toolkit"};
  app.require_subcommand(1);

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "Apply a degradation scenario to an image");
  std::string dg_input, dg_scenario, dg_output, dg_truth;
  std::uint64_t dg_seed = 0;
  degrade_cmd->add_option("--input", dg_input, "Ground-truth PNG")->required();
  degrade_cmd->add_option("--scenario", dg_scenario, "Scenario name or JSON file")->required();
  degrade_cmd->add_option("--seed", dg_seed, "Noise seed");
  degrade_cmd->add_option("--output", dg_output, "Observed PNG path")->required();
  degrade_cmd->add_option("--save-truth", dg_truth, "Also write the (cropped) ground truth");

  // restore
  auto* restore_cmd = app.add_subcommand("restore", "Restore a degraded image");
  std::string rs_input, rs_scenario, rs_method, rs_denoiser = "tv", rs_output, rs_trace,
              rs_budget = "desk", rs_truth;
  int rs_iterations = 0;
  std::uint64_t rs_seed = 0;
  double rs_sigma_sq = -1.0;
  restore_cmd->add_option("--input", rs_input, "Observed PNG")->required();
  restore_cmd->add_option("--scenario", rs_scenario,
                          "Scenario name or JSON file (defaults to the sidecar)");
  restore_cmd->add_option("--method", rs_method, "dip|gsure|pnp-gsure|pnp-ls|pnp-dip|ml")
      ->required();
  restore_cmd->add_option("--iterations", rs_iterations,
                          "Override the budget's (outer) iteration count");
  restore_cmd->add_option("--denoiser", rs_denoiser, "identity|tv|cmd:<template>");
  restore_cmd->add_option("--seed", rs_seed, "Run seed");
  restore_cmd->add_option("--sigma-sq", rs_sigma_sq,
                          "Noise variance override (display scale)");
  restore_cmd->add_option("--budget", rs_budget, "desk|paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  restore_cmd->add_option("--truth", rs_truth, "Ground truth for trace PSNR (optional)");
  restore_cmd->add_option("--output", rs_output, "Restored PNG path")->required();
  restore_cmd->add_option("--trace", rs_trace, "Trace CSV path");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Print PSNR between two images");
  std::string ev_restored, ev_truth;
  eval_cmd->add_option("--restored", ev_restored, "Restored PNG")->required();
  eval_cmd->add_option("--truth", ev_truth, "Ground-truth PNG")->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Batch images x scenarios x methods");
  std::string sw_images, sw_scenarios, sw_out, sw_budget = "desk", sw_denoiser = "tv";
  std::vector<std::string> sw_methods;
  int sw_jobs = default_jobs();
  std::uint64_t sw_seed = 0;
  sweep_cmd->add_option("--images-dir", sw_images, "Directory of PNGs")->required();
  sweep_cmd->add_option("--scenarios", sw_scenarios, "paper-deblur|paper-sr|JSON file")
      ->required();
  sweep_cmd->add_option("--methods", sw_methods, "Methods to run")->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out-dir", sw_out, "Report + restored-image directory");
  sweep_cmd->add_option("--jobs", sw_jobs, "Parallel runs (or PGSURE_JOBS)");
  sweep_cmd->add_option("--budget", sw_budget, "desk|paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  sweep_cmd->add_option("--seed", sw_seed, "Base seed");
  sweep_cmd->add_option("--denoiser", sw_denoiser, "Denoiser for the pnp methods");

  // scenarios
  auto* scen_cmd = app.add_subcommand("scenarios", "List a scenario set as JSON");
  std::string sc_set = "paper-deblur";
  scen_cmd->add_option("--set", sc_set, "paper-deblur|paper-sr|JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (degrade_cmd->parsed())
      return cmd_degrade(dg_input, dg_scenario, dg_seed, dg_output, dg_truth);
    if (restore_cmd->parsed())
      return cmd_restore(rs_input, rs_scenario, rs_method, rs_iterations, rs_denoiser,
                         rs_seed, rs_output, rs_trace, rs_sigma_sq, rs_budget, rs_truth);
    if (eval_cmd->parsed()) return cmd_eval(ev_restored, ev_truth);
    if (sweep_cmd->parsed())
      return cmd_sweep(sw_images, sw_scenarios, sw_methods, sw_out, sw_jobs, sw_budget,
                       sw_seed, sw_denoiser);
    if (scen_cmd->parsed()) return cmd_scenarios(sc_set);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
