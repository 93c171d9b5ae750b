#include "pgsure/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pgsure/rng.hpp"

namespace pgsure {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

json kernel_to_json(const KernelSpec& k) {
  json j{{"kind", kernel_kind_name(k.kind)}, {"support", k.support}};
  if (k.kind == KernelKind::Gaussian) j["std"] = k.std;
  if (k.kind == KernelKind::Bicubic) j["scale"] = k.scale;
  return j;
}

KernelSpec kernel_from_json(const json& j) {
  KernelSpec k;
  k.kind = kernel_kind_from_name(j.at("kind").get<std::string>());
  k.support = j.value("support", 0);
  k.std = j.value("std", 0.0);
  k.scale = j.value("scale", 0);
  return k;
}

json scenario_json(const Scenario& s) {
  return {{"name", s.name},
          {"task", task_name(s.task)},
          {"kernel", kernel_to_json(s.kernel)},
          {"sigma_sq", s.sigma_sq},
          {"xi", s.xi},
          {"alpha", s.alpha}};
}

Scenario scenario_from(const json& j) {
  Scenario s;
  s.name = j.at("name").get<std::string>();
  const std::string task = j.at("task").get<std::string>();
  if (task == "deblur")
    s.task = Task::Deblur;
  else if (task == "sr")
    s.task = Task::SuperResolve;
  else
    throw std::invalid_argument("scenario task must be 'deblur' or 'sr', got " + task);
  s.kernel = kernel_from_json(j.at("kernel"));
  s.sigma_sq = j.at("sigma_sq").get<double>();
  s.xi = j.at("xi").get<double>();
  s.alpha = j.value("alpha", s.task == Task::Deblur ? 1 : 2);
  if (!std::isfinite(s.sigma_sq) || s.sigma_sq < 0.0)
    throw std::invalid_argument("scenario " + s.name + ": sigma_sq must be finite and >= 0");
  if (!std::isfinite(s.xi) || s.xi < 0.0)
    throw std::invalid_argument("scenario " + s.name + ": xi must be finite and >= 0");
  if (s.task == Task::Deblur && s.alpha != 1)
    throw std::invalid_argument("scenario " + s.name + ": deblur requires alpha = 1");
  if (s.task == Task::SuperResolve && s.alpha < 2)
    throw std::invalid_argument("scenario " + s.name + ": super-resolution requires alpha >= 2");
  return s;
}

std::vector<Scenario> builtin_deblur() {
  auto row = [](int i, KernelSpec k, double s2, double xi) {
    return Scenario{"deblur-" + std::to_string(i), Task::Deblur, k, s2, xi, 1};
  };
  return {
      row(1, KernelSpec::lorentzian(), 2.0, 5e-2),
      row(2, KernelSpec::lorentzian(), 8.0, 1e-1),
      row(3, KernelSpec::uniform(), 0.3, 5e-3),
      row(4, KernelSpec::separable_binomial(), 49.0, 1e-1),
      row(5, KernelSpec::gaussian(1.6, 25), 4.0, 5e-2),
      row(6, KernelSpec::gaussian(0.4, 5), 64.0, 0.0),
  };
}

std::vector<Scenario> builtin_sr() {
  auto row = [](int i, KernelSpec k, int alpha, double s2, double xi) {
    return Scenario{"sr-" + std::to_string(i), Task::SuperResolve, k, s2, xi, alpha};
  };
  return {
      row(1, KernelSpec::gaussian(1.6, 25), 3, 10.0, 1e-2),
      row(2, KernelSpec::gaussian(1.6, 25), 3, 49.0, 1e-2),
      row(3, KernelSpec::bicubic(2), 2, 10.0, 1e-2),
      row(4, KernelSpec::bicubic(3), 3, 10.0, 1e-2),
      row(5, KernelSpec::bicubic(2), 2, 49.0, 1e-2),
      row(6, KernelSpec::bicubic(3), 3, 49.0, 1e-2),
  };
}

int scenario_index(const std::string& name) {
  // "deblur-4" -> 4; returns 0 when the name doesn't follow the builtin
  // convention.
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) return 0;
  int idx = 0;
  for (std::size_t i = dash + 1; i < name.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return 0;
    idx = idx * 10 + (name[i] - '0');
  }
  return idx >= 1 && idx <= 6 ? idx : 0;
}

Image center_crop(const Image& img, int rows, int cols) {
  const int r0 = (img.height - rows) / 2;
  const int c0 = (img.width - cols) / 2;
  Image out(rows, cols, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    out.planes[c] = img.planes[c].block(r0, c0, rows, cols);
  return out;
}

std::string csv_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct BudgetedRun {
  // One of the two is used depending on the method.
  TrainConfig train;
  AdmmConfig admm;
  bool is_admm = false;
};

BudgetedRun method_budget(const std::string& method, const Scenario& sc,
                          const std::string& budget, std::uint64_t seed,
                          const DenoiserSpec& denoiser) {
  if (budget != "desk" && budget != "paper")
    throw std::invalid_argument("unknown budget: " + budget + " (expected desk or paper)");
  const bool paper = budget == "paper";
  const bool sr = sc.task == Task::SuperResolve;
  const int idx = scenario_index(sc.name);

  BudgetedRun run;
  if (method == "gsure" || method == "dip") {
    run.train.seed = seed;
    // The GSURE objective's Monte-Carlo gradient noise destabilizes the
    // sigmoid head at 1e-2 (saturation collapse); 1e-3 is reliable.
    run.train.lr = method == "gsure" ? 1e-3 : 1e-2;
    run.train.iterations = paper ? 4000 : 300;
    run.train.selection =
        method == "gsure" ? Selection::MinSmoothedLoss : Selection::LastIteration;
    return run;
  }

  run.is_admm = true;
  AdmmConfig& a = run.admm;
  a.seed = seed;
  a.denoiser = denoiser;
  if (method == "pnp-gsure") {
    a.fidelity = AdmmConfig::Fidelity::Gsure;
    a.input = AdmmConfig::InputKind::SufficientStatistic;
    if (sr) {
      a.beta = 100.0;
      a.rho = 10.0;  // beta/rho = 10
      a.n_iter = paper ? 50 : 10;
      a.inner_iters = paper ? 100 : 10;
    } else {
      static const double betas[7] = {0, 0.75, 0.75, 4.0, 1.0, 2.0, 1.5};
      a.beta = idx > 0 ? betas[idx] : 1.0;
      a.rho = a.beta / 0.01;
      a.n_iter = paper ? 250 : 10;
      a.inner_iters = paper ? 20 : 10;
    }
    a.inner_lr = 1e-3;
  } else if (method == "pnp-dip" || method == "pnp-ls") {
    a.fidelity = AdmmConfig::Fidelity::Ls;
    a.input = method == "pnp-dip" ? AdmmConfig::InputKind::FixedNoise
                                  : AdmmConfig::InputKind::SufficientStatistic;
    if (sr) {
      a.beta = (idx == 2 || idx == 5 || idx == 6) ? 1.5 : 0.1;
      a.rho = a.beta;  // beta/rho = 1
      a.n_iter = paper ? 20 : 5;
      a.inner_iters = paper ? 250 : 20;
      a.inner_lr = 1e-3;
    } else {
      a.beta = 0.1;
      a.rho = a.beta;
      a.n_iter = paper ? 250 : 10;
      a.inner_iters = paper ? 20 : 10;
      a.inner_lr = 1e-2;
    }
  } else {
    throw std::invalid_argument(
        "unknown method: " + method +
        " (expected dip, gsure, pnp-gsure, pnp-ls, or pnp-dip)");
  }
  return run;
}

std::uint64_t run_seed(std::uint64_t base, const std::string& image, const std::string& scenario,
                       const std::string& method) {
  std::uint64_t h = hash_combine(kFnvOffset, base);
  h = hash_combine(h, image);
  h = hash_combine(h, scenario);
  h = hash_combine(h, method);
  return h;
}

}  // namespace

std::string task_name(Task t) { return t == Task::Deblur ? "deblur" : "sr"; }

std::string scenario_to_json(const Scenario& s) { return scenario_json(s).dump(2); }

Scenario scenario_from_json(const std::string& text) {
  return scenario_from(json::parse(text));
}

std::vector<Scenario> load_scenarios(const std::string& path_or_builtin) {
  if (path_or_builtin == "paper-deblur") return builtin_deblur();
  if (path_or_builtin == "paper-sr") return builtin_sr();
  if (!fs::exists(path_or_builtin))
    throw std::invalid_argument("unknown builtin scenario set or missing file: " +
                                path_or_builtin);
  std::ifstream in(path_or_builtin);
  json j = json::parse(in);
  if (j.is_object() && j.contains("scenarios")) j = j["scenarios"];
  if (!j.is_array()) throw std::invalid_argument("scenario file must hold a JSON array");
  std::vector<Scenario> out;
  out.reserve(j.size());
  for (const auto& item : j) out.push_back(scenario_from(item));
  if (out.empty()) throw std::invalid_argument("scenario file is empty");
  return out;
}

Scenario resolve_scenario(const std::string& ref) {
  for (const auto& s : builtin_deblur())
    if (s.name == ref) return s;
  for (const auto& s : builtin_sr())
    if (s.name == ref) return s;
  if (fs::exists(ref)) {
    auto list = load_scenarios(ref);
    if (list.size() != 1)
      throw std::invalid_argument("scenario file " + ref + " holds " +
                                  std::to_string(list.size()) +
                                  " scenarios; name one or use a single-entry file");
    return list.front();
  }
  throw std::invalid_argument("unknown scenario: " + ref);
}

SpectralOperator make_operator(const Scenario& scenario, int hr_rows, int hr_cols) {
  return SpectralOperator(build_kernel(scenario.kernel), hr_rows, hr_cols, scenario.alpha,
                          scenario.xi);
}

Degraded degrade(const Image& image, const Scenario& scenario, std::uint64_t seed) {
  const int stride = NetworkConfig{}.stride_factor();
  const int div = std::lcm(scenario.alpha, stride);
  const int rows = (image.height / div) * div;
  const int cols = (image.width / div) * div;
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("image too small: needs at least " + std::to_string(div) +
                                " pixels per axis");
  Degraded d;
  d.cropped = rows != image.height || cols != image.width;
  d.truth = d.cropped ? center_crop(image, rows, cols) : image;
  d.scenario = scenario;
  d.seed = seed;
  SpectralOperator op = make_operator(scenario, rows, cols);
  Image blurred = op.apply_H(d.truth);
  d.observed = scenario.sigma_sq > 0.0
                   ? add_gaussian_noise(blurred, std::sqrt(scenario.sigma_sq), seed)
                   : blurred;
  return d;
}

RestorationResult run_method(const std::string& method, const Scenario& scenario,
                             const SpectralOperator& op, const Image& observed,
                             const std::string& budget, std::uint64_t seed,
                             const DenoiserSpec& denoiser, const EvalHook& hook,
                             int override_iterations) {
  if (method == "ml") {
    RestorationResult r;
    r.restored = op.ml_estimate(observed);
    r.seed = seed;
    r.selected_iteration = 0;
    r.config_json = "{\"method\":\"ml\"}";
    return r;
  }

  BudgetedRun run = method_budget(method, scenario, budget, seed, denoiser);
  if (override_iterations > 0) {
    run.train.iterations = override_iterations;
    run.admm.n_iter = override_iterations;
  }
  NetworkConfig net;
  net.image_channels = observed.channels();
  const double sigma = std::sqrt(scenario.sigma_sq);
  if (method == "gsure") return train_gsure(op, observed, sigma, net, run.train, hook);
  if (method == "dip") return train_dip(op, observed, net, run.train, hook);
  return admm_pnp(op, observed, sigma, net, run.admm, hook);
}

void Report::compute_aggregates() {
  aggregates.clear();
  for (const auto& row : rows) {
    if (row.status != "ok") continue;
    auto it = std::find_if(aggregates.begin(), aggregates.end(), [&](const Aggregate& a) {
      return a.scenario == row.scenario && a.method == row.method;
    });
    if (it == aggregates.end()) {
      aggregates.push_back({row.scenario, row.method, row.psnr, 1});
    } else {
      it->mean_psnr += row.psnr;
      ++it->count;
    }
  }
  for (auto& a : aggregates) a.mean_psnr /= static_cast<double>(a.count);
}

std::string Report::to_csv(bool include_wall_time) const {
  std::ostringstream os;
  os << "image,scenario,method,psnr,selected_iteration";
  if (include_wall_time) os << ",wall_time";
  os << ",seed,status,crop\n";
  for (const auto& r : rows) {
    os << csv_field(r.image) << ',' << csv_field(r.scenario) << ',' << csv_field(r.method)
       << ',' << format_double(r.psnr) << ',' << r.selected_iteration;
    if (include_wall_time) os << ',' << format_double(r.wall_time);
    os << ',' << r.seed << ',' << csv_field(r.status) << ',' << r.crop << '\n';
  }
  return os.str();
}

std::string Report::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"image", r.image},
                      {"scenario", r.scenario},
                      {"method", r.method},
                      {"psnr", r.psnr},
                      {"selected_iteration", r.selected_iteration},
                      {"wall_time", r.wall_time},
                      {"seed", r.seed},
                      {"status", r.status},
                      {"crop", r.crop}});
  json agg_j = json::array();
  for (const auto& a : aggregates)
    agg_j.push_back({{"scenario", a.scenario},
                     {"method", a.method},
                     {"mean_psnr", a.mean_psnr},
                     {"count", a.count}});
  return json{{"rows", rows_j}, {"aggregates", agg_j}}.dump(2);
}

Report run_experiment(const std::string& images_dir, const std::vector<Scenario>& scenarios,
                      const SweepConfig& config) {
  if (config.methods.empty()) throw std::invalid_argument("run_experiment: no methods given");
  if (scenarios.empty()) throw std::invalid_argument("run_experiment: no scenarios given");
  if (!fs::is_directory(images_dir))
    throw std::invalid_argument("not a directory: " + images_dir);

  std::vector<std::string> image_paths;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      image_paths.push_back(entry.path().string());
  std::sort(image_paths.begin(), image_paths.end());
  if (image_paths.empty())
    throw std::invalid_argument("no PNG images found in " + images_dir);

  struct Job {
    std::string image_path, image_id, scenario_name, method;
    const Scenario* scenario;
  };
  std::vector<Job> jobs;
  for (const auto& path : image_paths) {
    const std::string id = fs::path(path).stem().string();
    for (const auto& sc : scenarios)
      for (const auto& m : config.methods) jobs.push_back({path, id, sc.name, m, &sc});
  }

  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
  std::ofstream partial;
  std::mutex partial_mutex;
  if (!config.out_dir.empty()) {
    partial.open(fs::path(config.out_dir) / "report.csv");
    partial << "image,scenario,method,psnr,selected_iteration,wall_time,seed,status,crop\n"
            << std::flush;
  }

  std::vector<ReportRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  const int n_threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(jobs.size())));

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      ReportRow row;
      row.image = job.image_id;
      row.scenario = job.scenario_name;
      row.method = job.method;
      row.seed = run_seed(config.base_seed, job.image_id, job.scenario_name, job.method);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Image x = load_image(job.image_path);
        Degraded d = degrade(x, *job.scenario, hash_combine(row.seed, "degrade"));
        if (d.cropped)
          row.crop = std::to_string(d.truth.height) + "x" + std::to_string(d.truth.width);
        SpectralOperator op = make_operator(*job.scenario, d.truth.height, d.truth.width);
        RestorationResult res = run_method(job.method, *job.scenario, op, d.observed,
                                           config.budget, row.seed, config.denoiser);
        row.psnr = psnr(res.restored, d.truth);
        row.selected_iteration = res.selected_iteration;
        if (!config.out_dir.empty()) {
          const std::string name =
              job.image_id + "__" + job.scenario_name + "__" + job.method + ".png";
          save_image(res.restored, (fs::path(config.out_dir) / name).string());
        }
      } catch (const std::exception& e) {
        row.status = e.what();
      }
      row.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows[i] = row;
      if (partial.is_open()) {
        std::lock_guard<std::mutex> lock(partial_mutex);
        partial << csv_field(row.image) << ',' << csv_field(row.scenario) << ','
                << csv_field(row.method) << ',' << format_double(row.psnr) << ','
                << row.selected_iteration << ',' << format_double(row.wall_time) << ','
                << row.seed << ',' << csv_field(row.status) << ',' << row.crop << '\n'
                << std::flush;
      }
    }
  };

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (partial.is_open()) partial.close();

  Report report;
  report.rows = std::move(rows);  // jobs were enumerated in canonical order
  report.compute_aggregates();

  if (!config.out_dir.empty()) {
    // Rewrite the canonical (sorted) report over the append-only partial.
    std::ofstream csv(fs::path(config.out_dir) / "report.csv");
    csv << report.to_csv();
    std::ofstream js(fs::path(config.out_dir) / "report.json");
    js << report.to_json();
  }
  return report;
}

Image make_test_image(int height, int width, int channels, std::uint64_t seed) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3))
    throw std::invalid_argument("make_test_image: bad dimensions");
  Rng rng(seed_stream(hash_combine(seed, "test-image")));
  Image img(height, width, channels);
  for (int c = 0; c < channels; ++c) {
    const double fx = rng.uniform(1.5, 4.0), fy = rng.uniform(1.5, 4.0);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double cx = rng.uniform(0.25, 0.75) * width;
    const double cy = rng.uniform(0.25, 0.75) * height;
    const double radius = rng.uniform(0.1, 0.25) * std::min(width, height);
    const int rx0 = static_cast<int>(rng.uniform(0.05, 0.4) * width);
    const int ry0 = static_cast<int>(rng.uniform(0.05, 0.4) * height);
    const int rx1 = rx0 + static_cast<int>(rng.uniform(0.2, 0.5) * width);
    const int ry1 = ry0 + static_cast<int>(rng.uniform(0.2, 0.5) * height);
    auto& p = img.planes[c];
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        const double u = static_cast<double>(j) / width;
        const double v = static_cast<double>(i) / height;
        double val = 60.0 + 120.0 * (0.5 * u + 0.5 * v);  // smooth ramp
        val += 30.0 * std::sin(6.283185307179586 * (fx * u + fy * v) + phase);
        const double dx = j - cx, dy = i - cy;
        if (dx * dx + dy * dy < radius * radius) val += 55.0;
        if (j >= rx0 && j < rx1 && i >= ry0 && i < ry1) val -= 45.0;
        p(i, j) = std::clamp(val, 0.0, 255.0);
      }
    }
  }
  return img;
}

}  // namespace pgsure
