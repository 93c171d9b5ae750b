#include "pgsure/solvers.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "pgsure/losses.hpp"
#include "pgsure/rng.hpp"

namespace pgsure {

namespace {

using ad::Tensor;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Image image_add(const Image& a, const Image& b) {
  Image out = a;
  for (int c = 0; c < a.channels(); ++c) out.planes[c] += b.planes[c];
  return out;
}

Image image_sub(const Image& a, const Image& b) {
  Image out = a;
  for (int c = 0; c < a.channels(); ++c) out.planes[c] -= b.planes[c];
  return out;
}

[[noreturn]] void diverged(const std::string& solver, int iteration,
                           const std::deque<double>& recent) {
  std::string msg = solver + ": non-finite loss at iteration " + std::to_string(iteration) +
                    "; recent losses:";
  for (double v : recent) msg += " " + std::to_string(v);
  throw std::runtime_error(msg);
}

std::string selection_name(Selection s) {
  switch (s) {
    case Selection::MinSmoothedLoss: return "min_smoothed_loss";
    case Selection::FixedIteration: return "fixed_iteration";
    case Selection::LastIteration: return "last_iteration";
  }
  return "unknown";
}

json train_config_json(const TrainConfig& c, const std::string& method) {
  return {{"method", method},
          {"iterations", c.iterations},
          {"lr", c.lr},
          {"seed", c.seed},
          {"epsilon", c.epsilon},
          {"selection", selection_name(c.selection)},
          {"window", c.window},
          {"fixed_iteration", c.fixed_iteration},
          {"paired_probe", c.paired_probe}};
}

/// Shared training loop; `make_loss` builds the scalar loss graph for
/// one iteration and returns it together with the current reconstruction.
struct IterationResult {
  Tensor loss;
  Tensor estimate;
};

RestorationResult run_training(const SpectralOperator& op, const Image& y,
                               const NetworkConfig& net_config, const TrainConfig& config,
                               const EvalHook& hook, const std::string& method,
                               const std::function<IterationResult(Network&, ParamStore&, int)>&
                                   make_loss) {
  if (config.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (config.window < 1) throw std::invalid_argument("smoothing window must be >= 1");

  auto [net, params] = network_init(net_config, hash_combine(config.seed, "params"));
  const auto t0 = Clock::now();

  RestorationResult result;
  result.seed = config.seed;
  result.config_json = train_config_json(config, method).dump();

  std::deque<double> window;
  double best_smoothed = std::numeric_limits<double>::infinity();
  Eigen::ArrayXd selected_values;
  ad::Shape out_shape{};

  for (int t = 1; t <= config.iterations; ++t) {
    IterationResult it = make_loss(net, params, t);
    const double loss_val = it.loss->value(0);
    out_shape = it.estimate->shape;

    window.push_back(loss_val);
    if (static_cast<int>(window.size()) > config.window) window.pop_front();
    if (!std::isfinite(loss_val)) diverged(method, t, window);

    bool take = false;
    switch (config.selection) {
      case Selection::MinSmoothedLoss: {
        double smoothed = 0.0;
        for (double v : window) smoothed += v;
        smoothed /= static_cast<double>(window.size());
        take = smoothed < best_smoothed;
        if (take) best_smoothed = smoothed;
        break;
      }
      case Selection::FixedIteration:
        take = t == std::min(config.fixed_iteration, config.iterations);
        break;
      case Selection::LastIteration:
        take = t == config.iterations;
        break;
    }
    if (take) {
      selected_values = it.estimate->value;
      result.selected_iteration = t;
    }

    if (t % config.log_every == 0 || t == config.iterations) {
      TraceRow row;
      row.iteration = t;
      row.loss = loss_val;
      row.wall_time = seconds_since(t0);
      if (hook.truth) {
        Image est = tensor_to_image(it.estimate);
        row.psnr = psnr(est, *hook.truth);
        row.projected_mse = projected_mse(op, est, *hook.truth);
      }
      result.traces.push_back(row);
    }

    ad::backward(it.loss);
    params.adam_step(config.lr);
  }

  if (selected_values.size() == 0)
    throw std::logic_error(method + ": no iteration selected (fixed_iteration out of range?)");
  result.restored = flat_to_image(selected_values, out_shape.c, out_shape.h, out_shape.w);
  (void)y;
  return result;
}

Tensor fixed_noise_input(const SpectralOperator& op, int channels, std::uint64_t seed) {
  // DIP-style fixed random input, uniform in [0, 0.1*255].
  ad::Shape shape{channels, op.hr_rows(), op.hr_cols()};
  Rng rng(seed_stream(seed));
  Eigen::ArrayXd v(shape.size());
  for (int i = 0; i < shape.size(); ++i) v(i) = rng.uniform(0.0, 25.5);
  return ad::constant(shape, std::move(v));
}

}  // namespace

RestorationResult train_gsure(const SpectralOperator& op, const Image& y, double sigma,
                              const NetworkConfig& net_config, const TrainConfig& config,
                              const EvalHook& hook) {
  if (sigma <= 0.0) throw std::invalid_argument("train_gsure: sigma must be > 0");

  Tensor u = image_to_tensor(op.sufficient_statistic(y, sigma));
  Rng probe_rng(seed_stream(hash_combine(config.seed, "probe")));

  auto step = [&, u](Network& net, ParamStore& params, int /*t*/) -> IterationResult {
    GsureProbe probe = GsureProbe::draw(u->shape, config.epsilon, probe_rng);
    Tensor f = net.forward(params, u);
    Tensor u_pert = ad::constant(u->shape, u->value + probe.epsilon * probe.g);
    Tensor f_pert = net.forward(params, u_pert);
    Tensor loss = gsure_loss(op, f, f_pert, y, probe);
    if (config.paired_probe) {
      GsureProbe mirror{-probe.g, probe.epsilon};
      Tensor u_neg = ad::constant(u->shape, u->value - probe.epsilon * probe.g);
      Tensor f_neg = net.forward(params, u_neg);
      loss = ad::scale(ad::add(loss, gsure_loss(op, f, f_neg, y, mirror)), 0.5);
    }
    return {loss, f};
  };
  return run_training(op, y, net_config, config, hook, "gsure", step);
}

RestorationResult train_dip(const SpectralOperator& op, const Image& y,
                            const NetworkConfig& net_config, const TrainConfig& config,
                            const EvalHook& hook) {
  Tensor input = fixed_noise_input(op, net_config.image_channels,
                                   hash_combine(config.seed, "dip-input"));
  auto step = [&, input](Network& net, ParamStore& params, int /*t*/) -> IterationResult {
    Tensor f = net.forward(params, input);
    return {ls_loss(op, f, y), f};
  };
  return run_training(op, y, net_config, config, hook, "dip", step);
}

RestorationResult admm_pnp(const SpectralOperator& op, const Image& y, double sigma,
                           const NetworkConfig& net_config, const AdmmConfig& config,
                           const EvalHook& hook) {
  if (config.rho <= 0.0) throw std::invalid_argument("admm_pnp: rho must be > 0");
  if (config.beta < 0.0) throw std::invalid_argument("admm_pnp: beta must be >= 0");
  if (config.fidelity == AdmmConfig::Fidelity::Gsure && sigma <= 0.0)
    throw std::invalid_argument("admm_pnp: GSURE fidelity needs sigma > 0");

  Tensor u;
  if (config.input == AdmmConfig::InputKind::SufficientStatistic) {
    if (sigma <= 0.0)
      throw std::invalid_argument("admm_pnp: sufficient-statistic input needs sigma > 0");
    u = image_to_tensor(op.sufficient_statistic(y, sigma));
  } else {
    u = fixed_noise_input(op, net_config.image_channels,
                          hash_combine(config.seed, "dip-input"));
  }

  auto [net, params] = network_init(net_config, hash_combine(config.seed, "params"));
  Rng probe_rng(seed_stream(hash_combine(config.seed, "probe")));
  const auto t0 = Clock::now();
  const double noise_level = std::sqrt(config.beta / config.rho);

  Image z = op.ml_estimate(y);
  Image v(op.hr_rows(), op.hr_cols(), y.channels());

  RestorationResult result;
  result.seed = config.seed;
  result.config_json =
      json{{"method", config.fidelity == AdmmConfig::Fidelity::Gsure ? "pnp-gsure" : "pnp-ls"},
           {"n_iter", config.n_iter},
           {"inner_iters", config.inner_iters},
           {"inner_lr", config.inner_lr},
           {"beta", config.beta},
           {"rho", config.rho},
           {"epsilon", config.epsilon},
           {"seed", config.seed},
           {"output", config.output_network ? "network" : "z"}}
          .dump();

  Image f_img;
  std::deque<double> recent;
  for (int k = 1; k <= config.n_iter; ++k) {
    Tensor target = image_to_tensor(image_sub(z, v));
    double last_loss = 0.0;
    for (int j = 0; j < config.inner_iters; ++j) {
      Tensor f = net.forward(params, u);
      Tensor fidelity;
      if (config.fidelity == AdmmConfig::Fidelity::Gsure) {
        GsureProbe probe = GsureProbe::draw(u->shape, config.epsilon, probe_rng);
        Tensor u_pert = ad::constant(u->shape, u->value + probe.epsilon * probe.g);
        Tensor f_pert = net.forward(params, u_pert);
        fidelity = gsure_loss(op, f, f_pert, y, probe);
      } else {
        fidelity = ls_loss(op, f, y);
      }
      Tensor penalty = ad::scale(ad::sum_squares(ad::sub(f, target)), config.rho / 2.0);
      Tensor loss = ad::add(fidelity, penalty);
      last_loss = loss->value(0);
      recent.push_back(last_loss);
      if (recent.size() > 10) recent.pop_front();
      if (!std::isfinite(last_loss)) diverged("admm_pnp", k, recent);
      ad::backward(loss);
      params.adam_step(config.inner_lr);
    }

    // Reconstruction at theta_k for the z- and v-steps.
    f_img = tensor_to_image(net.forward(params, u));
    z = denoise(config.denoiser, image_add(f_img, v), noise_level);
    v = image_add(v, image_sub(f_img, z));

    if (k % config.log_every == 0 || k == config.n_iter) {
      TraceRow row;
      row.iteration = k;
      row.loss = last_loss;
      row.wall_time = seconds_since(t0);
      if (hook.truth) {
        const Image& out = config.output_network ? f_img : z;
        row.psnr = psnr(out, *hook.truth);
        row.projected_mse = projected_mse(op, out, *hook.truth);
      }
      result.traces.push_back(row);
    }
  }

  result.restored = config.output_network ? f_img : z;
  result.selected_iteration = config.n_iter;
  return result;
}

}  // namespace pgsure
