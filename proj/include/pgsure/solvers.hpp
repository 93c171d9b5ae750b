#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgsure/denoisers.hpp"
#include "pgsure/image.hpp"
#include "pgsure/linop.hpp"
#include "pgsure/network.hpp"

namespace pgsure {

enum class Selection { MinSmoothedLoss, FixedIteration, LastIteration };

struct TrainConfig {
  int iterations = 4000;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;  // GSURE probe step
  Selection selection = Selection::MinSmoothedLoss;
  int window = 20;          // smoothing window for MinSmoothedLoss
  int fixed_iteration = 0;  // for Selection::FixedIteration
  int log_every = 1;
  bool paired_probe = false;  // average the +g/-g probes (variance reduction)
};

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  double psnr = -1.0;           // -1 when no ground truth supplied
  double projected_mse = -1.0;  // -1 when no ground truth supplied
  double wall_time = 0.0;       // seconds since run start
};

struct RestorationResult {
  Image restored;
  std::vector<TraceRow> traces;
  int selected_iteration = 0;
  std::uint64_t seed = 0;
  std::string config_json;  // resolved configuration snapshot
};

/// Ground-truth instrumentation for traces only. Solvers never use it
/// for model selection (train_dip's oracle-best iteration is recorded
/// in the trace, not acted on).
struct EvalHook {
  const Image* truth = nullptr;
};

/// Minimizes the projected-GSURE fidelity over network weights with the
/// sufficient statistic u = H^T y / sigma^2 as input. A fresh probe is
/// drawn every iteration. Default model selection: minimum of the
/// moving-average-smoothed loss.
RestorationResult train_gsure(const SpectralOperator& op, const Image& y, double sigma,
                              const NetworkConfig& net_config, const TrainConfig& config,
                              const EvalHook& hook = {});

/// DIP-style training: least-squares fidelity with a fixed random input
/// tensor (uniform in [0, 25.5], drawn once from the seed).
RestorationResult train_dip(const SpectralOperator& op, const Image& y,
                            const NetworkConfig& net_config, const TrainConfig& config,
                            const EvalHook& hook = {});

struct AdmmConfig {
  enum class Fidelity { Gsure, Ls };
  enum class InputKind { SufficientStatistic, FixedNoise };

  int n_iter = 250;
  int inner_iters = 20;
  double inner_lr = 1e-3;
  double beta = 1.0;
  double rho = 100.0;  // denoiser noise level = sqrt(beta/rho)
  DenoiserSpec denoiser = DenoiserSpec::tv();
  Fidelity fidelity = Fidelity::Gsure;
  InputKind input = InputKind::SufficientStatistic;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;
  int log_every = 1;
  // Output f(u; theta_N) instead of the default z_N.
  bool output_network = false;
};

/// Plug-and-play ADMM: theta-step (Adam on fidelity + (rho/2)||f-z+v||^2,
/// warm-started), z-step (denoiser at sqrt(beta/rho)), v-step (dual
/// update). Initialized with v_0 = 0 and z_0 = x_ML; returns the
/// last-iteration reconstruction.
RestorationResult admm_pnp(const SpectralOperator& op, const Image& y, double sigma,
                           const NetworkConfig& net_config, const AdmmConfig& config,
                           const EvalHook& hook = {});

}  // namespace pgsure
