#pragma once

#include <string>

#include "pgsure/image.hpp"

namespace pgsure {

/// Pluggable Gaussian denoiser for the plug-and-play z-step.
struct DenoiserSpec {
  enum class Kind { Identity, Tv, ExternalCommand };
  Kind kind = Kind::Tv;

  // TV (ROF via Chambolle's dual projection)
  int tv_max_iters = 100;
  double tv_tolerance = 1e-4;
  // lambda = tv_lambda_scale * noise_level; calibrated on synthetic
  // Gaussian noise.
  double tv_lambda_scale = 0.75;

  // ExternalCommand: template with {in}, {out}, {sigma} placeholders,
  // e.g. "bm3d.py {in} {out} {sigma}". The program must write a PNG of
  // the same dimensions to {out}.
  std::string command;

  static DenoiserSpec identity() { return {Kind::Identity}; }
  static DenoiserSpec tv(int max_iters = 100, double tolerance = 1e-4) {
    DenoiserSpec s;
    s.kind = Kind::Tv;
    s.tv_max_iters = max_iters;
    s.tv_tolerance = tolerance;
    return s;
  }
  static DenoiserSpec external(std::string cmd) {
    DenoiserSpec s;
    s.kind = Kind::ExternalCommand;
    s.command = std::move(cmd);
    return s;
  }
};

/// Denoises assuming white Gaussian noise of std `noise_level` (display
/// scale). Identity and TV are deterministic and reentrant; external
/// commands spawn one subprocess per call.
Image denoise(const DenoiserSpec& spec, const Image& img, double noise_level);

/// ROF model min_z 0.5||z - f||^2 + lambda*TV(z), per channel, solved by
/// Chambolle's dual projection iteration.
Image tv_denoise(const Image& img, double lambda, int max_iters, double tolerance);

DenoiserSpec denoiser_from_name(const std::string& name);

}  // namespace pgsure
