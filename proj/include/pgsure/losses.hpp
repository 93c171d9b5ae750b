#pragma once

#include <cstdint>

#include "pgsure/autodiff.hpp"
#include "pgsure/image.hpp"
#include "pgsure/linop.hpp"
#include "pgsure/rng.hpp"

namespace pgsure {

/// Random probe for the Monte-Carlo divergence estimate. Redrawn every
/// optimization iteration; epsilon stays fixed within a run.
struct GsureProbe {
  Eigen::ArrayXd g;  // i.i.d. standard normal, hr grid, all channels
  double epsilon = 1e-6;

  static GsureProbe draw(ad::Shape shape, double epsilon, Rng& rng);
};

/// ||y - H x_tilde||^2, the plain least-squares fidelity on the lr grid.
ad::Tensor ls_loss(const SpectralOperator& op, const ad::Tensor& x_tilde, const Image& y);

/// ||H^+(y - H x_tilde)||^2 = ||x_ML - P_H x_tilde||^2.
ad::Tensor bp_loss(const SpectralOperator& op, const ad::Tensor& x_tilde, const Image& y);

/// Projected GSURE fidelity (the additive constant of the full estimate
/// is omitted, so the value may be negative):
///   ||P_H f(u)||^2 - 2 f(u)^T H^+ y
///   + 2 g^T P_H (f(u + eps g) - f(u)) / eps
/// Both forward passes must use the same parameters; the second must be
/// evaluated at u + eps*g with the probe's g. Gradients flow through
/// both passes.
ad::Tensor gsure_loss(const SpectralOperator& op, const ad::Tensor& f_u,
                      const ad::Tensor& f_u_perturbed, const Image& y,
                      const GsureProbe& probe);

/// Evaluation-only ||P_H x_hat - P_H x_true||^2 (needs ground truth).
double projected_mse(const SpectralOperator& op, const Image& x_hat, const Image& x_true);

/// P_H applied inside the graph (self-adjoint linear node).
ad::Tensor apply_PH_node(const SpectralOperator& op, const ad::Tensor& x);

}  // namespace pgsure
