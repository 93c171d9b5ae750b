#include "pgsure/losses.hpp"

#include <stdexcept>

#include "pgsure/network.hpp"

namespace pgsure {

using ad::Tensor;

GsureProbe GsureProbe::draw(ad::Shape shape, double epsilon, Rng& rng) {
  if (epsilon <= 0.0) throw std::invalid_argument("probe epsilon must be > 0");
  GsureProbe probe;
  probe.epsilon = epsilon;
  probe.g = Eigen::ArrayXd(shape.size());
  for (int i = 0; i < shape.size(); ++i) probe.g(i) = rng.normal();
  return probe;
}

namespace {

void check_hr_shape(const SpectralOperator& op, const ad::Tensor& x) {
  if (x->shape.h != op.hr_rows() || x->shape.w != op.hr_cols())
    throw std::invalid_argument("loss: estimate does not match the operator's hr grid");
}

void check_lr_shape(const SpectralOperator& op, const Image& y, int channels) {
  if (y.height != op.lr_rows() || y.width != op.lr_cols() || y.channels() != channels)
    throw std::invalid_argument("loss: observation does not match the operator's lr grid");
}

}  // namespace

ad::Tensor apply_PH_node(const SpectralOperator& op, const Tensor& x) {
  check_hr_shape(op, x);
  auto ph = [&op](const Eigen::ArrayXXd& p) { return op.apply_PH(p); };
  return ad::linear_image_op(x, x->shape, ph, ph);  // P_H is self-adjoint
}

ad::Tensor ls_loss(const SpectralOperator& op, const Tensor& x_tilde, const Image& y) {
  check_hr_shape(op, x_tilde);
  check_lr_shape(op, y, x_tilde->shape.c);
  Tensor hx = ad::linear_image_op(
      x_tilde, {x_tilde->shape.c, op.lr_rows(), op.lr_cols()},
      [&op](const Eigen::ArrayXXd& p) { return op.apply_H(p); },
      [&op](const Eigen::ArrayXXd& p) { return op.apply_Ht(p); });
  return ad::sum_squares(ad::sub(hx, image_to_tensor(y)));
}

ad::Tensor bp_loss(const SpectralOperator& op, const Tensor& x_tilde, const Image& y) {
  check_hr_shape(op, x_tilde);
  check_lr_shape(op, y, x_tilde->shape.c);
  Tensor residual = ad::sub(image_to_tensor(op.ml_estimate(y)), apply_PH_node(op, x_tilde));
  return ad::sum_squares(residual);
}

ad::Tensor gsure_loss(const SpectralOperator& op, const Tensor& f_u,
                      const Tensor& f_u_perturbed, const Image& y, const GsureProbe& probe) {
  check_hr_shape(op, f_u);
  check_hr_shape(op, f_u_perturbed);
  check_lr_shape(op, y, f_u->shape.c);
  if (!(f_u->shape == f_u_perturbed->shape))
    throw std::invalid_argument("gsure_loss: forward-pass shapes differ");
  if (probe.g.size() != f_u->value.size())
    throw std::invalid_argument("gsure_loss: probe size does not match the estimate");

  Tensor ph_f = apply_PH_node(op, f_u);
  Tensor energy = ad::sum_squares(ph_f);

  Eigen::ArrayXd pinv_y = image_to_flat(op.ml_estimate(y));
  Tensor data = ad::scale(ad::dot(f_u, std::move(pinv_y)), -2.0);

  // g^T P_H (f_pert - f) = (P_H g)^T (f_pert - f): project the probe once.
  Image g_img = flat_to_image(probe.g, f_u->shape.c, f_u->shape.h, f_u->shape.w);
  Eigen::ArrayXd ph_g = image_to_flat(op.apply_PH(g_img));
  Tensor divergence =
      ad::scale(ad::dot(ad::sub(f_u_perturbed, f_u), std::move(ph_g)), 2.0 / probe.epsilon);

  return ad::add(ad::add(energy, data), divergence);
}

double projected_mse(const SpectralOperator& op, const Image& x_hat, const Image& x_true) {
  if (!x_hat.same_shape(x_true)) throw std::invalid_argument("projected_mse: shape mismatch");
  Image a = op.apply_PH(x_hat);
  Image b = op.apply_PH(x_true);
  double sq = 0.0;
  for (int c = 0; c < a.channels(); ++c) sq += (a.planes[c] - b.planes[c]).square().sum();
  return sq;
}

}  // namespace pgsure
