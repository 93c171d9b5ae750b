#pragma once

#include <Eigen/Core>

#include "pgsure/image.hpp"

namespace pgsure {

/// Frequency-domain realization of the degradation operator H (circular
/// convolution with a unit-sum kernel, then decimation by `alpha`), its
/// adjoint, pseudo-inverse and range projection P_H = H^+ H.
///
/// Spectral components whose singular values fall at or below the
/// threshold `xi` are treated as exactly zero when inverting. For
/// alpha = 1 the singular values are |h_f|; for alpha > 1 the threshold
/// is applied to the folded eigenvalues of H H^T on the low-res grid.
///
/// Channels are handled independently with the same operator. Immutable
/// after construction; all apply_* methods are const and reentrant.
class SpectralOperator {
public:
  SpectralOperator(const Eigen::MatrixXd& kernel, int hr_rows, int hr_cols,
                   int alpha, double xi);

  int hr_rows() const { return n1_; }
  int hr_cols() const { return n2_; }
  int lr_rows() const { return n1_ / alpha_; }
  int lr_cols() const { return n2_ / alpha_; }
  int alpha() const { return alpha_; }
  double xi() const { return xi_; }

  // Single-plane operations (planes are rows x cols arrays).
  Eigen::ArrayXXd apply_H(const Eigen::ArrayXXd& x) const;
  Eigen::ArrayXXd apply_Ht(const Eigen::ArrayXXd& y) const;
  Eigen::ArrayXXd apply_pinv(const Eigen::ArrayXXd& y) const;
  Eigen::ArrayXXd apply_PH(const Eigen::ArrayXXd& x) const;
  // (H^+)^T = (H H^T)^+ H, mapping the hr grid to the lr grid.
  Eigen::ArrayXXd apply_pinv_adjoint(const Eigen::ArrayXXd& x) const;

  // Whole-image wrappers.
  Image apply_H(const Image& x) const;
  Image apply_Ht(const Image& y) const;
  Image apply_pinv(const Image& y) const;
  Image apply_PH(const Image& x) const;

  /// u = H^T y / sigma^2, the network input carrying all information
  /// about x under the Gaussian model.
  Image sufficient_statistic(const Image& y, double sigma) const;

  /// x_ML = H^+ y. Alias of apply_pinv; also seeds ADMM (z_0 = x_ML).
  Image ml_estimate(const Image& y) const { return apply_pinv(y); }

  /// DFT of the zero-padded, center-shifted kernel on the hr grid.
  const Eigen::ArrayXXcd& freq_response() const { return freq_; }
  /// Eigenvalues of H H^T on the lr grid.
  const Eigen::ArrayXXd& gram_eigenvalues() const { return gram_; }
  /// Thresholded inverse of gram_eigenvalues(); exactly zero where the
  /// singular value is at or below xi.
  const Eigen::ArrayXXd& gram_pinv() const { return gram_pinv_; }

private:
  Image map_planes(const Image& in, int out_rows, int out_cols,
                   Eigen::ArrayXXd (SpectralOperator::*op)(const Eigen::ArrayXXd&) const) const;

  int n1_, n2_, alpha_;
  double xi_;
  Eigen::ArrayXXcd freq_;      // hr grid
  Eigen::ArrayXXd gram_;       // lr grid
  Eigen::ArrayXXd gram_pinv_;  // lr grid
};

}  // namespace pgsure
