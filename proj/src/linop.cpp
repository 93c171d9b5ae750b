#include "pgsure/linop.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace pgsure {

namespace {

using Eigen::ArrayXXcd;
using Eigen::ArrayXXd;

// Non-normalized forward DFT; inverse carries the 1/N factor, so the
// convolution theorem holds with a plain spectral product and a forward
// followed by an inverse transform is the identity to machine precision.
ArrayXXcd fft2(const ArrayXXcd& in, bool inverse) {
  Eigen::FFT<double> fft;
  const Eigen::Index rows = in.rows(), cols = in.cols();
  ArrayXXcd tmp(rows, cols);
  Eigen::VectorXcd line, out;
  for (Eigen::Index r = 0; r < rows; ++r) {
    line = in.row(r).matrix().transpose();
    if (inverse)
      fft.inv(out, line);
    else
      fft.fwd(out, line);
    tmp.row(r) = out.transpose().array();
  }
  ArrayXXcd res(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    line = tmp.col(c).matrix();
    if (inverse)
      fft.inv(out, line);
    else
      fft.fwd(out, line);
    res.col(c) = out.array();
  }
  return res;
}

ArrayXXcd fft2(const ArrayXXd& in) { return fft2(in.cast<std::complex<double>>(), false); }
ArrayXXd ifft2_real(const ArrayXXcd& in) { return fft2(in, true).real(); }

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

SpectralOperator::SpectralOperator(const Eigen::MatrixXd& kernel, int hr_rows,
                                   int hr_cols, int alpha, double xi)
    : n1_(hr_rows), n2_(hr_cols), alpha_(alpha), xi_(xi) {
  if (alpha < 1) throw std::invalid_argument("alpha must be >= 1");
  if (n1_ % alpha != 0 || n2_ % alpha != 0)
    throw std::invalid_argument("hr shape must be divisible by alpha");
  if (kernel.rows() > n1_ || kernel.cols() > n2_)
    throw std::invalid_argument("kernel larger than image grid");
  if (std::abs(kernel.sum() - 1.0) > 1e-8)
    throw std::invalid_argument("kernel must have unit sum");
  if (xi < 0.0) throw std::invalid_argument("xi must be >= 0");

  // Embed the kernel center-shifted to (0,0) so convolution applies no phase.
  ArrayXXd padded = ArrayXXd::Zero(n1_, n2_);
  const int cr = static_cast<int>(kernel.rows()) / 2;
  const int cc = static_cast<int>(kernel.cols()) / 2;
  for (int i = 0; i < kernel.rows(); ++i)
    for (int j = 0; j < kernel.cols(); ++j)
      padded(wrap(i - cr, n1_), wrap(j - cc, n2_)) += kernel(i, j);
  freq_ = fft2(padded);

  if (alpha_ == 1) {
    gram_ = freq_.abs2();
  } else {
    // Fold the kernel autocorrelation onto the lr grid (poly-phase):
    // the eigenvalues of the lr circulant H H^T are the lr DFT of the
    // alpha-decimated spatial autocorrelation.
    ArrayXXd auto_sp = ifft2_real(freq_.abs2().cast<std::complex<double>>());
    const int m1 = lr_rows(), m2 = lr_cols();
    ArrayXXd dec(m1, m2);
    for (int i = 0; i < m1; ++i)
      for (int j = 0; j < m2; ++j) dec(i, j) = auto_sp(i * alpha_, j * alpha_);
    gram_ = fft2(dec).real();
  }

  // Threshold rule: singular values <= xi are treated as exactly zero.
  // For alpha = 1 the singular values are |h_f| = sqrt(gram).
  gram_pinv_ = ArrayXXd::Zero(gram_.rows(), gram_.cols());
  for (Eigen::Index i = 0; i < gram_.size(); ++i) {
    const double sv = alpha_ == 1 ? std::sqrt(std::max(gram_(i), 0.0)) : gram_(i);
    if (sv > xi_) gram_pinv_(i) = 1.0 / gram_(i);
  }
}

Eigen::ArrayXXd SpectralOperator::apply_H(const ArrayXXd& x) const {
  if (x.rows() != n1_ || x.cols() != n2_) throw std::invalid_argument("apply_H: shape mismatch");
  ArrayXXd conv = ifft2_real(fft2(x) * freq_);
  if (alpha_ == 1) return conv;
  const int m1 = lr_rows(), m2 = lr_cols();
  ArrayXXd out(m1, m2);
  for (int i = 0; i < m1; ++i)
    for (int j = 0; j < m2; ++j) out(i, j) = conv(i * alpha_, j * alpha_);
  return out;
}

Eigen::ArrayXXd SpectralOperator::apply_Ht(const ArrayXXd& y) const {
  if (y.rows() != lr_rows() || y.cols() != lr_cols())
    throw std::invalid_argument("apply_Ht: shape mismatch");
  ArrayXXd up = ArrayXXd::Zero(n1_, n2_);
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) up(i * alpha_, j * alpha_) = y(i, j);
  return ifft2_real(fft2(up) * freq_.conjugate());
}

Eigen::ArrayXXd SpectralOperator::apply_pinv(const ArrayXXd& y) const {
  if (y.rows() != lr_rows() || y.cols() != lr_cols())
    throw std::invalid_argument("apply_pinv: shape mismatch");
  ArrayXXcd w = fft2(y) * gram_pinv_;
  if (alpha_ == 1) return ifft2_real(w * freq_.conjugate());
  return apply_Ht(ifft2_real(w));
}

Eigen::ArrayXXd SpectralOperator::apply_PH(const ArrayXXd& x) const {
  return apply_pinv(apply_H(x));
}

Eigen::ArrayXXd SpectralOperator::apply_pinv_adjoint(const ArrayXXd& x) const {
  ArrayXXd z = apply_H(x);
  return ifft2_real(fft2(z).cast<std::complex<double>>() * gram_pinv_);
}

Image SpectralOperator::map_planes(
    const Image& in, int out_rows, int out_cols,
    Eigen::ArrayXXd (SpectralOperator::*op)(const Eigen::ArrayXXd&) const) const {
  Image out(out_rows, out_cols, in.channels());
  for (int c = 0; c < in.channels(); ++c) out.planes[c] = (this->*op)(in.planes[c]);
  return out;
}

Image SpectralOperator::apply_H(const Image& x) const {
  using Fn = Eigen::ArrayXXd (SpectralOperator::*)(const Eigen::ArrayXXd&) const;
  return map_planes(x, lr_rows(), lr_cols(), static_cast<Fn>(&SpectralOperator::apply_H));
}

Image SpectralOperator::apply_Ht(const Image& y) const {
  using Fn = Eigen::ArrayXXd (SpectralOperator::*)(const Eigen::ArrayXXd&) const;
  return map_planes(y, n1_, n2_, static_cast<Fn>(&SpectralOperator::apply_Ht));
}

Image SpectralOperator::apply_pinv(const Image& y) const {
  using Fn = Eigen::ArrayXXd (SpectralOperator::*)(const Eigen::ArrayXXd&) const;
  return map_planes(y, n1_, n2_, static_cast<Fn>(&SpectralOperator::apply_pinv));
}

Image SpectralOperator::apply_PH(const Image& x) const {
  using Fn = Eigen::ArrayXXd (SpectralOperator::*)(const Eigen::ArrayXXd&) const;
  return map_planes(x, n1_, n2_, static_cast<Fn>(&SpectralOperator::apply_PH));
}

Image SpectralOperator::sufficient_statistic(const Image& y, double sigma) const {
  if (sigma <= 0.0)
    throw std::invalid_argument("sufficient_statistic: sigma must be > 0 (GSURE needs the noise level)");
  Image u = apply_Ht(y);
  const double s = 1.0 / (sigma * sigma);
  for (auto& p : u.planes) p *= s;
  return u;
}

}  // namespace pgsure
