#include "pgsure/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace pgsure {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Cubic convolution kernel with a = -0.5 (Keys).
double cubic(double t) {
  constexpr double a = -0.5;
  const double x = std::abs(t);
  if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

}  // namespace

KernelSpec KernelSpec::lorentzian(int support) {
  return {KernelKind::Lorentzian, support, 0.0, 0};
}

KernelSpec KernelSpec::uniform(int support) {
  return {KernelKind::Uniform, support, 0.0, 0};
}

KernelSpec KernelSpec::separable_binomial() {
  return {KernelKind::SeparableBinomial, 5, 0.0, 0};
}

KernelSpec KernelSpec::gaussian(double std, int support) {
  if (support == 0) {
    // +-6 std truncation leaves below ~1e-9 of the mass outside.
    support = 2 * static_cast<int>(std::ceil(6.0 * std)) + 1;
    if (support < 5) support = 5;
  }
  return {KernelKind::Gaussian, support, std, 0};
}

KernelSpec KernelSpec::bicubic(int scale) {
  return {KernelKind::Bicubic, 4 * scale + 1, 0.0, scale};
}

Eigen::MatrixXd build_kernel(const KernelSpec& spec) {
  require(spec.support > 0 && spec.support % 2 == 1,
          "kernel support must be a positive odd integer");
  const int n = spec.support;
  const int r = n / 2;
  Eigen::MatrixXd k(n, n);

  switch (spec.kind) {
    case KernelKind::Lorentzian:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double x1 = i - r, x2 = j - r;
          k(i, j) = 1.0 / (1.0 + x1 * x1 + x2 * x2);
        }
      break;
    case KernelKind::Uniform:
      k.setOnes();
      break;
    case KernelKind::SeparableBinomial: {
      require(n == 5, "separable binomial kernel has fixed support 5");
      Eigen::VectorXd b(5);
      b << 1, 4, 6, 4, 1;
      k = b * b.transpose() / 256.0;
      break;
    }
    case KernelKind::Gaussian: {
      require(spec.std > 0.0, "gaussian kernel needs std > 0");
      const double inv2s2 = 1.0 / (2.0 * spec.std * spec.std);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double x1 = i - r, x2 = j - r;
          k(i, j) = std::exp(-(x1 * x1 + x2 * x2) * inv2s2);
        }
      break;
    }
    case KernelKind::Bicubic: {
      require(spec.scale >= 1, "bicubic kernel needs scale >= 1");
      require(n == 4 * spec.scale + 1, "bicubic support must be 4*scale+1");
      const double s = spec.scale;
      Eigen::VectorXd b(n);
      for (int i = 0; i < n; ++i) b(i) = cubic((i - r) / s) / s;
      k = b * b.transpose();
      break;
    }
  }
  return k / k.sum();
}

std::string kernel_kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Lorentzian: return "lorentzian";
    case KernelKind::Uniform: return "uniform";
    case KernelKind::SeparableBinomial: return "separable_binomial";
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Bicubic: return "bicubic";
  }
  return "unknown";
}

KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "lorentzian") return KernelKind::Lorentzian;
  if (name == "uniform") return KernelKind::Uniform;
  if (name == "separable_binomial") return KernelKind::SeparableBinomial;
  if (name == "gaussian") return KernelKind::Gaussian;
  if (name == "bicubic") return KernelKind::Bicubic;
  throw std::invalid_argument("unknown kernel kind: " + name);
}

}  // namespace pgsure
