#pragma once

#include <Eigen/Core>
#include <string>

namespace pgsure {

enum class KernelKind { Lorentzian, Uniform, SeparableBinomial, Gaussian, Bicubic };

/// Description of a blur / anti-aliasing kernel. `support` is the number
/// of taps per axis and must be odd so the kernel has a center tap.
struct KernelSpec {
  KernelKind kind = KernelKind::Gaussian;
  int support = 0;
  double std = 0.0;  // Gaussian only
  int scale = 0;     // Bicubic only: decimation factor the filter is dilated by

  static KernelSpec lorentzian(int support = 15);
  static KernelSpec uniform(int support = 9);
  static KernelSpec separable_binomial();
  static KernelSpec gaussian(double std, int support = 0);  // 0 = pick from std
  static KernelSpec bicubic(int scale);
};

/// Realizes a spec as a centered, unit-sum support x support kernel.
Eigen::MatrixXd build_kernel(const KernelSpec& spec);

std::string kernel_kind_name(KernelKind kind);
KernelKind kernel_kind_from_name(const std::string& name);

}  // namespace pgsure
