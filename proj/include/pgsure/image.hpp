#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace pgsure {

/// H x W x C raster in display scale [0, 255], double precision.
/// Values may leave [0, 255] during optimization; clamping happens only
/// when writing to disk.
struct Image {
  int width = 0;
  int height = 0;
  // One height x width plane per channel (1 = gray, 3 = RGB).
  std::vector<Eigen::ArrayXXd> planes;

  Image() = default;
  Image(int height_, int width_, int channels, double fill = 0.0)
      : width(width_), height(height_),
        planes(channels, Eigen::ArrayXXd::Constant(height_, width_, fill)) {}

  int channels() const { return static_cast<int>(planes.size()); }
  std::size_t size() const {
    return static_cast<std::size_t>(width) * height * planes.size();
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels() == o.channels();
  }
};

/// Reads an 8-bit gray or RGB PNG. Other formats raise std::runtime_error.
Image load_image(const std::string& path);

/// Clamps to [0, 255], rounds to nearest integer, writes an 8-bit PNG.
void save_image(const Image& img, const std::string& path);

/// Adds i.i.d. N(0, sigma^2) to every sample. Deterministic given seed.
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

/// 10*log10(255^2 / MSE), MSE averaged over all samples of all channels.
/// Capped at 100 dB when MSE is (numerically) zero.
double psnr(const Image& a, const Image& b);

constexpr double kPsnrCap = 100.0;

}  // namespace pgsure
