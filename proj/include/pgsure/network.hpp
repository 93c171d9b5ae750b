#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgsure/autodiff.hpp"
#include "pgsure/image.hpp"

namespace pgsure {

/// Small encoder-decoder with per-scale skip connections. Stride-2
/// convolutions downsample, nearest-neighbor x2 plus convolution
/// upsamples, LeakyReLU activations, and a 1x1 head with a sigmoid
/// scaled to [0, 255]. Convolutions use circular padding to match the
/// operators' boundary convention.
struct NetworkConfig {
  int depth = 3;
  std::vector<int> channels = {16, 32, 64};
  int skip_channels = 4;
  int image_channels = 3;
  double lrelu_slope = 0.1;

  int stride_factor() const { return 1 << (depth - 1); }
};

/// Named parameter tensors with per-parameter Adam state and a shared
/// step counter. Owned by exactly one training run at a time.
class ParamStore {
public:
  ad::Tensor create(const std::string& name, ad::Shape shape, Eigen::ArrayXd init);
  ad::Tensor get(const std::string& name) const;

  const std::vector<ad::Tensor>& params() const { return params_; }
  long parameter_count() const;
  long step() const { return step_; }

  /// Standard Adam with bias correction; zeroes the gradients afterward.
  /// Throws if called before any backward pass populated a gradient.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  /// Flat binary blob of parameter values with a JSON header
  /// (names, shapes, step counter).
  void save(const std::string& path) const;
  void load(const std::string& path);

private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> params_;
  std::vector<Eigen::ArrayXd> adam_m_, adam_v_;
  std::map<std::string, int> index_;
  long step_ = 0;
};

class Network {
public:
  explicit Network(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }

  /// Fan-in-scaled uniform weight init, zero biases; deterministic given seed.
  ParamStore init_params(std::uint64_t seed) const;

  /// Image-shaped output in (0, 255); input spatial shape must be
  /// divisible by 2^(depth-1) and is preserved.
  ad::Tensor forward(const ParamStore& params, const ad::Tensor& u) const;

  /// Analytic parameter count from the layer formulas.
  long expected_param_count() const;

private:
  NetworkConfig cfg_;
};

std::pair<Network, ParamStore> network_init(const NetworkConfig& cfg, std::uint64_t seed);

// Image <-> tensor conversion (channel-major flat layout).
ad::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const ad::Tensor& t);
Eigen::ArrayXd image_to_flat(const Image& img);
Image flat_to_image(const Eigen::ArrayXd& v, int channels, int height, int width);

}  // namespace pgsure
