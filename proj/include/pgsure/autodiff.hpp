#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

namespace pgsure::ad {

/// Tensor extent: channels x height x width (batch is always 1).
struct Shape {
  int c = 1;
  int h = 1;
  int w = 1;
  int size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

class Node;
using Tensor = std::shared_ptr<Node>;

/// One vertex of the computational graph. Values are stored flat in
/// channel-major, row-major-spatial order: index = (c*h + y)*w + x.
class Node {
public:
  Shape shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<Tensor> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Eigen::ArrayXd::Zero(value.size());
  }
};

Tensor constant(Shape shape, Eigen::ArrayXd values);
Tensor constant_scalar(double v);
/// Leaf with requires_grad set; gradients survive backward() for the optimizer.
Tensor parameter(Shape shape, Eigen::ArrayXd values);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Circular-padding 2-D convolution. Weights have shape
/// {out_ch, in_ch * k * k, 1}; bias {out_ch, 1, 1}. Stride 1 or 2.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int kernel, int stride);

Tensor upsample_nearest2(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
/// scale / (1 + exp(-x)); output strictly inside (0, scale).
Tensor sigmoid_scaled(const Tensor& x, double scale);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor sum_squares(const Tensor& x);               // scalar
Tensor dot(const Tensor& x, Eigen::ArrayXd with);  // scalar, fixed right factor

/// Wraps a linear map applied independently per channel; `adjoint` must be
/// the true adjoint of `forward` for gradients to be exact.
using PlaneFn = std::function<Eigen::ArrayXXd(const Eigen::ArrayXXd&)>;
Tensor linear_image_op(const Tensor& x, Shape out_shape, PlaneFn forward,
                       PlaneFn adjoint);

/// Reverse-mode sweep from a scalar loss. Zeroes the grads of every
/// reachable node first, then accumulates. Throws if loss is not scalar.
void backward(const Tensor& loss);

}  // namespace pgsure::ad
