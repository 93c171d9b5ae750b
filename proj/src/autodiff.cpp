#include "pgsure/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pgsure::ad {

namespace {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor make_node(Shape shape, ArrayXd values) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  if (values.size() != shape.size()) throw std::invalid_argument("tensor value size mismatch");
  n->value = std::move(values);
  return n;
}

Tensor unary(const Tensor& x, Shape out_shape, ArrayXd value,
             std::function<void(Node&)> back) {
  auto n = make_node(out_shape, std::move(value));
  n->parents = {x};
  n->requires_grad = x->requires_grad;
  if (n->requires_grad) n->backward_fn = std::move(back);
  return n;
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

Tensor constant(Shape shape, ArrayXd values) { return make_node(shape, std::move(values)); }

Tensor constant_scalar(double v) {
  ArrayXd a(1);
  a(0) = v;
  return make_node({1, 1, 1}, std::move(a));
}

Tensor parameter(Shape shape, ArrayXd values) {
  auto n = make_node(shape, std::move(values));
  n->requires_grad = true;
  return n;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!(a->shape == b->shape)) throw std::invalid_argument("add: shape mismatch");
  auto n = make_node(a->shape, a->value + b->value);
  n->parents = {a, b};
  n->requires_grad = a->requires_grad || b->requires_grad;
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      for (auto& p : self.parents)
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += self.grad;
        }
    };
  return n;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!(a->shape == b->shape)) throw std::invalid_argument("sub: shape mismatch");
  auto n = make_node(a->shape, a->value - b->value);
  n->parents = {a, b};
  n->requires_grad = a->requires_grad || b->requires_grad;
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      if (self.parents[0]->requires_grad) {
        self.parents[0]->ensure_grad();
        self.parents[0]->grad += self.grad;
      }
      if (self.parents[1]->requires_grad) {
        self.parents[1]->ensure_grad();
        self.parents[1]->grad -= self.grad;
      }
    };
  return n;
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, a->shape, a->value * s, [s](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad += s * self.grad;
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int kernel, int stride) {
  const int ic = x->shape.c, h = x->shape.h, w = x->shape.w;
  const int oc = weight->shape.c;
  const int k = kernel, r = k / 2;
  if (weight->shape.h != ic * k * k || weight->shape.w != 1)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  if (bias->shape.c != oc || bias->shape.h != 1 || bias->shape.w != 1)
    throw std::invalid_argument("conv2d: bias shape mismatch");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  if (h % stride != 0 || w % stride != 0)
    throw std::invalid_argument("conv2d: spatial shape not divisible by stride");

  const int ho = h / stride, wo = w / stride;
  const int n = ho * wo;
  const int kk = ic * k * k;

  // im2col with circular indexing.
  Eigen::MatrixXd patches(kk, n);
  for (int yo = 0; yo < ho; ++yo)
    for (int xo = 0; xo < wo; ++xo) {
      const int col = yo * wo + xo;
      int row = 0;
      for (int c = 0; c < ic; ++c)
        for (int dy = -r; dy <= r; ++dy) {
          const int yi = wrap(yo * stride + dy, h);
          for (int dx = -r; dx <= r; ++dx, ++row) {
            const int xi = wrap(xo * stride + dx, w);
            patches(row, col) = x->value[(c * h + yi) * w + xi];
          }
        }
    }

  Eigen::Map<const MatRM> wm(weight->value.data(), oc, kk);
  MatRM y = wm * patches;
  for (int o = 0; o < oc; ++o) y.row(o).array() += bias->value[o];

  ArrayXd out(oc * n);
  Eigen::Map<MatRM>(out.data(), oc, n) = y;

  auto node = make_node({oc, ho, wo}, std::move(out));
  node->parents = {x, weight, bias};
  node->requires_grad = x->requires_grad || weight->requires_grad || bias->requires_grad;
  if (!node->requires_grad) return node;

  node->backward_fn = [patches = std::move(patches), kernel, stride](Node& self) {
    auto& xp = self.parents[0];
    auto& wp = self.parents[1];
    auto& bp = self.parents[2];
    const int ic = xp->shape.c, h = xp->shape.h, w = xp->shape.w;
    const int oc = self.shape.c, ho = self.shape.h, wo = self.shape.w;
    const int k = kernel, r = k / 2;
    const int n = ho * wo, kk = ic * k * k;
    Eigen::Map<const MatRM> g(self.grad.data(), oc, n);

    if (wp->requires_grad) {
      wp->ensure_grad();
      Eigen::Map<MatRM> dw(wp->grad.data(), oc, kk);
      dw.noalias() += g * patches.transpose();
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (int o = 0; o < oc; ++o) bp->grad[o] += g.row(o).sum();
    }
    if (xp->requires_grad) {
      xp->ensure_grad();
      Eigen::Map<const MatRM> wm(wp->value.data(), oc, kk);
      Eigen::MatrixXd dp = wm.transpose() * g;  // kk x n
      for (int yo = 0; yo < ho; ++yo)
        for (int xo = 0; xo < wo; ++xo) {
          const int col = yo * wo + xo;
          int row = 0;
          for (int c = 0; c < ic; ++c)
            for (int dy = -r; dy <= r; ++dy) {
              const int yi = wrap(yo * stride + dy, h);
              for (int dx = -r; dx <= r; ++dx, ++row) {
                const int xi = wrap(xo * stride + dx, w);
                xp->grad[(c * h + yi) * w + xi] += dp(row, col);
              }
            }
        }
    }
  };
  return node;
}

Tensor upsample_nearest2(const Tensor& x) {
  const int c = x->shape.c, h = x->shape.h, w = x->shape.w;
  ArrayXd out(c * 4 * h * w);
  const int ho = 2 * h, wo = 2 * w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        out[(ch * ho + y) * wo + xx] = x->value[(ch * h + y / 2) * w + xx / 2];

  return unary(x, {c, ho, wo}, std::move(out), [](Node& self) {
    auto& p = self.parents[0];
    const int c = p->shape.c, h = p->shape.h, w = p->shape.w;
    const int ho = 2 * h, wo = 2 * w;
    p->ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx)
          p->grad[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * ho + y) * wo + xx];
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  ArrayXd out = (x->value > 0.0).select(x->value, slope * x->value);
  return unary(x, x->shape, std::move(out), [slope](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad += (p->value > 0.0).select(self.grad, slope * self.grad);
  });
}

Tensor sigmoid_scaled(const Tensor& x, double scale) {
  ArrayXd out = scale / (1.0 + (-x->value).exp());
  return unary(x, x->shape, std::move(out), [scale](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const ArrayXd s = self.value / scale;
    p->grad += self.grad * scale * s * (1.0 - s);
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a->shape.h != b->shape.h || a->shape.w != b->shape.w)
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  const int na = a->value.size(), nb = b->value.size();
  ArrayXd out(na + nb);
  out.head(na) = a->value;
  out.tail(nb) = b->value;
  auto n = make_node({a->shape.c + b->shape.c, a->shape.h, a->shape.w}, std::move(out));
  n->parents = {a, b};
  n->requires_grad = a->requires_grad || b->requires_grad;
  if (n->requires_grad)
    n->backward_fn = [na, nb](Node& self) {
      if (self.parents[0]->requires_grad) {
        self.parents[0]->ensure_grad();
        self.parents[0]->grad += self.grad.head(na);
      }
      if (self.parents[1]->requires_grad) {
        self.parents[1]->ensure_grad();
        self.parents[1]->grad += self.grad.tail(nb);
      }
    };
  return n;
}

Tensor sum_squares(const Tensor& x) {
  ArrayXd v(1);
  v(0) = x->value.square().sum();
  return unary(x, {1, 1, 1}, std::move(v), [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad += 2.0 * self.grad(0) * p->value;
  });
}

Tensor dot(const Tensor& x, ArrayXd with) {
  if (with.size() != x->value.size()) throw std::invalid_argument("dot: size mismatch");
  ArrayXd v(1);
  v(0) = (x->value * with).sum();
  return unary(x, {1, 1, 1}, std::move(v), [with = std::move(with)](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad += self.grad(0) * with;
  });
}

Tensor linear_image_op(const Tensor& x, Shape out_shape, PlaneFn forward, PlaneFn adjoint) {
  if (out_shape.c != x->shape.c) throw std::invalid_argument("linear_image_op: channel mismatch");
  const int h = x->shape.h, w = x->shape.w;
  const int oh = out_shape.h, ow = out_shape.w;
  ArrayXd out(out_shape.size());
  for (int c = 0; c < x->shape.c; ++c) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        plane(x->value.data() + static_cast<std::ptrdiff_t>(c) * h * w, h, w);
    ArrayXXd res = forward(plane.array());
    Eigen::Map<MatRM>(out.data() + static_cast<std::ptrdiff_t>(c) * oh * ow, oh, ow) =
        res.matrix();
  }
  return unary(x, out_shape, std::move(out), [adjoint = std::move(adjoint)](Node& self) {
    auto& p = self.parents[0];
    const int h = p->shape.h, w = p->shape.w;
    const int oh = self.shape.h, ow = self.shape.w;
    p->ensure_grad();
    for (int c = 0; c < p->shape.c; ++c) {
      Eigen::Map<const MatRM> gplane(
          self.grad.data() + static_cast<std::ptrdiff_t>(c) * oh * ow, oh, ow);
      ArrayXXd back = adjoint(gplane.array());
      Eigen::Map<MatRM> dst(p->grad.data() + static_cast<std::ptrdiff_t>(c) * h * w, h, w);
      dst += back.matrix();
    }
  });
}

void backward(const Tensor& loss) {
  if (loss->shape.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");

  // Iterative post-order DFS; reverse gives a valid backprop order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    n->grad = Eigen::ArrayXd::Zero(n->value.size());
  }
  loss->grad(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace pgsure::ad
