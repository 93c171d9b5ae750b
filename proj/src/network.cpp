#include "pgsure/network.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "pgsure/rng.hpp"

namespace pgsure {

using ad::Shape;
using ad::Tensor;
using json = nlohmann::json;

ad::Tensor ParamStore::create(const std::string& name, Shape shape, Eigen::ArrayXd init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  auto t = ad::parameter(shape, std::move(init));
  index_[name] = static_cast<int>(params_.size());
  names_.push_back(name);
  params_.push_back(t);
  adam_m_.push_back(Eigen::ArrayXd::Zero(shape.size()));
  adam_v_.push_back(Eigen::ArrayXd::Zero(shape.size()));
  return t;
}

ad::Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params_[it->second];
}

long ParamStore::parameter_count() const {
  long n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  bool any_grad = false;
  for (const auto& p : params_)
    if (p->grad.size() == p->value.size()) any_grad = true;
  if (!any_grad) throw std::logic_error("adam_step called before any backward pass");

  ++step_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.size() != p.value.size()) p.grad = Eigen::ArrayXd::Zero(p.value.size());
    adam_m_[i] = beta1 * adam_m_[i] + (1.0 - beta1) * p.grad;
    adam_v_[i] = beta2 * adam_v_[i] + (1.0 - beta2) * p.grad.square();
    p.value -= lr * (adam_m_[i] / c1) / ((adam_v_[i] / c2).sqrt() + eps);
    p.grad.setZero();
  }
}

void ParamStore::save(const std::string& path) const {
  json header;
  header["step"] = step_;
  header["params"] = json::array();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& s = params_[i]->shape;
    header["params"].push_back({{"name", names_[i]}, {"c", s.c}, {"h", s.h}, {"w", s.w}});
  }
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const std::uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& p : params_)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  json header = json::parse(head);

  if (header["params"].size() != params_.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  step_ = header["step"].get<long>();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& meta = header["params"][i];
    const auto& s = params_[i]->shape;
    if (meta["name"] != names_[i] || meta["c"] != s.c || meta["h"] != s.h || meta["w"] != s.w)
      throw std::runtime_error("checkpoint layout mismatch at " + names_[i]);
    in.read(reinterpret_cast<char*>(params_[i]->value.data()),
            static_cast<std::streamsize>(params_[i]->value.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
}

namespace {

Eigen::ArrayXd fan_in_uniform(int n, int fan_in, Rng& rng) {
  const double a = std::sqrt(1.0 / fan_in);
  Eigen::ArrayXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-a, a);
  return v;
}

void add_conv(ParamStore& store, const std::string& name, int in_ch, int out_ch, int k,
              Rng& rng) {
  const int kk = in_ch * k * k;
  store.create(name + ".w", Shape{out_ch, kk, 1}, fan_in_uniform(out_ch * kk, kk, rng));
  store.create(name + ".b", Shape{out_ch, 1, 1}, Eigen::ArrayXd::Zero(out_ch));
}

}  // namespace

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.depth < 1) throw std::invalid_argument("network depth must be >= 1");
  if (static_cast<int>(cfg_.channels.size()) != cfg_.depth)
    throw std::invalid_argument("channels list must have one entry per scale");
  for (int c : cfg_.channels)
    if (c < 1) throw std::invalid_argument("channel counts must be >= 1");
  if (cfg_.skip_channels < 1 || cfg_.image_channels < 1)
    throw std::invalid_argument("skip/image channel counts must be >= 1");
}

ParamStore Network::init_params(std::uint64_t seed) const {
  Rng rng(seed_stream(seed));
  ParamStore store;
  const auto& ch = cfg_.channels;
  add_conv(store, "enc0", cfg_.image_channels, ch[0], 3, rng);
  for (int i = 1; i < cfg_.depth; ++i)
    add_conv(store, "enc" + std::to_string(i), ch[i - 1], ch[i], 3, rng);
  for (int i = 0; i + 1 < cfg_.depth; ++i)
    add_conv(store, "skip" + std::to_string(i), ch[i], cfg_.skip_channels, 1, rng);
  for (int i = cfg_.depth - 2; i >= 0; --i) {
    add_conv(store, "up" + std::to_string(i), ch[i + 1], ch[i], 3, rng);
    add_conv(store, "fuse" + std::to_string(i), ch[i] + cfg_.skip_channels, ch[i], 3, rng);
  }
  add_conv(store, "head", ch[0], cfg_.image_channels, 1, rng);
  return store;
}

long Network::expected_param_count() const {
  const auto& ch = cfg_.channels;
  auto conv = [](int in, int out, int k) { return static_cast<long>(out) * (in * k * k + 1); };
  long n = conv(cfg_.image_channels, ch[0], 3);
  for (int i = 1; i < cfg_.depth; ++i) n += conv(ch[i - 1], ch[i], 3);
  for (int i = 0; i + 1 < cfg_.depth; ++i) n += conv(ch[i], cfg_.skip_channels, 1);
  for (int i = cfg_.depth - 2; i >= 0; --i) {
    n += conv(ch[i + 1], ch[i], 3);
    n += conv(ch[i] + cfg_.skip_channels, ch[i], 3);
  }
  n += conv(ch[0], cfg_.image_channels, 1);
  return n;
}

ad::Tensor Network::forward(const ParamStore& params, const Tensor& u) const {
  if (u->shape.c != cfg_.image_channels)
    throw std::invalid_argument("forward: input channel count mismatch");
  const int f = cfg_.stride_factor();
  if (u->shape.h % f != 0 || u->shape.w % f != 0)
    throw std::invalid_argument("forward: spatial shape must be divisible by 2^(depth-1)");
  const double slope = cfg_.lrelu_slope;

  auto conv = [&](const Tensor& x, const std::string& name, int k, int stride) {
    return ad::conv2d(x, params.get(name + ".w"), params.get(name + ".b"), k, stride);
  };

  std::vector<Tensor> enc(cfg_.depth);
  enc[0] = ad::leaky_relu(conv(u, "enc0", 3, 1), slope);
  for (int i = 1; i < cfg_.depth; ++i)
    enc[i] = ad::leaky_relu(conv(enc[i - 1], "enc" + std::to_string(i), 3, 2), slope);

  Tensor t = enc[cfg_.depth - 1];
  for (int i = cfg_.depth - 2; i >= 0; --i) {
    t = ad::leaky_relu(conv(ad::upsample_nearest2(t), "up" + std::to_string(i), 3, 1), slope);
    Tensor skip = ad::leaky_relu(conv(enc[i], "skip" + std::to_string(i), 1, 1), slope);
    t = ad::leaky_relu(conv(ad::concat_channels(t, skip), "fuse" + std::to_string(i), 3, 1),
                       slope);
  }
  return ad::sigmoid_scaled(conv(t, "head", 1, 1), 255.0);
}

std::pair<Network, ParamStore> network_init(const NetworkConfig& cfg, std::uint64_t seed) {
  Network net(cfg);
  return {net, net.init_params(seed)};
}

ad::Tensor image_to_tensor(const Image& img) {
  return ad::constant({img.channels(), img.height, img.width}, image_to_flat(img));
}

Eigen::ArrayXd image_to_flat(const Image& img) {
  Eigen::ArrayXd v(static_cast<Eigen::Index>(img.size()));
  Eigen::Index i = 0;
  for (const auto& plane : img.planes)
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) v(i++) = plane(r, c);
  return v;
}

Image flat_to_image(const Eigen::ArrayXd& v, int channels, int height, int width) {
  if (v.size() != static_cast<Eigen::Index>(channels) * height * width)
    throw std::invalid_argument("flat_to_image: size mismatch");
  Image img(height, width, channels);
  Eigen::Index i = 0;
  for (auto& plane : img.planes)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) plane(r, c) = v(i++);
  return img;
}

Image tensor_to_image(const ad::Tensor& t) {
  return flat_to_image(t->value, t->shape.c, t->shape.h, t->shape.w);
}

}  // namespace pgsure
