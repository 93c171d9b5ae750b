#include "pgsure/denoisers.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

namespace pgsure {

namespace {

using Eigen::ArrayXXd;

// Forward differences with Neumann boundary; div below is -grad^T.
void gradient(const ArrayXXd& u, ArrayXXd& gx, ArrayXXd& gy) {
  const int h = static_cast<int>(u.rows()), w = static_cast<int>(u.cols());
  gy.setZero(h, w);
  gx.setZero(h, w);
  gy.topRows(h - 1) = u.bottomRows(h - 1) - u.topRows(h - 1);
  gx.leftCols(w - 1) = u.rightCols(w - 1) - u.leftCols(w - 1);
}

ArrayXXd divergence(const ArrayXXd& px, const ArrayXXd& py) {
  const int h = static_cast<int>(px.rows()), w = static_cast<int>(px.cols());
  ArrayXXd d = ArrayXXd::Zero(h, w);
  d.topRows(h - 1) += py.topRows(h - 1);
  d.bottomRows(h - 1) -= py.topRows(h - 1);
  d.leftCols(w - 1) += px.leftCols(w - 1);
  d.rightCols(w - 1) -= px.leftCols(w - 1);
  return d;
}

ArrayXXd chambolle_plane(const ArrayXXd& f, double lambda, int max_iters, double tol) {
  const int h = static_cast<int>(f.rows()), w = static_cast<int>(f.cols());
  ArrayXXd px = ArrayXXd::Zero(h, w), py = ArrayXXd::Zero(h, w);
  ArrayXXd gx(h, w), gy(h, w);
  const double tau = 0.25;
  for (int it = 0; it < max_iters; ++it) {
    ArrayXXd target = divergence(px, py) - f / lambda;
    gradient(target, gx, gy);
    ArrayXXd denom = 1.0 + tau * (gx.square() + gy.square()).sqrt();
    ArrayXXd npx = (px + tau * gx) / denom;
    ArrayXXd npy = (py + tau * gy) / denom;
    const double change =
        std::max((npx - px).abs().maxCoeff(), (npy - py).abs().maxCoeff());
    px.swap(npx);
    py.swap(npy);
    if (change < tol) break;
  }
  return f - lambda * divergence(px, py);
}

Image run_external(const std::string& cmd_template, const Image& img, double noise_level) {
  namespace fs = std::filesystem;
  std::random_device rd;
  const fs::path dir =
      fs::temp_directory_path() / ("pgsure_denoise_" + std::to_string(rd()));
  fs::create_directories(dir);
  const std::string in_path = (dir / "input.png").string();
  const std::string out_path = (dir / "output.png").string();
  save_image(img, in_path);

  std::string cmd = cmd_template;
  auto replace_all = [&cmd](const std::string& key, const std::string& val) {
    for (std::size_t pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key))
      cmd.replace(pos, key.size(), val);
  };
  replace_all("{in}", in_path);
  replace_all("{out}", out_path);
  replace_all("{sigma}", std::to_string(noise_level));

  std::string transcript;
  std::FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw std::runtime_error("failed to launch denoiser command: " + cmd);
  std::array<char, 512> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) transcript += buf.data();
  const int status = pclose(pipe);

  if (status != 0)
    throw std::runtime_error("denoiser command failed (exit " + std::to_string(status) +
                             "): " + cmd + "\n" + transcript);
  if (!fs::exists(out_path))
    throw std::runtime_error("denoiser command wrote no output: " + cmd + "\n" + transcript);
  Image result = load_image(out_path);
  fs::remove_all(dir);
  if (!result.same_shape(img))
    throw std::runtime_error("denoiser output dimensions differ from input: " + cmd);
  return result;
}

}  // namespace

Image tv_denoise(const Image& img, double lambda, int max_iters, double tolerance) {
  if (max_iters < 1) throw std::invalid_argument("tv_denoise: max_iters must be >= 1");
  if (lambda <= 0.0) return img;
  Image out = img;
  for (auto& plane : out.planes) plane = chambolle_plane(plane, lambda, max_iters, tolerance);
  return out;
}

Image denoise(const DenoiserSpec& spec, const Image& img, double noise_level) {
  if (noise_level < 0.0) throw std::invalid_argument("denoise: noise_level must be >= 0");
  switch (spec.kind) {
    case DenoiserSpec::Kind::Identity:
      return img;
    case DenoiserSpec::Kind::Tv:
      return tv_denoise(img, spec.tv_lambda_scale * noise_level, spec.tv_max_iters,
                        spec.tv_tolerance);
    case DenoiserSpec::Kind::ExternalCommand:
      return run_external(spec.command, img, noise_level);
  }
  throw std::logic_error("unreachable denoiser kind");
}

DenoiserSpec denoiser_from_name(const std::string& name) {
  if (name == "identity") return DenoiserSpec::identity();
  if (name == "tv") return DenoiserSpec::tv();
  if (name.rfind("cmd:", 0) == 0) return DenoiserSpec::external(name.substr(4));
  throw std::invalid_argument("unknown denoiser: " + name +
                              " (expected identity, tv, or cmd:<template>)");
}

}  // namespace pgsure
