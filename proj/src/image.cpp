#include "pgsure/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "pgsure/rng.hpp"

namespace pgsure {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

Image load_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image file: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    fail("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("libpng error while reading " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported bit depth 16 (only 8-bit PNG): " + path);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    color_type = PNG_COLOR_TYPE_RGB;
  }
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY_ALPHA || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
      png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported PNG with alpha channel (only 8-bit gray/RGB): " + path);
  }

  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported channel count " + std::to_string(channels) + ": " + path);
  }

  std::vector<png_byte> raster(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = raster.data() + static_cast<std::size_t>(r) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  for (png_uint_32 r = 0; r < h; ++r)
    for (png_uint_32 c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch)
        img.planes[ch](r, c) =
            static_cast<double>(raster[(static_cast<std::size_t>(r) * w + c) * channels + ch]);
  return img;
}

void save_image(const Image& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3)
    fail("save_image: only 1 or 3 channels supported");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open file for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("libpng error while writing " + path);
  }

  png_init_io(png, fp.get());
  const int color_type = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int channels = img.channels();
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * channels);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        double v = std::round(img.planes[ch](r, c));
        v = std::min(255.0, std::max(0.0, v));
        row[static_cast<std::size_t>(c) * channels + ch] = static_cast<png_byte>(v);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) fail("add_gaussian_noise: sigma must be >= 0");
  Image out = img;
  if (sigma == 0.0) return out;
  Rng rng(seed_stream(seed));
  for (auto& plane : out.planes)
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) plane(r, c) += sigma * rng.normal();
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) fail("psnr: shape mismatch");
  double sq = 0.0;
  for (int ch = 0; ch < a.channels(); ++ch) sq += (a.planes[ch] - b.planes[ch]).square().sum();
  const double mse = sq / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

}  // namespace pgsure
