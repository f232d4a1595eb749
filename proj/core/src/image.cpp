#include "dw/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace dw {

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void Image::clip01() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

double mean_abs_diff(const Image& a, const Image& b) {
  DW_REQUIRE(a.same_shape(b), ErrorCode::kInvalidInput, "mean_abs_diff: image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) acc += std::abs(a.pixels()[i] - b.pixels()[i]);
  return acc / static_cast<double>(a.pixels().size());
}

Tensor to_batch(std::span<const Image> images, bool to_signed) {
  DW_REQUIRE(!images.empty(), ErrorCode::kInvalidInput, "to_batch: empty image list");
  const int h = images[0].height(), w = images[0].width();
  Tensor out({static_cast<int>(images.size()), Image::kChannels, h, w});
  std::size_t off = 0;
  for (const auto& img : images) {
    DW_REQUIRE(img.height() == h && img.width() == w, ErrorCode::kInvalidInput, "to_batch: image shapes differ");
    for (double v : img.pixels()) out[off++] = to_signed ? 2.0 * v - 1.0 : v;
  }
  return out;
}

Tensor to_batch(const Image& image, bool to_signed) { return to_batch(std::span<const Image>(&image, 1), to_signed); }

Image from_batch(const Tensor& batch, int n, bool from_signed) {
  DW_REQUIRE(batch.rank() == 4 && batch.dim(1) == Image::kChannels, ErrorCode::kInvalidInput,
             "from_batch: expected N x 3 x H x W, got " + shape_str(batch.shape()));
  Image img(batch.dim(2), batch.dim(3));
  const std::size_t plane = img.pixels().size();
  const double* src = batch.data() + static_cast<std::size_t>(n) * plane;
  for (std::size_t i = 0; i < plane; ++i) img.pixels()[i] = from_signed ? 0.5 * (src[i] + 1.0) : src[i];
  return img;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.pixels()) v = to_u8(v) / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  DW_REQUIRE(fp, ErrorCode::kIoFailure, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure, "png encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x * 3 + c] = to_u8(img.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  DW_REQUIRE(std::fflush(fp.get()) == 0, ErrorCode::kIoFailure, "write failed: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  DW_REQUIRE(fp, ErrorCode::kIoFailure, "cannot open for reading: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoFailure, "png decode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  Image img(h, w);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[x * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace dw
