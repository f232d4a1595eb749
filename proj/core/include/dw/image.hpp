#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dw/tensor.hpp"

namespace dw {

/// H x W x 3 raster, stored planar (channel-major). Canonical range [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : height_(height), width_(width), data_(static_cast<std::size_t>(kChannels) * height * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  double at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

  std::vector<double>& pixels() { return data_; }
  const std::vector<double>& pixels() const { return data_; }

  bool same_shape(const Image& o) const { return height_ == o.height_ && width_ == o.width_; }
  bool operator==(const Image& o) const = default;

  void clip01();

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Mean absolute difference over all samples.
double mean_abs_diff(const Image& a, const Image& b);

/// Stacks images into an NCHW tensor, mapping [0,1] -> [-1,1] when `to_signed`.
Tensor to_batch(std::span<const Image> images, bool to_signed = true);
Tensor to_batch(const Image& image, bool to_signed = true);
/// Extracts sample `n` of an NCHW tensor with 3 channels; maps [-1,1] -> [0,1] when `from_signed`.
Image from_batch(const Tensor& batch, int n, bool from_signed = true);

/// 8-bit RGB PNG. Values are clipped to [0,1] and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Rounds every sample to the nearest 8-bit level (the on-disk representation).
Image quantize8(const Image& img);

}  // namespace dw
