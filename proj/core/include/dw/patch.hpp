#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "dw/autograd.hpp"
#include "dw/image.hpp"

/// Sliding-window patch extraction and reassembly, cosine similarity, and the
/// frozen feature extractor used by the sliced Wasserstein loss.
namespace dw::patch {

/// Patches of one C x H x W feature map. Each row flattens a window channel-major,
/// then by row, then by column (the `Tensor` NCHW order restricted to the window).
struct PatchSet {
  Tensor patches;  // [N, C*s*s]
  int grid_rows = 0;
  int grid_cols = 0;
  int size = 0;
  int stride = 0;
  Shape source_shape;  // {C, H, W}

  int count() const { return grid_rows * grid_cols; }
  int dim() const { return patches.dim(1); }
  std::span<const double> row(int i) const { return {patches.data() + static_cast<std::size_t>(i) * dim(), static_cast<std::size_t>(dim())}; }
  /// Top-left corner of window i in the source map.
  std::pair<int, int> origin(int i) const { return {(i / grid_cols) * stride, (i % grid_cols) * stride}; }
};

/// Window count along one axis.
inline int window_count(int extent, int size, int stride) { return (extent - size) / stride + 1; }

/// `feature` is C x H x W (or 1 x C x H x W).
PatchSet unfold(const Tensor& feature, int size, int stride);
/// Exact inverse of `unfold` for stride == size.
Tensor fold(const PatchSet& patches);

/// Copies the window at `origin` of a C x H x W map into `out` (length C*s*s).
void extract_window(const Tensor& feature, int y0, int x0, int size, std::span<double> out);

struct Cosine {
  double value = 0.0;
  bool degenerate = false;  // one argument had zero norm; value is 0
};
Cosine cosine(std::span<const double> a, std::span<const double> b);
inline double cosine_sim(std::span<const double> a, std::span<const double> b) { return cosine(a, b).value; }

// Differentiable counterparts on batched maps (stride == size).

/// [B, C, H, W] -> [B*N, C*s*s], rows in raster order per sample.
ag::Var unfold_nonoverlap(const ag::Var& maps, int size);
/// [B*N, C*s*s] -> [B, C, H, W].
ag::Var fold_nonoverlap(const ag::Var& rows, const Shape& map_shape, int size);

/// Frozen convolutional feature extractor: an image batch in [-1,1] to features.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual ag::Var extract(const ag::Var& images) const = 0;
  virtual int channels() const = 0;
  /// Spatial downscale factor of the output relative to the input.
  virtual int downscale() const = 0;
};

/// Stand-in for pretrained VGG features: `depth` fixed random 3x3 stride-2
/// convolutions, each followed by LeakyReLU(0.2). Weights are He-initialised
/// from `seed` and never updated.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed, int depth = 3, int width = 16);
  ag::Var extract(const ag::Var& images) const override;
  int channels() const override { return channels_; }
  int downscale() const override { return 1 << static_cast<int>(weights_.size()); }

 private:
  std::vector<ag::Var> weights_;
  std::vector<ag::Var> biases_;
  int channels_;
};

/// C x H x W features of a single [0,1] image.
Tensor sw_features(const Image& img, const FeatureExtractor& extractor);

/// C' x C matrix with unit-norm rows drawn from an isotropic Gaussian.
struct ProjectionMatrix {
  Tensor m;  // [C', C]
  std::uint64_t seed = 0;
  static ProjectionMatrix random(int projections, int channels, std::uint64_t seed);
};

}  // namespace dw::patch
