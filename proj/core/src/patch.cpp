#include "dw/patch.hpp"

#include <cmath>

#include "dw/random.hpp"

namespace dw::patch {

namespace {

struct Chw {
  int c, h, w;
};

Chw chw_of(const Tensor& f) {
  if (f.rank() == 3) return {f.dim(0), f.dim(1), f.dim(2)};
  DW_REQUIRE(f.rank() == 4 && f.dim(0) == 1, ErrorCode::kInvalidGeometry,
             "expected a C x H x W feature map, got " + shape_str(f.shape()));
  return {f.dim(1), f.dim(2), f.dim(3)};
}

ag::Var he_conv(RandomStream& rng, int out, int in, int k) {
  Tensor w({out, in, k, k});
  const double std = std::sqrt(2.0 / (in * k * k));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
  return ag::constant(std::move(w));
}

}  // namespace

void extract_window(const Tensor& feature, int y0, int x0, int size, std::span<double> out) {
  const Chw g = chw_of(feature);
  std::size_t k = 0;
  for (int c = 0; c < g.c; ++c)
    for (int y = 0; y < size; ++y) {
      const double* src = feature.data() + (static_cast<std::size_t>(c) * g.h + y0 + y) * g.w + x0;
      for (int x = 0; x < size; ++x) out[k++] = src[x];
    }
}

PatchSet unfold(const Tensor& feature, int size, int stride) {
  const Chw g = chw_of(feature);
  DW_REQUIRE(size >= 1 && stride >= 1, ErrorCode::kInvalidGeometry, "unfold: patch size and stride must be >= 1");
  DW_REQUIRE(size <= g.h && size <= g.w, ErrorCode::kInvalidGeometry,
             "unfold: patch size " + std::to_string(size) + " exceeds map " + std::to_string(g.h) + "x" +
                 std::to_string(g.w));
  PatchSet p;
  p.grid_rows = window_count(g.h, size, stride);
  p.grid_cols = window_count(g.w, size, stride);
  p.size = size;
  p.stride = stride;
  p.source_shape = {g.c, g.h, g.w};
  const int d = g.c * size * size;
  p.patches = Tensor({p.count(), d});
  for (int i = 0; i < p.count(); ++i) {
    const auto [y0, x0] = p.origin(i);
    extract_window(feature, y0, x0, size, {p.patches.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)});
  }
  return p;
}

Tensor fold(const PatchSet& p) {
  DW_REQUIRE(p.stride == p.size, ErrorCode::kUnsupportedGeometry, "fold: overlapping windows (stride != size)");
  const int c = p.source_shape[0], h = p.source_shape[1], w = p.source_shape[2];
  DW_REQUIRE(p.grid_rows * p.size == h && p.grid_cols * p.size == w, ErrorCode::kUnsupportedGeometry,
             "fold: windows do not tile the source map");
  Tensor out({c, h, w});
  const int d = c * p.size * p.size;
  for (int i = 0; i < p.count(); ++i) {
    const auto [y0, x0] = p.origin(i);
    const double* src = p.patches.data() + static_cast<std::size_t>(i) * d;
    std::size_t k = 0;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < p.size; ++y)
        for (int x = 0; x < p.size; ++x) out[(static_cast<std::size_t>(ch) * h + y0 + y) * w + x0 + x] = src[k++];
  }
  return out;
}

Cosine cosine(std::span<const double> a, std::span<const double> b) {
  DW_REQUIRE(a.size() == b.size(), ErrorCode::kInvalidInput, "cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0), false};
}

namespace {

// Index map from an NCHW map to non-overlapping patch rows: rows[perm[j]] = map[j].
std::vector<std::size_t> patch_permutation(const Shape& s, int size) {
  const int b = s[0], c = s[1], h = s[2], w = s[3];
  DW_REQUIRE(h % size == 0 && w % size == 0, ErrorCode::kInvalidGeometry,
             "feature map " + shape_str(s) + " not divisible by patch size " + std::to_string(size));
  const int gc = w / size, n = (h / size) * gc, d = c * size * size;
  std::vector<std::size_t> perm(numel(s));
  std::size_t j = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int patch = (y / size) * gc + (x / size);
          const int k = (ch * size + y % size) * size + x % size;
          perm[j++] = (static_cast<std::size_t>(bi) * n + patch) * d + k;
        }
  return perm;
}

}  // namespace

ag::Var unfold_nonoverlap(const ag::Var& maps, int size) {
  DW_REQUIRE(maps.shape().size() == 4, ErrorCode::kInvalidGeometry, "unfold: expected NCHW");
  const Shape& s = maps.shape();
  auto perm = patch_permutation(s, size);
  const int rows = s[0] * (s[2] / size) * (s[3] / size);
  Tensor out({rows, s[1] * size * size});
  for (std::size_t j = 0; j < perm.size(); ++j) out[perm[j]] = maps.value()[j];
  return ag::make_result(std::move(out), {maps}, [perm = std::move(perm)](ag::Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t j = 0; j < perm.size(); ++j) g[j] += self.grad[perm[j]];
  });
}

ag::Var fold_nonoverlap(const ag::Var& rows, const Shape& map_shape, int size) {
  DW_REQUIRE(rows.size() == numel(map_shape), ErrorCode::kInvalidGeometry,
             "fold: " + shape_str(rows.shape()) + " cannot fill " + shape_str(map_shape));
  auto perm = patch_permutation(map_shape, size);
  Tensor out(map_shape);
  for (std::size_t j = 0; j < perm.size(); ++j) out[j] = rows.value()[perm[j]];
  return ag::make_result(std::move(out), {rows}, [perm = std::move(perm)](ag::Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t j = 0; j < perm.size(); ++j) g[perm[j]] += self.grad[j];
  });
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int depth, int width) {
  DW_REQUIRE(depth >= 1 && width >= 1, ErrorCode::kInvalidConfig, "extractor depth and width must be >= 1");
  RandomStream rng(seed);
  int in = Image::kChannels;
  for (int i = 0; i < depth; ++i) {
    const int out = width << std::min(i, 1);
    weights_.push_back(he_conv(rng, out, in, 3));
    Tensor b({out});
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = 0.05 * rng.normal();
    biases_.push_back(ag::constant(std::move(b)));
    in = out;
  }
  channels_ = in;
}

ag::Var RandomConvExtractor::extract(const ag::Var& images) const {
  ag::Var x = images;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = ag::leaky_relu(ag::conv2d(x, weights_[i], &biases_[i], 2, 1), 0.2);
  }
  return x;
}

Tensor sw_features(const Image& img, const FeatureExtractor& extractor) {
  ag::NoGradGuard guard;
  const ag::Var f = extractor.extract(ag::constant(to_batch(img)));
  return f.value().reshaped({f.dim(1), f.dim(2), f.dim(3)});
}

ProjectionMatrix ProjectionMatrix::random(int projections, int channels, std::uint64_t seed) {
  DW_REQUIRE(projections >= 1 && channels >= 1, ErrorCode::kInvalidConfig, "projection dims must be >= 1");
  RandomStream rng(seed);
  ProjectionMatrix p{Tensor({projections, channels}), seed};
  for (int r = 0; r < projections; ++r) {
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double v = rng.normal();
        p.m[r * channels + c] = v;
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < channels; ++c) p.m[r * channels + c] /= norm;
  }
  return p;
}

}  // namespace dw::patch
