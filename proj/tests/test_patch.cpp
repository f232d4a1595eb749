#include <gtest/gtest.h>

#include <cmath>

#include "dw/patch.hpp"
#include "oracles.hpp"

namespace dw {
namespace {

using testing::random_tensor;

TEST(Unfold, CountsWindows) {
  RandomStream rng(1);
  EXPECT_EQ(patch::unfold(random_tensor({1, 4, 4}, rng), 2, 2).count(), 4);
  const auto p = patch::unfold(random_tensor({3, 6, 6}, rng), 3, 3);
  EXPECT_EQ(p.count(), 4);
  EXPECT_EQ(p.dim(), 27);
  EXPECT_EQ(patch::unfold(random_tensor({1, 4, 4}, rng), 2, 1).count(), 9);
}

TEST(Unfold, RowCountMatchesClosedForm) {
  RandomStream rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.range(2, 9), w = rng.range(2, 9), s = rng.range(1, std::min(h, w)), stride = rng.range(1, 3);
    const auto p = patch::unfold(random_tensor({2, h, w}, rng), s, stride);
    EXPECT_EQ(p.count(), ((h - s) / stride + 1) * ((w - s) / stride + 1));
  }
}

TEST(Unfold, QuadrantsInRasterOrder) {
  Tensor f({1, 4, 4});
  for (int i = 0; i < 16; ++i) f[i] = i;
  const auto p = patch::unfold(f, 2, 2);
  const std::vector<std::vector<double>> want{{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
  for (int r = 0; r < 4; ++r) {
    const auto row = p.row(r);
    EXPECT_EQ(std::vector<double>(row.begin(), row.end()), want[r]);
  }
}

TEST(Unfold, RejectsOversizedWindow) {
  RandomStream rng(3);
  try {
    patch::unfold(random_tensor({1, 3, 5}, rng), 4, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidGeometry);
  }
}

TEST(Fold, InvertsUnfoldBitExactly) {
  RandomStream rng(4);
  for (const auto& [c, h, w, s] : std::vector<std::array<int, 4>>{{1, 4, 4, 2}, {3, 6, 6, 3}, {5, 8, 6, 2}, {2, 9, 3, 3}}) {
    const Tensor f = random_tensor({c, h, w}, rng);
    const Tensor back = patch::fold(patch::unfold(f, s, s));
    EXPECT_EQ(back.vec(), f.vec());
  }
}

TEST(Fold, SwappedRowsDoNotRoundTrip) {
  RandomStream rng(5);
  const Tensor f = random_tensor({1, 4, 4}, rng);
  auto p = patch::unfold(f, 2, 2);
  for (int j = 0; j < p.dim(); ++j) std::swap(p.patches[j], p.patches[p.dim() + j]);
  EXPECT_NE(patch::fold(p).vec(), f.vec());
}

TEST(Fold, RejectsOverlappingStride) {
  RandomStream rng(6);
  try {
    patch::fold(patch::unfold(random_tensor({1, 4, 4}, rng), 2, 1));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedGeometry);
  }
}

TEST(Fold, BatchedFormMatchesPerSample) {
  RandomStream rng(7);
  const Tensor maps = random_tensor({2, 3, 4, 6}, rng);
  const auto rows = patch::unfold_nonoverlap(ag::constant(maps), 2);
  ASSERT_EQ(rows.shape(), (Shape{12, 12}));
  for (int b = 0; b < 2; ++b) {
    Tensor one({3, 4, 6});
    std::copy(maps.data() + b * 72, maps.data() + (b + 1) * 72, one.data());
    const auto p = patch::unfold(one, 2, 2);
    for (std::size_t i = 0; i < p.patches.size(); ++i) EXPECT_EQ(rows.value()[b * 72 + i], p.patches[i]);
  }
  EXPECT_EQ(patch::fold_nonoverlap(rows, maps.shape(), 2).value().vec(), maps.vec());
}

TEST(Cosine, HandValues) {
  const std::vector<double> v{0.3, -1.2, 2.0};
  const std::vector<double> neg{-0.3, 1.2, -2.0};
  EXPECT_NEAR(patch::cosine_sim(v, v), 1.0, 1e-12);
  EXPECT_NEAR(patch::cosine_sim(v, neg), -1.0, 1e-12);
  EXPECT_NEAR(patch::cosine_sim(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Cosine, ScaleInvariantAndSymmetric) {
  RandomStream rng(8);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    const double alpha = rng.uniform(0.1, 10), beta = rng.uniform(0.1, 10);
    auto as = a, bs = b;
    for (auto& x : as) x *= alpha;
    for (auto& x : bs) x *= beta;
    EXPECT_NEAR(patch::cosine_sim(as, bs), patch::cosine_sim(a, b), 1e-6);
    EXPECT_EQ(patch::cosine_sim(a, b), patch::cosine_sim(b, a));
  }
}

TEST(Cosine, ZeroVectorIsDegenerate) {
  const auto c = patch::cosine(std::vector<double>{0, 0}, std::vector<double>{1, 2});
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.value, 0.0);
}

TEST(SwFeatures, DeterministicAndSensitive) {
  patch::RandomConvExtractor ex(11);
  Image img(32, 32, 0.4);
  img.at(1, 5, 7) = 0.9;
  const Tensor a = patch::sw_features(img, ex), b = patch::sw_features(img, ex);
  EXPECT_EQ(a.vec(), b.vec());
  EXPECT_EQ(a.shape(), (Shape{ex.channels(), 32 / ex.downscale(), 32 / ex.downscale()}));
  Image other = img;
  other.at(0, 3, 3) = 0.0;
  EXPECT_NE(patch::sw_features(other, ex).vec(), a.vec());
}

TEST(ProjectionMatrix, UnitRows) {
  const auto p = patch::ProjectionMatrix::random(32, 16, 99);
  ASSERT_EQ(p.m.shape(), (Shape{32, 16}));
  for (int r = 0; r < 32; ++r) {
    double n = 0;
    for (int c = 0; c < 16; ++c) n += p.m[r * 16 + c] * p.m[r * 16 + c];
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
  EXPECT_EQ(patch::ProjectionMatrix::random(32, 16, 99).m.vec(), p.m.vec());
}

}  // namespace
}  // namespace dw
