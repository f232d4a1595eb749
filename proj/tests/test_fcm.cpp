#include <gtest/gtest.h>

#include "dw/fcm.hpp"
#include "oracles.hpp"

namespace dw {
namespace {

using testing::random_tensor;

fcm::MatchConfig config(int s, int p, int k, int n) {
  fcm::MatchConfig c;
  c.patch_size = s;
  c.padding = p;
  c.top_k = k;
  c.radius = n;
  return c;
}

std::vector<Tensor> random_frames(int count, int c, int h, int w, RandomStream& rng) {
  std::vector<Tensor> f;
  for (int i = 0; i < count; ++i) f.push_back(random_tensor({c, h, w}, rng));
  return f;
}

TEST(CandidatePatches, CountsAndClamping) {
  RandomStream rng(1);
  const Tensor f = random_tensor({2, 12, 12}, rng);
  EXPECT_EQ(fcm::candidate_patches(f, {4, 4}, config(2, 0, 1, 1)).count(), 1);
  EXPECT_EQ(fcm::candidate_patches(f, {4, 4}, config(2, 3, 1, 1)).count(), 49);
  EXPECT_EQ(fcm::candidate_patches(f, {0, 0}, config(2, 1, 1, 1)).count(), 4);
  const auto p0 = fcm::candidate_patches(f, {4, 6}, config(2, 0, 1, 1));
  EXPECT_EQ(p0.refs[0], (fcm::PatchRef{0, 4, 6}));
}

TEST(CandidatePatches, PoolOfTwoFramesAtPaddingThree) {
  RandomStream rng(2);
  // Interior query of a 3-frame window: 49 candidates from each adjacent frame.
  const auto frames = random_frames(3, 1, 16, 16, rng);
  int total = 0;
  for (int f : {0, 2}) total += fcm::candidate_patches(frames[f], {6, 6}, config(2, 3, 3, 1), f).count();
  EXPECT_EQ(total, 98);
}

TEST(TopKMatch, ExactCopyWins) {
  RandomStream rng(3);
  fcm::CandidateSet c;
  c.patches = random_tensor({5, 4}, rng);
  c.refs.resize(5);
  std::vector<double> q(c.patches.data() + 8, c.patches.data() + 12);
  for (double& v : q) v *= 3.0;
  const auto best = fcm::top_k_match(q, c, 1);
  EXPECT_EQ(best.indices[0], 2);
  EXPECT_NEAR(best.sims[0], 1.0, 1e-12);
}

TEST(TopKMatch, TiesKeepCandidateOrder) {
  fcm::CandidateSet c;
  c.patches = Tensor({4, 2}, 1.0);
  c.refs.resize(4);
  const auto best = fcm::top_k_match(std::vector<double>{1.0, 1.0}, c, 2);
  EXPECT_EQ(best.indices, (std::vector<int>{0, 1}));
}

TEST(TopKMatch, MatchesExhaustiveSort) {
  RandomStream rng(4);
  fcm::CandidateSet c;
  c.patches = random_tensor({10, 6}, rng);
  c.refs.resize(10);
  std::vector<double> q(6);
  for (double& v : q) v = rng.uniform(-1, 1);
  std::vector<std::pair<double, int>> all;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> row(c.patches.data() + i * 6, c.patches.data() + (i + 1) * 6);
    all.push_back({testing::cosine_rows(q, row), i});
  }
  std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first > b.first; });
  const auto best = fcm::top_k_match(q, c, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(best.indices[i], all[i].second);
    EXPECT_NEAR(best.sims[i], all[i].first, 1e-12);
  }
}

TEST(TopKMatch, KBeyondPoolIsConfigError) {
  fcm::CandidateSet c;
  c.patches = Tensor({2, 2}, 1.0);
  c.refs.resize(2);
  try {
    fcm::top_k_match(std::vector<double>{1.0, 0.0}, c, 3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
}

TEST(BuildGraph, ZeroPaddingPicksCoLocatedPatches) {
  RandomStream rng(5);
  const auto frames = random_frames(3, 2, 6, 6, rng);
  const auto g = fcm::build_graph(frames, config(2, 0, 2, 1));
  ASSERT_EQ(g.count(), 9);
  for (int i = 0; i < g.count(); ++i) {
    const auto [y, x] = g.queries.origin(i);
    std::vector<fcm::PatchRef> got{g.refs[i * 2], g.refs[i * 2 + 1]};
    std::sort(got.begin(), got.end(), [](auto& a, auto& b) { return a.frame < b.frame; });
    EXPECT_EQ(got[0], (fcm::PatchRef{0, y, x}));
    EXPECT_EQ(got[1], (fcm::PatchRef{2, y, x}));
  }
}

TEST(BuildGraph, IdenticalFramesGiveUnitSimilarity) {
  RandomStream rng(6);
  const Tensor f = random_tensor({2, 8, 8}, rng);
  const auto g = fcm::build_graph({f, f, f}, config(2, 1, 3, 1));
  for (int i = 0; i < g.count(); ++i) EXPECT_NEAR(g.sims[i * 3], 1.0, 1e-12);
}

TEST(BuildGraph, SingleFrameExcludesOwnWindow) {
  RandomStream rng(7);
  const auto frames = random_frames(1, 2, 6, 6, rng);
  const auto g = fcm::build_graph(frames, config(2, 1, 3, 0));
  for (int i = 0; i < g.count(); ++i) {
    const auto [y, x] = g.queries.origin(i);
    for (int k = 0; k < 3; ++k) EXPECT_FALSE(g.refs[i * 3 + k] == (fcm::PatchRef{0, y, x}));
  }
}

TEST(BuildGraph, EdgesPointAtQueries) {
  RandomStream rng(8);
  const auto g = fcm::build_graph(random_frames(3, 1, 8, 8, rng), config(2, 2, 3, 1));
  const auto e = g.edges();
  ASSERT_EQ(e.size(), static_cast<std::size_t>(g.count() * 3));
  for (std::size_t j = 0; j < e.size(); ++j) EXPECT_EQ(e[j].second, static_cast<int>(j / 3));
  for (const auto& r : g.refs) EXPECT_NE(r.frame, 1);
}

TEST(BuildGraph, ShapeMismatchIsGeometryError) {
  RandomStream rng(9);
  try {
    fcm::build_graph({random_tensor({1, 6, 6}, rng), random_tensor({1, 6, 6}, rng), random_tensor({1, 4, 6}, rng)},
                     config(2, 1, 1, 1));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidGeometry);
  }
}

// Exhaustive search over every window of every frame must reproduce the
// matcher's neighbours, similarities and tie order exactly.
TEST(BuildGraph, EqualsBruteForceSearch) {
  RandomStream rng(10);
  int compared = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const int s = rng.range(2, 3), p = rng.range(0, 2), k = rng.range(1, 3), n = rng.range(0, 1);
    const int h = rng.range(s, 8), w = rng.range(s, 8);
    const int gh = h - h % s, gw = w - w % s;
    auto frames = random_frames(2 * n + 1, rng.range(1, 3), gh, gw, rng);
    if (trial % 5 == 0) frames.back() = frames.front();  // exact ties across frames
    const auto want = testing::brute_force_match(frames, s, p, k);
    if (!want) {
      EXPECT_THROW(fcm::build_graph(frames, config(s, p, k, n)), Error);
      continue;
    }
    const auto g = fcm::build_graph(frames, config(s, p, k, n));
    ASSERT_EQ(static_cast<std::size_t>(g.count()), want->size());
    for (int i = 0; i < g.count(); ++i)
      for (int r = 0; r < k; ++r) {
        const auto& e = (*want)[i][r];
        EXPECT_EQ(g.refs[i * k + r], (fcm::PatchRef{e.frame, e.y, e.x}));
        EXPECT_EQ(g.sims[i * k + r], e.sim);
      }
    ++compared;
  }
  EXPECT_GE(compared, 60);
}

TEST(BuildGraph, BestSimilarityMonotoneInPadding) {
  RandomStream rng(11);
  const auto frames = random_frames(3, 2, 8, 8, rng);
  std::vector<double> prev;
  for (int p : {0, 1, 2}) {
    const auto g = fcm::build_graph(frames, config(2, p, 1, 1));
    for (int i = 0; i < g.count(); ++i) {
      if (!prev.empty()) EXPECT_GE(g.sims[i], prev[i]);
    }
    prev = g.sims.vec();
  }
}

}  // namespace
}  // namespace dw
