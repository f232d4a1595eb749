#include "dw/fcm.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace dw::fcm {

namespace {

std::array<int, 3> chw(const Tensor& f) {
  if (f.rank() == 4 && f.dim(0) == 1) return {f.dim(1), f.dim(2), f.dim(3)};
  DW_REQUIRE(f.rank() == 3, ErrorCode::kInvalidGeometry, "expected a C x H x W feature map, got " + shape_str(f.shape()));
  return {f.dim(0), f.dim(1), f.dim(2)};
}

}  // namespace

void MatchConfig::validate() const {
  DW_REQUIRE(patch_size >= 1, ErrorCode::kInvalidConfig, "patch size must be >= 1");
  DW_REQUIRE(padding >= 0, ErrorCode::kInvalidConfig, "region padding must be >= 0");
  DW_REQUIRE(top_k >= 1, ErrorCode::kInvalidConfig, "top-K must be >= 1");
  DW_REQUIRE(radius >= 0, ErrorCode::kInvalidConfig, "temporal radius must be >= 0");
}

CandidateSet candidate_patches(const Tensor& adjacent, std::pair<int, int> query_origin, const MatchConfig& cfg,
                               int frame, const PatchRef* exclude) {
  const auto [c, h, w] = chw(adjacent);
  const int s = cfg.patch_size;
  DW_REQUIRE(s <= h && s <= w, ErrorCode::kInvalidGeometry, "patch size exceeds feature map");
  const auto [qy, qx] = query_origin;
  const int y0 = std::max(0, qy - cfg.padding), y1 = std::min(h - s, qy + cfg.padding);
  const int x0 = std::max(0, qx - cfg.padding), x1 = std::min(w - s, qx + cfg.padding);
  CandidateSet out;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      PatchRef r{frame, y, x};
      if (exclude && r == *exclude) continue;
      out.refs.push_back(r);
    }
  const int d = c * s * s;
  out.patches = Tensor({out.count(), d});
  for (int i = 0; i < out.count(); ++i) {
    patch::extract_window(adjacent, out.refs[i].y, out.refs[i].x, s,
                          {out.patches.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)});
  }
  return out;
}

TopK top_k_match(std::span<const double> query, const CandidateSet& candidates, int k) {
  DW_REQUIRE(k >= 1 && k <= candidates.count(), ErrorCode::kInvalidConfig,
             "top-K " + std::to_string(k) + " exceeds candidate count " + std::to_string(candidates.count()));
  std::vector<double> sims(candidates.count());
  for (int i = 0; i < candidates.count(); ++i) sims[i] = patch::cosine_sim(query, candidates.row(i));
  std::vector<int> order(candidates.count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sims[a] > sims[b]; });
  TopK out;
  for (int i = 0; i < k; ++i) {
    out.indices.push_back(order[i]);
    out.sims.push_back(sims[order[i]]);
  }
  return out;
}

std::vector<std::pair<int, int>> PatchGraphSet::edges() const {
  std::vector<std::pair<int, int>> e;
  e.reserve(static_cast<std::size_t>(count()) * top_k);
  for (int i = 0; i < count(); ++i)
    for (int k = 0; k < top_k; ++k) e.emplace_back(i * top_k + k, i);
  return e;
}

PatchGraphSet build_graph(const std::vector<Tensor>& frames, const MatchConfig& cfg) {
  cfg.validate();
  DW_REQUIRE(static_cast<int>(frames.size()) == 2 * cfg.radius + 1, ErrorCode::kInvalidConfig,
             "expected " + std::to_string(2 * cfg.radius + 1) + " frames, got " + std::to_string(frames.size()));
  const auto shape = chw(frames[0]);
  for (const auto& f : frames) {
    DW_REQUIRE(chw(f) == shape, ErrorCode::kInvalidGeometry, "feature shapes differ across frames");
  }
  const int t = cfg.radius;
  const int s = cfg.patch_size;
  PatchGraphSet g;
  g.top_k = cfg.top_k;
  g.queries = patch::unfold(frames[t], s, s);
  const int n = g.count(), d = g.dim(), k = cfg.top_k;
  g.neighbors = Tensor({n, k, d});
  g.sims = Tensor({n, k});
  g.refs.resize(static_cast<std::size_t>(n) * k);

  for (int i = 0; i < n; ++i) {
    const auto origin = g.queries.origin(i);
    CandidateSet pool;
    std::vector<CandidateSet> parts;
    if (cfg.radius == 0) {
      const PatchRef own{t, origin.first, origin.second};
      parts.push_back(candidate_patches(frames[t], origin, cfg, t, &own));
    } else {
      for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
        if (f != t) parts.push_back(candidate_patches(frames[f], origin, cfg, f));
      }
    }
    int total = 0;
    for (const auto& p : parts) total += p.count();
    pool.patches = Tensor({total, d});
    int row = 0;
    for (const auto& p : parts) {
      std::copy(p.patches.vec().begin(), p.patches.vec().end(), pool.patches.data() + static_cast<std::size_t>(row) * d);
      pool.refs.insert(pool.refs.end(), p.refs.begin(), p.refs.end());
      row += p.count();
    }
    const TopK best = top_k_match(g.queries.row(i), pool, k);
    for (int r = 0; r < k; ++r) {
      const auto src = pool.row(best.indices[r]);
      std::copy(src.begin(), src.end(), g.neighbors.data() + (static_cast<std::size_t>(i) * k + r) * d);
      g.sims[i * k + r] = best.sims[r];
      g.refs[i * k + r] = pool.refs[best.indices[r]];
    }
  }
  return g;
}

}  // namespace dw::fcm
