#pragma once

#include <vector>

#include "dw/patch.hpp"

/// Flexible cross-frame matching: for every query patch of the current frame,
/// search a padded region of each adjacent frame (stride 1, clamped to the map),
/// rank by cosine similarity and keep the top K as directed graph edges.
namespace dw::fcm {

struct MatchConfig {
  int patch_size = 2;  // s, in feature-map pixels
  int padding = 3;     // P
  int top_k = 3;       // K
  int radius = 1;      // n; the window holds 2n+1 frames

  void validate() const;
};

/// Location of a candidate window: index into the frame sequence plus origin.
struct PatchRef {
  int frame = 0;
  int y = 0;
  int x = 0;
  bool operator==(const PatchRef&) const = default;
};

/// Candidate windows in canonical order (frame offset ascending, then raster order).
struct CandidateSet {
  Tensor patches;  // [M, C*s*s]
  std::vector<PatchRef> refs;
  int count() const { return static_cast<int>(refs.size()); }
  std::span<const double> row(int i) const {
    const auto d = static_cast<std::size_t>(patches.dim(1));
    return {patches.data() + i * d, d};
  }
};

/// All s x s windows (stride 1) of `adjacent` whose origin lies within P of
/// `query_origin`, clamped to valid origins. `frame` is recorded in the refs;
/// `exclude` drops one origin (used when matching a frame against itself).
CandidateSet candidate_patches(const Tensor& adjacent, std::pair<int, int> query_origin, const MatchConfig& cfg,
                               int frame = 0, const PatchRef* exclude = nullptr);

struct TopK {
  std::vector<int> indices;
  std::vector<double> sims;
};

/// K most similar candidates, sims non-increasing; ties keep candidate order.
TopK top_k_match(std::span<const double> query, const CandidateSet& candidates, int k);

/// Directed graph set: every query receives K edges from matched neighbours.
struct PatchGraphSet {
  patch::PatchSet queries;        // N x (C*s*s), from the current frame
  Tensor neighbors;               // [N, K, C*s*s]
  Tensor sims;                    // [N, K]
  std::vector<PatchRef> refs;     // N*K neighbour locations, row-major (query, rank)
  int top_k = 0;

  int count() const { return queries.count(); }
  int dim() const { return queries.dim(); }
  /// Edge list (source neighbour node -> destination query); node ids of
  /// neighbours are query * K + rank.
  std::vector<std::pair<int, int>> edges() const;
};

/// `frames` holds 2n+1 maps (C x H x W); index n is the current frame. For
/// n = 0 the current frame is matched against itself, excluding each query's own window.
PatchGraphSet build_graph(const std::vector<Tensor>& frames, const MatchConfig& cfg);

}  // namespace dw::fcm
