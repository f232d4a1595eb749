#pragma once

#include <array>
#include <span>
#include <vector>

#include "dw/fcm.hpp"

/// Non-local feature aggregation: graph attention over each query's matched
/// neighbours, two stacked layers, reassembly, and gating with the current frame.
namespace dw::gat {

enum class Activation { kElu, kIdentity };

struct GatLayerParams {
  Tensor w;  // [d_out, d_in], shared linear map
  Tensor a;  // [2 * d_out], attention vector (query half first)
  double negative_slope = 0.2;
  Activation activation = Activation::kElu;

  int d_in() const { return w.dim(1); }
  int d_out() const { return w.dim(0); }
  void validate() const;

  /// W = I (d x d), a = 0, identity activation.
  static GatLayerParams identity(int d);
};

/// Softmax over k of LeakyReLU(a . [W q || W p_k]); `neighbors` is [K, d_in].
std::vector<double> attention_coeffs(std::span<const double> query, const Tensor& neighbors,
                                     const GatLayerParams& params);

/// phi(sum_k alpha_k W p_k).
std::vector<double> aggregate(std::span<const double> query, const Tensor& neighbors, std::span<const double> alpha,
                              const GatLayerParams& params);

double activate(double x, Activation act);

// Differentiable batched pieces.

/// Pre-activation aggregation for R sub-graphs: queries [R, d_in], neighbours
/// [R, K, d_in] -> [R, d_out]. Sub-graphs never exchange information.
ag::Var attend(const ag::Var& queries, const ag::Var& neighbors, const ag::Var& w, const ag::Var& a,
               double negative_slope);

ag::Var activate(const ag::Var& x, Activation act);

/// Gathers each graph's neighbour windows from the per-frame batched maps
/// (`frames[f]` is [B, C, H, W]; graph b indexes sample b). Result [B*N, K, C*s*s].
ag::Var gather_neighbors(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                         int patch_size);

/// Trainable layer: parameters held as leaves.
struct GatLayer {
  ag::Var w;
  ag::Var a;
  double negative_slope = 0.2;
  Activation activation = Activation::kElu;

  static GatLayer from_params(const GatLayerParams& p, bool trainable);
  GatLayerParams params() const;
};

struct CsaResult {
  ag::Var f_agg;  // [B, C, H, W]
  ag::Var z;      // [B*N, d] node outputs of the last layer
};

/// Two-layer aggregation followed by fold and element-wise gating with the
/// current frame map `frames[n]`. Layer 2 re-attends each updated query over
/// the layer-1 transformed neighbours phi(W1 p_k) without re-matching.
CsaResult csa_forward(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                      const std::array<GatLayer, 2>& layers, int patch_size);

/// Mean of the raw neighbour patches in place of attention, then the same fold and gating.
CsaResult mean_forward(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                       int patch_size);

struct AggregatedFeature {
  Tensor f_agg;  // C x H x W
  Tensor z;      // [N, d]
};

/// Single-sample convenience form over plain tensors (C x H x W maps).
AggregatedFeature csa_forward(const std::vector<Tensor>& frames, const fcm::PatchGraphSet& graph,
                              const std::array<GatLayerParams, 2>& layers);

/// Comparator: z_i is the arithmetic mean of the raw neighbour patches, then the same fold and gating.
AggregatedFeature mean_aggregate_baseline(const fcm::PatchGraphSet& graph);

}  // namespace dw::gat
