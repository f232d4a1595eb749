#pragma once

#include <string>
#include <vector>

#include "dw/patch.hpp"

/// Supervision terms and the composite constructor / de-weathering objectives.
namespace dw::loss {

struct LossWeights {
  double tau = 0.25;       // Rain-Robust temperature
  double lambda1 = 0.1;    // original-label weight, CLC pipeline
  double lambda2 = 0.08;   // SW weight inside the lambda1 group
  double lambda_o = 0.25;  // original-label weight, CSA-CLC pipeline
  double lambda_d = 0.01;  // feature distillation weight
};

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 1.0;
};

/// Scalar breakdown of an objective. `total` is the weighted sum of the terms.
struct LossReport {
  double total = 0.0;
  std::vector<LossTerm> terms;

  double term(const std::string& name) const;
  double recomputed_total() const;
};

/// Differentiable total plus its breakdown.
struct Objective {
  ag::Var total;
  LossReport report;
};

// ---- SSIM family -----------------------------------------------------------

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

/// Mean SSIM over batch, channels and valid positions.
ag::Var ssim(const ag::Var& a, const ag::Var& b, const SsimConfig& cfg = {});

struct MsSsimConfig {
  int scales = 3;
  int window = 7;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 2.0;  // model space is [-1, 1]
  /// Per-scale exponents; empty means the first `scales` standard weights, renormalised.
  std::vector<double> weights{};

  std::vector<double> resolved_weights() const;
  /// Smallest side length accepted for this configuration.
  int min_side() const { return window << (scales - 1); }
};

/// MS-SSIM in [0, 1] for non-negative structure; mean over batch and channels.
ag::Var ms_ssim(const ag::Var& a, const ag::Var& b, const MsSsimConfig& cfg = {});
/// 1 - MS-SSIM.
ag::Var ms_ssim_loss(const ag::Var& a, const ag::Var& b, const MsSsimConfig& cfg = {});
/// Plain form on [0,1] images (data range 1).
double ms_ssim_loss(const Image& a, const Image& b, MsSsimConfig cfg = {.data_range = 1.0});

// ---- Sliced Wasserstein ----------------------------------------------------

/// Projects C x (H*W) features of each sample with M (C' x C), sorts every
/// projected row and returns the mean absolute difference of the sorted rows.
ag::Var sliced_wasserstein(const ag::Var& u, const ag::Var& v, const patch::ProjectionMatrix& proj);

/// Features of both image batches from `extractor`, then `sliced_wasserstein`.
ag::Var sw_loss(const ag::Var& out, const ag::Var& target, const patch::FeatureExtractor& extractor,
                const patch::ProjectionMatrix& proj);
double sw_loss(const Image& out, const Image& target, const patch::FeatureExtractor& extractor,
               const patch::ProjectionMatrix& proj);

/// Extractor plus per-step projection.
struct SwContext {
  const patch::FeatureExtractor* extractor = nullptr;
  patch::ProjectionMatrix proj;
};

// ---- Rain-Robust (InfoNCE) -------------------------------------------------

/// `u` holds encodings of degraded images and `v` of their clean partners,
/// both [N, d] with N >= 2. Rows are L2-normalised internally. Returns
/// sum_i (L_VU_i + L_UV_i) / N where each denominator runs over j != i.
ag::Var rain_robust_loss(const ag::Var& u, const ag::Var& v, double tau);

// ---- Distillation and L1 ---------------------------------------------------

/// Smooth-L1 (delta = 1) between G_t and a stop-gradient copy of F_agg.
ag::Var distill_loss(const ag::Var& g_t, const ag::Var& f_agg);

ag::Var l1_loss(const ag::Var& a, const ag::Var& b);

// ---- Composite objectives --------------------------------------------------

/// L1 + (1 - MS-SSIM) between the pseudo-label and the original label.
Objective clc_objective(const ag::Var& pseudo, const ag::Var& gt, const MsSsimConfig& ms = {});

/// `clc_objective` + Rain-Robust loss on the constructor's encodings (u: degraded, v: label).
Objective csaclc_objective(const ag::Var& pseudo, const ag::Var& gt, const ag::Var& u, const ag::Var& v, double tau,
                           const MsSsimConfig& ms = {});

/// L1(out, pseudo) + lambda1 * (L_R + lambda2 * L_SW(out, gt)).
Objective ias_clc_objective(const ag::Var& out, const ag::Var& pseudo, const ag::Var& gt, const ag::Var& u,
                            const ag::Var& v, const SwContext& sw, const LossWeights& w);

/// [L1 + (1-MS-SSIM)](out, pseudo) + lambda_o [L_R + (1-MS-SSIM)(out, gt)]
///   + lambda_d smoothL1(G_t, stopgrad(F_agg)).
/// Terms whose weight is zero are skipped; `f_agg` may be undefined when lambda_d == 0.
Objective ias_csaclc_objective(const ag::Var& out, const ag::Var& pseudo, const ag::Var& gt, const ag::Var& g_t,
                               const ag::Var& f_agg, const ag::Var& u, const ag::Var& v, const LossWeights& w,
                               const MsSsimConfig& ms = {});

/// Combines named (term, weight) pairs into an `Objective`.
Objective combine(std::vector<std::pair<std::string, ag::Var>> terms, const std::vector<double>& weights);

}  // namespace dw::loss
