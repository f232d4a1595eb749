#include "dw/losses.hpp"

#include <Eigen/Core>
#include <cmath>

namespace dw::loss {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SsimMaps {
  ag::Var ssim;
  ag::Var cs;
};

SsimMaps ssim_maps(const ag::Var& x, const ag::Var& y, const std::vector<double>& kernel, double c1, double c2) {
  using namespace ag;
  const Var mu_x = blur_valid(x, kernel);
  const Var mu_y = blur_valid(y, kernel);
  const Var mu_xx = mul(mu_x, mu_x);
  const Var mu_yy = mul(mu_y, mu_y);
  const Var mu_xy = mul(mu_x, mu_y);
  const Var s_xx = sub(blur_valid(mul(x, x), kernel), mu_xx);
  const Var s_yy = sub(blur_valid(mul(y, y), kernel), mu_yy);
  const Var s_xy = sub(blur_valid(mul(x, y), kernel), mu_xy);
  const Var cs = div(add_scalar(scale(s_xy, 2.0), c2), add_scalar(add(s_xx, s_yy), c2));
  const Var lum = div(add_scalar(scale(mu_xy, 2.0), c1), add_scalar(add(mu_xx, mu_yy), c1));
  return {mul(lum, cs), cs};
}

void require_images(const ag::Var& a, const ag::Var& b, const char* what) {
  DW_REQUIRE(a.shape() == b.shape() && a.shape().size() == 4, ErrorCode::kInvalidInput,
             std::string(what) + ": image shapes differ or are not NCHW: " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
}

constexpr double kStandardMsSsimWeights[] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kPositiveFloor = 1e-6;

}  // namespace

double LossReport::term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return t.value;
  throw Error(ErrorCode::kInvalidInput, "loss report has no term '" + name + "'");
}

double LossReport::recomputed_total() const {
  double acc = 0.0;
  for (const auto& t : terms) acc += t.weight * t.value;
  return acc;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  double z = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    z += g[i];
  }
  for (double& v : g) v /= z;
  return g;
}

ag::Var ssim(const ag::Var& a, const ag::Var& b, const SsimConfig& cfg) {
  require_images(a, b, "ssim");
  const double c1 = std::pow(cfg.k1 * cfg.data_range, 2), c2 = std::pow(cfg.k2 * cfg.data_range, 2);
  return ag::mean(ssim_maps(a, b, gaussian_window(cfg.window, cfg.sigma), c1, c2).ssim);
}

std::vector<double> MsSsimConfig::resolved_weights() const {
  if (!weights.empty()) {
    DW_REQUIRE(static_cast<int>(weights.size()) == scales, ErrorCode::kInvalidConfig, "MS-SSIM weight count != scales");
    return weights;
  }
  DW_REQUIRE(scales >= 1 && scales <= 5, ErrorCode::kInvalidConfig, "MS-SSIM supports 1..5 scales");
  std::vector<double> w(kStandardMsSsimWeights, kStandardMsSsimWeights + scales);
  double z = 0.0;
  for (double x : w) z += x;
  for (double& x : w) x /= z;
  return w;
}

ag::Var ms_ssim(const ag::Var& a, const ag::Var& b, const MsSsimConfig& cfg) {
  require_images(a, b, "ms_ssim");
  DW_REQUIRE(a.dim(2) >= cfg.min_side() && a.dim(3) >= cfg.min_side(), ErrorCode::kInvalidInput,
             "ms_ssim: image " + std::to_string(a.dim(2)) + "x" + std::to_string(a.dim(3)) +
                 " smaller than filter support for " + std::to_string(cfg.scales) + " scales (need " +
                 std::to_string(cfg.min_side()) + ")");
  const auto weights = cfg.resolved_weights();
  const auto kernel = gaussian_window(cfg.window, cfg.sigma);
  const double c1 = std::pow(cfg.k1 * cfg.data_range, 2), c2 = std::pow(cfg.k2 * cfg.data_range, 2);
  ag::Var x = a, y = b, prod;
  for (int s = 0; s < cfg.scales; ++s) {
    const SsimMaps maps = ssim_maps(x, y, kernel, c1, c2);
    const bool last = s + 1 == cfg.scales;
    const ag::Var v = ag::spatial_mean(last ? maps.ssim : maps.cs);
    const ag::Var f = ag::pow_scalar(ag::clamp_min(v, kPositiveFloor), weights[s]);
    prod = prod.defined() ? ag::mul(prod, f) : f;
    if (!last) {
      x = ag::avg_pool2(x);
      y = ag::avg_pool2(y);
    }
  }
  return ag::mean(prod);
}

ag::Var ms_ssim_loss(const ag::Var& a, const ag::Var& b, const MsSsimConfig& cfg) {
  return ag::add_scalar(ag::scale(ms_ssim(a, b, cfg), -1.0), 1.0);
}

double ms_ssim_loss(const Image& a, const Image& b, MsSsimConfig cfg) {
  ag::NoGradGuard guard;
  return ms_ssim_loss(ag::constant(to_batch(a, false)), ag::constant(to_batch(b, false)), cfg).item();
}

ag::Var sliced_wasserstein(const ag::Var& u, const ag::Var& v, const patch::ProjectionMatrix& proj) {
  require_images(u, v, "sliced_wasserstein");
  const int c = u.dim(1), cp = proj.m.dim(0);
  DW_REQUIRE(proj.m.dim(1) == c, ErrorCode::kInvalidInput,
             "projection " + shape_str(proj.m.shape()) + " does not match " + std::to_string(c) + " channels");
  const ag::Var m = ag::constant(proj.m.reshaped({cp, c, 1, 1}));
  const int rows = u.dim(0) * cp, len = u.dim(2) * u.dim(3);
  const ag::Var us = ag::sort_last(ag::reshape(ag::conv2d(u, m, nullptr, 1, 0), {rows, len}));
  const ag::Var vs = ag::sort_last(ag::reshape(ag::conv2d(v, m, nullptr, 1, 0), {rows, len}));
  return ag::mean_abs_diff(us, vs);
}

ag::Var sw_loss(const ag::Var& out, const ag::Var& target, const patch::FeatureExtractor& extractor,
                const patch::ProjectionMatrix& proj) {
  require_images(out, target, "sw_loss");
  return sliced_wasserstein(extractor.extract(out), extractor.extract(target), proj);
}

double sw_loss(const Image& out, const Image& target, const patch::FeatureExtractor& extractor,
               const patch::ProjectionMatrix& proj) {
  DW_REQUIRE(out.same_shape(target), ErrorCode::kInvalidInput, "sw_loss: image shapes differ");
  ag::NoGradGuard guard;
  return sw_loss(ag::constant(to_batch(out)), ag::constant(to_batch(target)), extractor, proj).item();
}

ag::Var rain_robust_loss(const ag::Var& u, const ag::Var& v, double tau) {
  DW_REQUIRE(u.shape().size() == 2 && u.shape() == v.shape(), ErrorCode::kInvalidInput,
             "rain_robust_loss: expected matching [N, d] encodings");
  DW_REQUIRE(tau > 0.0, ErrorCode::kInvalidConfig, "rain_robust_loss: temperature must be > 0");
  const int n = u.dim(0), d = u.dim(1);
  DW_REQUIRE(n >= 2, ErrorCode::kInvalidInput, "rain_robust_loss: need at least 2 pairs");

  // G = [X; Y] with unit rows; S = G G^T / tau.
  auto g = std::make_shared<RowMat>(2 * n, d);
  auto norms = std::make_shared<std::vector<double>>(2 * n);
  for (int r = 0; r < 2 * n; ++r) {
    const double* src = (r < n ? u.value().data() + static_cast<std::size_t>(r) * d
                               : v.value().data() + static_cast<std::size_t>(r - n) * d);
    double nn = 0.0;
    for (int j = 0; j < d; ++j) nn += src[j] * src[j];
    nn = std::sqrt(nn);
    (*norms)[r] = nn;
    for (int j = 0; j < d; ++j) (*g)(r, j) = nn > 0.0 ? src[j] / nn : 0.0;
  }
  const RowMat s = (*g) * g->transpose() / tau;
  auto ds = std::make_shared<RowMat>(RowMat::Zero(2 * n, 2 * n));
  double total = 0.0;
  for (int r = 0; r < 2 * n; ++r) {
    const int i = r % n;
    const int pos = r < n ? n + i : i;
    double mx = -INFINITY;
    for (int c = 0; c < 2 * n; ++c)
      if (c % n != i) mx = std::max(mx, s(r, c));
    double z = 0.0;
    for (int c = 0; c < 2 * n; ++c)
      if (c % n != i) z += std::exp(s(r, c) - mx);
    total += -s(r, pos) + mx + std::log(z);
    (*ds)(r, pos) -= 1.0 / n;
    for (int c = 0; c < 2 * n; ++c)
      if (c % n != i) (*ds)(r, c) += std::exp(s(r, c) - mx) / z / n;
  }
  return ag::make_result(Tensor({1}, total / n), {u, v}, [g, norms, ds, n, d, tau](ag::Node& self) {
    const RowMat dg = ((*ds + ds->transpose()) * (*g)) * (self.grad[0] / tau);
    for (int r = 0; r < 2 * n; ++r) {
      const int k = r < n ? 0 : 1;
      if (!self.parents[k]->requires_grad || (*norms)[r] == 0.0) continue;
      const double proj = dg.row(r).dot(g->row(r));
      double* dst = self.parents[k]->ensure_grad().data() + static_cast<std::size_t>(r % n) * d;
      for (int j = 0; j < d; ++j) dst[j] += (dg(r, j) - (*g)(r, j) * proj) / (*norms)[r];
    }
  });
}

ag::Var distill_loss(const ag::Var& g_t, const ag::Var& f_agg) {
  DW_REQUIRE(g_t.shape() == f_agg.shape(), ErrorCode::kInvalidInput,
             "distill_loss: shapes differ " + shape_str(g_t.shape()) + " vs " + shape_str(f_agg.shape()));
  return ag::smooth_l1_mean(g_t, ag::detach(f_agg), 1.0);
}

ag::Var l1_loss(const ag::Var& a, const ag::Var& b) {
  require_images(a, b, "l1_loss");
  return ag::mean_abs_diff(a, b);
}

Objective combine(std::vector<std::pair<std::string, ag::Var>> terms, const std::vector<double>& weights) {
  Objective obj;
  std::vector<ag::Var> vars;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    obj.report.terms.push_back({terms[i].first, terms[i].second.item(), weights[i]});
    vars.push_back(terms[i].second);
  }
  obj.total = ag::weighted_sum(vars, weights);
  obj.report.total = obj.total.item();
  return obj;
}

Objective clc_objective(const ag::Var& pseudo, const ag::Var& gt, const MsSsimConfig& ms) {
  return combine({{"l1", l1_loss(pseudo, gt)}, {"ms_ssim", ms_ssim_loss(pseudo, gt, ms)}}, {1.0, 1.0});
}

Objective csaclc_objective(const ag::Var& pseudo, const ag::Var& gt, const ag::Var& u, const ag::Var& v, double tau,
                           const MsSsimConfig& ms) {
  return combine({{"l1", l1_loss(pseudo, gt)},
                  {"ms_ssim", ms_ssim_loss(pseudo, gt, ms)},
                  {"rain_robust", rain_robust_loss(u, v, tau)}},
                 {1.0, 1.0, 1.0});
}

Objective ias_clc_objective(const ag::Var& out, const ag::Var& pseudo, const ag::Var& gt, const ag::Var& u,
                            const ag::Var& v, const SwContext& sw, const LossWeights& w) {
  DW_REQUIRE(sw.extractor, ErrorCode::kInvalidConfig, "ias_clc_objective: no SW feature extractor");
  std::vector<std::pair<std::string, ag::Var>> terms{{"l1_pseudo", l1_loss(out, pseudo)}};
  std::vector<double> weights{1.0};
  if (w.lambda1 != 0.0) {
    terms.emplace_back("rain_robust", rain_robust_loss(u, v, w.tau));
    weights.push_back(w.lambda1);
    if (w.lambda2 != 0.0) {
      terms.emplace_back("sw", sw_loss(out, gt, *sw.extractor, sw.proj));
      weights.push_back(w.lambda1 * w.lambda2);
    }
  }
  return combine(std::move(terms), weights);
}

Objective ias_csaclc_objective(const ag::Var& out, const ag::Var& pseudo, const ag::Var& gt, const ag::Var& g_t,
                               const ag::Var& f_agg, const ag::Var& u, const ag::Var& v, const LossWeights& w,
                               const MsSsimConfig& ms) {
  std::vector<std::pair<std::string, ag::Var>> terms{{"l1_pseudo", l1_loss(out, pseudo)},
                                                     {"ms_ssim_pseudo", ms_ssim_loss(out, pseudo, ms)}};
  std::vector<double> weights{1.0, 1.0};
  if (w.lambda_o != 0.0) {
    terms.emplace_back("rain_robust", rain_robust_loss(u, v, w.tau));
    terms.emplace_back("ms_ssim_gt", ms_ssim_loss(out, gt, ms));
    weights.insert(weights.end(), {w.lambda_o, w.lambda_o});
  }
  if (w.lambda_d != 0.0) {
    DW_REQUIRE(f_agg.defined(), ErrorCode::kInvalidConfig, "distillation enabled without an aggregated feature");
    terms.emplace_back("distill", distill_loss(g_t, f_agg));
    weights.push_back(w.lambda_d);
  }
  return combine(std::move(terms), weights);
}

}  // namespace dw::loss
