#pragma once

// Straightforward reference implementations used as test oracles. Nothing here
// calls into the library's numeric code; they are written from the textbook
// definitions with plain loops so a shared bug cannot hide in both places.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "dw/autograd.hpp"
#include "dw/random.hpp"

namespace dw::testing {

inline Tensor random_tensor(const Shape& shape, RandomStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

// ---- exhaustive patch matching --------------------------------------------

struct BruteEdge {
  int frame, y, x;
  double sim;
};

/// Cosine similarity between two s x s windows of C x H x W maps, with the
/// same degenerate convention as the library (zero norm gives 0) and clamped to [-1, 1].
inline double window_cosine(const Tensor& fa, int ya, int xa, const Tensor& fb, int yb, int xb, int s) {
  const int c = fa.dim(0), h = fa.dim(1), w = fa.dim(2);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int ch = 0; ch < c; ++ch)
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx) {
        const double p = fa[(static_cast<std::size_t>(ch) * h + ya + dy) * w + xa + dx];
        const double q = fb[(static_cast<std::size_t>(ch) * h + yb + dy) * w + xb + dx];
        dot += p * q;
        na += p * p;
        nb += q * q;
      }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Every query (non-overlapping s x s grid of frame n, raster order) against
/// every window of the other frames whose origin is within P in both axes.
/// With a single frame the frame is searched itself, minus the query's own
/// window. Ties keep (frame, y, x) order. Empty when some query has fewer
/// than K candidates.
inline std::optional<std::vector<std::vector<BruteEdge>>> brute_force_match(const std::vector<Tensor>& frames, int s,
                                                                           int pad, int k) {
  const int n = static_cast<int>(frames.size()) / 2;
  const int h = frames[0].dim(1), w = frames[0].dim(2);
  std::vector<std::vector<BruteEdge>> out;
  for (int qy = 0; qy + s <= h; qy += s)
    for (int qx = 0; qx + s <= w; qx += s) {
      std::vector<BruteEdge> cands;
      for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
        if (frames.size() > 1 && f == n) continue;
        for (int y = 0; y + s <= h; ++y)
          for (int x = 0; x + s <= w; ++x) {
            if (std::abs(y - qy) > pad || std::abs(x - qx) > pad) continue;
            if (frames.size() == 1 && y == qy && x == qx) continue;
            cands.push_back({f, y, x, window_cosine(frames[n], qy, qx, frames[f], y, x, s)});
          }
      }
      if (static_cast<int>(cands.size()) < k) return std::nullopt;
      std::stable_sort(cands.begin(), cands.end(), [](const BruteEdge& a, const BruteEdge& b) { return a.sim > b.sim; });
      cands.resize(k);
      out.push_back(cands);
    }
  return out;
}

// ---- 1-D Wasserstein-1 -----------------------------------------------------

/// Integral of |F_a - F_b| over the real line for two empirical distributions.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto cdf = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), t) - v.begin()) / v.size();
  };
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double width = pts[i + 1] - pts[i];
    if (width > 0.0) acc += width * std::abs(cdf(a, pts[i]) - cdf(b, pts[i]));
  }
  return acc;
}

// ---- InfoNCE loop ----------------------------------------------------------

inline double cosine_rows(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

/// Pairwise contrastive loss evaluated term by term, one pair at a time.
inline double rain_robust_loop(const std::vector<std::vector<double>>& u, const std::vector<std::vector<double>>& v,
                               double tau) {
  const std::size_t n = u.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double den_vu = 0.0, den_uv = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      den_vu += std::exp(cosine_rows(u[i], u[j]) / tau) + std::exp(cosine_rows(u[i], v[j]) / tau);
      den_uv += std::exp(cosine_rows(v[i], u[j]) / tau) + std::exp(cosine_rows(v[i], v[j]) / tau);
    }
    total += -std::log(std::exp(cosine_rows(u[i], v[i]) / tau) / den_vu);
    total += -std::log(std::exp(cosine_rows(v[i], u[i]) / tau) / den_uv);
  }
  return total / n;
}

// ---- SSIM / MS-SSIM --------------------------------------------------------

struct PlainImage {
  int h = 0, w = 0;
  std::vector<double> px;  // single channel, row-major
  double at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
};

inline std::vector<std::vector<double>> gaussian_2d(int size, double sigma) {
  std::vector<std::vector<double>> k(size, std::vector<double>(size));
  const double c = (size - 1) / 2.0;
  double z = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) z += k[i][j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
  for (auto& r : k)
    for (double& v : r) v /= z;
  return k;
}

/// Mean SSIM and mean contrast-structure term over valid window positions.
inline std::pair<double, double> ssim_cs(const PlainImage& a, const PlainImage& b, int win, double sigma,
                                         double data_range, double k1 = 0.01, double k2 = 0.03) {
  const auto g = gaussian_2d(win, sigma);
  const double c1 = (k1 * data_range) * (k1 * data_range), c2 = (k2 * data_range) * (k2 * data_range);
  double s_acc = 0.0, cs_acc = 0.0;
  int count = 0;
  for (int y = 0; y + win <= a.h; ++y)
    for (int x = 0; x + win <= a.w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double p = a.at(y + i, x + j), q = b.at(y + i, x + j), wt = g[i][j];
          ma += wt * p;
          mb += wt * q;
          saa += wt * p * p;
          sbb += wt * q * q;
          sab += wt * p * q;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      const double cs = (2 * cov + c2) / (va + vb + c2);
      s_acc += cs * (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
      cs_acc += cs;
      ++count;
    }
  return {s_acc / count, cs_acc / count};
}

inline PlainImage half(const PlainImage& a) {
  PlainImage o{a.h / 2, a.w / 2, {}};
  o.px.resize(static_cast<std::size_t>(o.h) * o.w);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.px[static_cast<std::size_t>(y) * o.w + x] =
          (a.at(2 * y, 2 * x) + a.at(2 * y, 2 * x + 1) + a.at(2 * y + 1, 2 * x) + a.at(2 * y + 1, 2 * x + 1)) / 4;
  return o;
}

/// Product over scales of cs^w (ssim^w at the coarsest), one channel.
inline double ms_ssim_plain(PlainImage a, PlainImage b, const std::vector<double>& weights, int win, double sigma,
                            double data_range) {
  double prod = 1.0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    const auto [ss, cs] = ssim_cs(a, b, win, sigma, data_range);
    prod *= std::pow(s + 1 == weights.size() ? ss : cs, weights[s]);
    a = half(a);
    b = half(b);
  }
  return prod;
}

// ---- finite differences ----------------------------------------------------

using ScalarFn = std::function<ag::Var(const std::vector<ag::Var>&)>;

/// Worst element-wise relative error between reverse-mode and central
/// difference gradients over every input. The denominator is floored at
/// 1e-3 of the largest gradient magnitude so entries that are zero up to
/// rounding do not dominate.
inline double gradient_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  std::vector<ag::Var> leaves;
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  ag::backward(f(leaves));

  std::vector<Tensor> numeric;
  double scale = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor g(inputs[i].shape());
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const auto eval_at = [&](double delta) {
        ag::NoGradGuard guard;
        std::vector<ag::Var> args;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == i) t[e] += delta;
          args.push_back(ag::constant(std::move(t)));
        }
        return f(args).item();
      };
      g[e] = (eval_at(h) - eval_at(-h)) / (2 * h);
      scale = std::max({scale, std::abs(g[e]), std::abs(leaves[i].grad()[e])});
    }
    numeric.push_back(std::move(g));
  }
  double worst = 0.0;
  const double floor = std::max(1e-3 * scale, 1e-12);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double a = leaves[i].grad()[e], n = numeric[i][e];
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
  return worst;
}

}  // namespace dw::testing
