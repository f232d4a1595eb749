#include <Eigen/Core>
#include <cmath>

#include "dw/autograd.hpp"

namespace dw::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_nchw(const Var& x, const char* op) {
  DW_REQUIRE(x.shape().size() == 4, ErrorCode::kInvalidInput,
             std::string(op) + ": expected NCHW, got " + shape_str(x.shape()));
}

struct ConvGeom {
  int c, h, w, k, stride, pad, ho, wo;
};

void im2col(const double* img, const ConvGeom& g, double* col) {
  const int hw = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* dst = col + ((c * g.k + ky) * g.k + kx) * hw;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst + oy * g.wo, g.wo, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[oy * g.wo + ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* img) {
  const int hw = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* src = col + ((c * g.k + ky) * g.k + kx) * hw;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = img + (c * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var* bias, int stride, int pad) {
  require_nchw(x, "conv2d");
  DW_REQUIRE(w.shape().size() == 4 && w.dim(1) == x.dim(1) && w.dim(2) == w.dim(3), ErrorCode::kInvalidInput,
             "conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  const int n = x.dim(0), o = w.dim(0);
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  DW_REQUIRE(g.ho > 0 && g.wo > 0, ErrorCode::kInvalidGeometry, "conv2d: input smaller than kernel");
  const int ckk = g.c * g.k * g.k, hw = g.ho * g.wo;

  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * ckk * hw);
  Tensor out({n, o, g.ho, g.wo});
  CMapMat wm(w.value().data(), o, ckk);
  for (int b = 0; b < n; ++b) {
    double* col = cols->data() + static_cast<std::size_t>(b) * ckk * hw;
    im2col(x.value().data() + static_cast<std::size_t>(b) * g.c * g.h * g.w, g, col);
    MapMat ym(out.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
    ym.noalias() = wm * CMapMat(col, ckk, hw);
    if (bias) {
      for (int oc = 0; oc < o; ++oc) ym.row(oc).array() += bias->value()[oc];
    }
  }
  std::vector<Var> parents{x, w};
  if (bias) parents.push_back(*bias);
  return make_result(std::move(out), parents, [g, n, o, ckk, hw, cols](Node& self) {
    const Tensor& wv = self.parents[1]->value;
    CMapMat wm(wv.data(), o, ckk);
    const bool gx = self.parents[0]->requires_grad;
    const bool gw = self.parents[1]->requires_grad;
    const bool gb = self.parents.size() > 2 && self.parents[2]->requires_grad;
    RowMat dcol(ckk, hw);
    for (int b = 0; b < n; ++b) {
      CMapMat dy(self.grad.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
      const double* col = cols->data() + static_cast<std::size_t>(b) * ckk * hw;
      if (gw) {
        MapMat dw(self.parents[1]->ensure_grad().data(), o, ckk);
        dw.noalias() += dy * CMapMat(col, ckk, hw).transpose();
      }
      if (gb) {
        Tensor& db = self.parents[2]->ensure_grad();
        // Plain loop: Eigen's vectorised sum peels by pointer alignment, which
        // makes the rounding vary from run to run.
        for (int oc = 0; oc < o; ++oc) {
          const double* row = self.grad.data() + (static_cast<std::size_t>(b) * o + oc) * hw;
          double acc = 0.0;
          for (int j = 0; j < hw; ++j) acc += row[j];
          db[oc] += acc;
        }
      }
      if (gx) {
        dcol.noalias() = wm.transpose() * dy;
        col2im(dcol.data(), g, self.parents[0]->ensure_grad().data() + static_cast<std::size_t>(b) * g.c * g.h * g.w);
      }
    }
  });
}

Var upsample2x(const Var& x) {
  require_nchw(x, "upsample2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const auto& v = x.value();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) out.at(b, ch, y, xx) = v.at(b, ch, y / 2, xx / 2);
  return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx) g.at(b, ch, y / 2, xx / 2) += self.grad.at(b, ch, y, xx);
  });
}

Var avg_pool2(const Var& x) {
  require_nchw(x, "avg_pool2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  DW_REQUIRE(h > 0 && w > 0, ErrorCode::kInvalidGeometry, "avg_pool2: input too small");
  Tensor out({n, c, h, w});
  const auto& v = x.value();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(b, ch, y, xx) = 0.25 * (v.at(b, ch, 2 * y, 2 * xx) + v.at(b, ch, 2 * y + 1, 2 * xx) +
                                         v.at(b, ch, 2 * y, 2 * xx + 1) + v.at(b, ch, 2 * y + 1, 2 * xx + 1));
  return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const double d = 0.25 * self.grad.at(b, ch, y, xx);
            g.at(b, ch, 2 * y, 2 * xx) += d;
            g.at(b, ch, 2 * y + 1, 2 * xx) += d;
            g.at(b, ch, 2 * y, 2 * xx + 1) += d;
            g.at(b, ch, 2 * y + 1, 2 * xx + 1) += d;
          }
  });
}

Var blur_valid(const Var& x, const std::vector<double>& kernel) {
  require_nchw(x, "blur_valid");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int k = static_cast<int>(kernel.size());
  const int ho = h - k + 1, wo = w - k + 1;
  DW_REQUIRE(ho > 0 && wo > 0, ErrorCode::kInvalidInput,
             "blur_valid: image " + shape_str(x.shape()) + " smaller than filter support " + std::to_string(k));
  // Horizontal pass into tmp [h, wo], then vertical into out [ho, wo].
  Tensor out({n, c, ho, wo});
  std::vector<double> tmp(static_cast<std::size_t>(h) * wo);
  const auto& v = x.value();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          double acc = 0.0;
          for (int t = 0; t < k; ++t) acc += kernel[t] * v.at(b, ch, y, xx + t);
          tmp[y * wo + xx] = acc;
        }
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          double acc = 0.0;
          for (int t = 0; t < k; ++t) acc += kernel[t] * tmp[(y + t) * wo + xx];
          out.at(b, ch, y, xx) = acc;
        }
    }
  return make_result(std::move(out), {x}, [kernel, n, c, h, w, k, ho, wo](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    std::vector<double> gtmp(static_cast<std::size_t>(h) * wo);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        std::fill(gtmp.begin(), gtmp.end(), 0.0);
        for (int y = 0; y < ho; ++y)
          for (int xx = 0; xx < wo; ++xx) {
            const double d = self.grad.at(b, ch, y, xx);
            for (int t = 0; t < k; ++t) gtmp[(y + t) * wo + xx] += kernel[t] * d;
          }
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < wo; ++xx) {
            const double d = gtmp[y * wo + xx];
            for (int t = 0; t < k; ++t) g.at(b, ch, y, xx + t) += kernel[t] * d;
          }
      }
  });
}

Var spatial_mean(const Var& x) {
  require_nchw(x, "spatial_mean");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += x.value()[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return make_result(std::move(out), {x}, [hw](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double d = self.grad[i] / static_cast<double>(hw);
      for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] += d;
    }
  });
}

Var linear_rows(const Var& x, const Var& w) {
  DW_REQUIRE(x.shape().size() == 2 && w.shape().size() == 2 && x.dim(1) == w.dim(1), ErrorCode::kInvalidConfig,
             "linear_rows: " + shape_str(x.shape()) + " x " + shape_str(w.shape()) + "^T");
  const int r = x.dim(0), din = x.dim(1), dout = w.dim(0);
  Tensor out({r, dout});
  MapMat(out.data(), r, dout).noalias() = CMapMat(x.value().data(), r, din) * CMapMat(w.value().data(), dout, din).transpose();
  return make_result(std::move(out), {x, w}, [r, din, dout](Node& self) {
    CMapMat gy(self.grad.data(), r, dout);
    if (self.parents[0]->requires_grad) {
      MapMat(self.parents[0]->ensure_grad().data(), r, din).noalias() +=
          gy * CMapMat(self.parents[1]->value.data(), dout, din);
    }
    if (self.parents[1]->requires_grad) {
      MapMat(self.parents[1]->ensure_grad().data(), dout, din).noalias() +=
          gy.transpose() * CMapMat(self.parents[0]->value.data(), r, din);
    }
  });
}

}  // namespace dw::ag
