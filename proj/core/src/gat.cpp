#include "dw/gat.hpp"

#include <algorithm>
#include <cmath>

namespace dw::gat {

namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

// Per sub-graph forward state kept for the backward pass.
struct SubgraphCache {
  std::vector<double> u;      // W q        [d_out]
  std::vector<double> v;      // W p_k      [K * d_out]
  std::vector<double> e;      // a.[u||v_k] [K]
  std::vector<double> alpha;  // [K]
};

void matvec(const double* w, int d_out, int d_in, const double* x, double* y) {
  for (int r = 0; r < d_out; ++r) {
    double acc = 0.0;
    const double* row = w + static_cast<std::size_t>(r) * d_in;
    for (int c = 0; c < d_in; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Softmax of LeakyReLU(e) with max subtraction; throws on non-finite logits.
void softmax_leaky(const std::vector<double>& e, double slope, std::vector<double>& alpha) {
  const std::size_t k = e.size();
  alpha.resize(k);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < k; ++i) {
    alpha[i] = leaky(e[i], slope);
    DW_REQUIRE(std::isfinite(alpha[i]), ErrorCode::kNumericOverflow, "non-finite attention logit");
    mx = std::max(mx, alpha[i]);
  }
  double z = 0.0;
  for (double& x : alpha) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : alpha) x /= z;
}

void forward_subgraph(const double* q, const double* nb, int k, int d_in, int d_out, const double* w, const double* a,
                      double slope, SubgraphCache& c) {
  c.u.assign(d_out, 0.0);
  c.v.assign(static_cast<std::size_t>(k) * d_out, 0.0);
  c.e.assign(k, 0.0);
  matvec(w, d_out, d_in, q, c.u.data());
  double qa = 0.0;
  for (int j = 0; j < d_out; ++j) qa += a[j] * c.u[j];
  for (int n = 0; n < k; ++n) {
    double* vn = c.v.data() + static_cast<std::size_t>(n) * d_out;
    matvec(w, d_out, d_in, nb + static_cast<std::size_t>(n) * d_in, vn);
    double pa = 0.0;
    for (int j = 0; j < d_out; ++j) pa += a[d_out + j] * vn[j];
    c.e[n] = qa + pa;
  }
  softmax_leaky(c.e, slope, c.alpha);
}

}  // namespace

void GatLayerParams::validate() const {
  DW_REQUIRE(w.rank() == 2 && a.rank() == 1 && a.dim(0) == 2 * w.dim(0), ErrorCode::kInvalidConfig,
             "GAT parameters: W " + shape_str(w.shape()) + " incompatible with a " + shape_str(a.shape()));
  for (double x : w.vec()) DW_REQUIRE(std::isfinite(x), ErrorCode::kInvalidConfig, "non-finite GAT weight");
  for (double x : a.vec()) DW_REQUIRE(std::isfinite(x), ErrorCode::kInvalidConfig, "non-finite GAT weight");
}

GatLayerParams GatLayerParams::identity(int d) {
  GatLayerParams p{Tensor({d, d}), Tensor({2 * d}), 0.2, Activation::kIdentity};
  for (int i = 0; i < d; ++i) p.w[static_cast<std::size_t>(i) * d + i] = 1.0;
  return p;
}

double activate(double x, Activation act) {
  if (act == Activation::kIdentity) return x;
  return x > 0.0 ? x : std::expm1(x);
}

std::vector<double> attention_coeffs(std::span<const double> query, const Tensor& neighbors,
                                     const GatLayerParams& params) {
  params.validate();
  DW_REQUIRE(neighbors.rank() == 2 && neighbors.dim(0) >= 1, ErrorCode::kInvalidInput, "need K >= 1 neighbours");
  DW_REQUIRE(static_cast<int>(query.size()) == params.d_in() && neighbors.dim(1) == params.d_in(),
             ErrorCode::kInvalidConfig, "GAT input width mismatch");
  SubgraphCache c;
  forward_subgraph(query.data(), neighbors.data(), neighbors.dim(0), params.d_in(), params.d_out(), params.w.data(),
                   params.a.data(), params.negative_slope, c);
  return c.alpha;
}

std::vector<double> aggregate(std::span<const double> query, const Tensor& neighbors, std::span<const double> alpha,
                              const GatLayerParams& params) {
  (void)query;  // the query only enters through alpha
  const int k = neighbors.dim(0), d_in = params.d_in(), d_out = params.d_out();
  DW_REQUIRE(static_cast<int>(alpha.size()) == k, ErrorCode::kInvalidInput, "alpha length != K");
  std::vector<double> h(d_out, 0.0), v(d_out);
  for (int n = 0; n < k; ++n) {
    matvec(params.w.data(), d_out, d_in, neighbors.data() + static_cast<std::size_t>(n) * d_in, v.data());
    for (int j = 0; j < d_out; ++j) h[j] += alpha[n] * v[j];
  }
  for (double& x : h) x = activate(x, params.activation);
  return h;
}

ag::Var attend(const ag::Var& queries, const ag::Var& neighbors, const ag::Var& w, const ag::Var& a,
               double negative_slope) {
  DW_REQUIRE(queries.shape().size() == 2 && neighbors.shape().size() == 3 && w.shape().size() == 2,
             ErrorCode::kInvalidConfig, "attend: bad ranks");
  const int r = queries.dim(0), d_in = queries.dim(1), k = neighbors.dim(1), d_out = w.dim(0);
  DW_REQUIRE(neighbors.dim(0) == r && neighbors.dim(2) == d_in && w.dim(1) == d_in && a.size() == 2u * d_out,
             ErrorCode::kInvalidConfig,
             "attend: queries " + shape_str(queries.shape()) + ", neighbours " + shape_str(neighbors.shape()) +
                 ", W " + shape_str(w.shape()) + " do not line up");
  DW_REQUIRE(k >= 1, ErrorCode::kInvalidInput, "attend: need K >= 1");

  auto caches = std::make_shared<std::vector<SubgraphCache>>(r);
  Tensor out({r, d_out});
  for (int i = 0; i < r; ++i) {
    SubgraphCache& c = (*caches)[i];
    forward_subgraph(queries.value().data() + static_cast<std::size_t>(i) * d_in,
                     neighbors.value().data() + static_cast<std::size_t>(i) * k * d_in, k, d_in, d_out,
                     w.value().data(), a.value().data(), negative_slope, c);
    double* h = out.data() + static_cast<std::size_t>(i) * d_out;
    for (int n = 0; n < k; ++n)
      for (int j = 0; j < d_out; ++j) h[j] += c.alpha[n] * c.v[static_cast<std::size_t>(n) * d_out + j];
  }

  return ag::make_result(std::move(out), {queries, neighbors, w, a},
                         [caches, r, d_in, d_out, k, negative_slope](ag::Node& self) {
    const Tensor& qv = self.parents[0]->value;
    const Tensor& nv = self.parents[1]->value;
    const Tensor& wv = self.parents[2]->value;
    const Tensor& av = self.parents[3]->value;
    const bool want_q = self.parents[0]->requires_grad, want_n = self.parents[1]->requires_grad;
    const bool want_w = self.parents[2]->requires_grad, want_a = self.parents[3]->requires_grad;
    Tensor* gq = want_q ? &self.parents[0]->ensure_grad() : nullptr;
    Tensor* gn = want_n ? &self.parents[1]->ensure_grad() : nullptr;
    Tensor* gw = want_w ? &self.parents[2]->ensure_grad() : nullptr;
    Tensor* ga = want_a ? &self.parents[3]->ensure_grad() : nullptr;

    std::vector<double> g_alpha(k), g_e(k), gu(d_out), gv(static_cast<std::size_t>(k) * d_out);
    for (int i = 0; i < r; ++i) {
      const SubgraphCache& c = (*caches)[i];
      const double* gh = self.grad.data() + static_cast<std::size_t>(i) * d_out;
      const double* q = qv.data() + static_cast<std::size_t>(i) * d_in;
      const double* nb = nv.data() + static_cast<std::size_t>(i) * k * d_in;

      // h = sum_k alpha_k v_k
      double dot_sum = 0.0;
      for (int n = 0; n < k; ++n) {
        double acc = 0.0;
        const double* vn = c.v.data() + static_cast<std::size_t>(n) * d_out;
        for (int j = 0; j < d_out; ++j) {
          acc += gh[j] * vn[j];
          gv[static_cast<std::size_t>(n) * d_out + j] = c.alpha[n] * gh[j];
        }
        g_alpha[n] = acc;
        dot_sum += c.alpha[n] * acc;
      }
      // softmax, then LeakyReLU
      double ge_sum = 0.0;
      for (int n = 0; n < k; ++n) {
        g_e[n] = c.alpha[n] * (g_alpha[n] - dot_sum) * (c.e[n] > 0.0 ? 1.0 : negative_slope);
        ge_sum += g_e[n];
      }
      // e_k = a_q . u + a_p . v_k
      for (int j = 0; j < d_out; ++j) gu[j] = ge_sum * av[j];
      for (int n = 0; n < k; ++n)
        for (int j = 0; j < d_out; ++j) gv[static_cast<std::size_t>(n) * d_out + j] += g_e[n] * av[d_out + j];
      if (ga) {
        for (int j = 0; j < d_out; ++j) (*ga)[j] += ge_sum * c.u[j];
        for (int n = 0; n < k; ++n)
          for (int j = 0; j < d_out; ++j) (*ga)[d_out + j] += g_e[n] * c.v[static_cast<std::size_t>(n) * d_out + j];
      }
      // u = W q, v_k = W p_k
      if (gw) {
        for (int j = 0; j < d_out; ++j) {
          double* row = gw->data() + static_cast<std::size_t>(j) * d_in;
          for (int m = 0; m < d_in; ++m) row[m] += gu[j] * q[m];
          for (int n = 0; n < k; ++n) {
            const double g = gv[static_cast<std::size_t>(n) * d_out + j];
            const double* p = nb + static_cast<std::size_t>(n) * d_in;
            for (int m = 0; m < d_in; ++m) row[m] += g * p[m];
          }
        }
      }
      if (gq) {
        double* dst = gq->data() + static_cast<std::size_t>(i) * d_in;
        for (int j = 0; j < d_out; ++j) {
          const double* row = wv.data() + static_cast<std::size_t>(j) * d_in;
          for (int m = 0; m < d_in; ++m) dst[m] += gu[j] * row[m];
        }
      }
      if (gn) {
        for (int n = 0; n < k; ++n) {
          double* dst = gn->data() + (static_cast<std::size_t>(i) * k + n) * d_in;
          for (int j = 0; j < d_out; ++j) {
            const double g = gv[static_cast<std::size_t>(n) * d_out + j];
            const double* row = wv.data() + static_cast<std::size_t>(j) * d_in;
            for (int m = 0; m < d_in; ++m) dst[m] += g * row[m];
          }
        }
      }
    }
  });
}

ag::Var activate(const ag::Var& x, Activation act) { return act == Activation::kElu ? ag::elu(x) : x; }

ag::Var gather_neighbors(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                         int patch_size) {
  DW_REQUIRE(!frames.empty() && !graphs.empty(), ErrorCode::kInvalidInput, "gather_neighbors: empty input");
  const Shape& shape = frames[0].shape();
  const int b = shape[0], c = shape[1], h = shape[2], w = shape[3], s = patch_size;
  DW_REQUIRE(static_cast<int>(graphs.size()) == b, ErrorCode::kInvalidInput, "one graph per sample required");
  for (const auto& f : frames) DW_REQUIRE(f.shape() == shape, ErrorCode::kInvalidGeometry, "frame maps differ in shape");
  const int n = graphs[0].count(), k = graphs[0].top_k, d = c * s * s;
  for (const auto& g : graphs) {
    DW_REQUIRE(g.count() == n && g.top_k == k && g.dim() == d, ErrorCode::kInvalidGeometry, "graph shapes differ");
  }

  // Flat source offsets into frames[f] for every output element.
  struct Src {
    int frame;
    std::size_t offset;
  };
  auto index = std::make_shared<std::vector<Src>>();
  index->reserve(static_cast<std::size_t>(b) * n * k * d);
  for (int bi = 0; bi < b; ++bi)
    for (const auto& ref : graphs[bi].refs)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x)
            index->push_back({ref.frame, ((static_cast<std::size_t>(bi) * c + ch) * h + ref.y + y) * w + ref.x + x});

  Tensor out({b * n, k, d});
  for (std::size_t j = 0; j < index->size(); ++j) out[j] = frames[(*index)[j].frame].value()[(*index)[j].offset];
  return ag::make_result(std::move(out), frames, [index](ag::Node& self) {
    for (std::size_t j = 0; j < index->size(); ++j) {
      const auto& src = (*index)[j];
      if (self.parents[src.frame]->requires_grad) self.parents[src.frame]->ensure_grad()[src.offset] += self.grad[j];
    }
  });
}

GatLayer GatLayer::from_params(const GatLayerParams& p, bool trainable) {
  p.validate();
  return {ag::Var(p.w, trainable), ag::Var(p.a, trainable), p.negative_slope, p.activation};
}

GatLayerParams GatLayer::params() const { return {w.value(), a.value(), negative_slope, activation}; }

CsaResult csa_forward(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                      const std::array<GatLayer, 2>& layers, int patch_size) {
  DW_REQUIRE(frames.size() % 2 == 1, ErrorCode::kInvalidInput, "csa_forward: need 2n+1 frames");
  const ag::Var& current = frames[frames.size() / 2];
  const int d = current.dim(1) * patch_size * patch_size;
  for (const auto& l : layers) {
    DW_REQUIRE(l.w.dim(0) == d && l.w.dim(1) == d, ErrorCode::kInvalidConfig,
               "GAT layers must map " + std::to_string(d) + " -> " + std::to_string(d) + ", got W " +
                   shape_str(l.w.shape()));
  }
  const ag::Var queries = patch::unfold_nonoverlap(current, patch_size);
  const ag::Var neighbors = gather_neighbors(frames, graphs, patch_size);
  const int r = neighbors.dim(0), k = neighbors.dim(1);

  const auto& l1 = layers[0];
  const ag::Var z1 = activate(attend(queries, neighbors, l1.w, l1.a, l1.negative_slope), l1.activation);
  const ag::Var nb1 = ag::reshape(
      activate(ag::linear_rows(ag::reshape(neighbors, {r * k, d}), l1.w), l1.activation), {r, k, d});

  const auto& l2 = layers[1];
  const ag::Var z2 = activate(attend(z1, nb1, l2.w, l2.a, l2.negative_slope), l2.activation);
  const ag::Var gate = patch::fold_nonoverlap(z2, current.shape(), patch_size);
  return {ag::mul(current, gate), z2};
}

CsaResult mean_forward(const std::vector<ag::Var>& frames, const std::vector<fcm::PatchGraphSet>& graphs,
                       int patch_size) {
  DW_REQUIRE(frames.size() % 2 == 1, ErrorCode::kInvalidInput, "mean_forward: need 2n+1 frames");
  const ag::Var& current = frames[frames.size() / 2];
  const ag::Var neighbors = gather_neighbors(frames, graphs, patch_size);
  const int r = neighbors.dim(0), k = neighbors.dim(1), d = neighbors.dim(2);
  Tensor z({r, d});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(i) * d + c] += neighbors.value()[(static_cast<std::size_t>(i) * k + j) * d + c] / k;
  const ag::Var zv = ag::make_result(std::move(z), {neighbors}, [r, k, d](ag::Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < d; ++c) g[(static_cast<std::size_t>(i) * k + j) * d + c] += self.grad[static_cast<std::size_t>(i) * d + c] / k;
  });
  const ag::Var gate = patch::fold_nonoverlap(zv, current.shape(), patch_size);
  return {ag::mul(current, gate), zv};
}

AggregatedFeature csa_forward(const std::vector<Tensor>& frames, const fcm::PatchGraphSet& graph,
                              const std::array<GatLayerParams, 2>& layers) {
  ag::NoGradGuard guard;
  std::vector<ag::Var> maps;
  for (const auto& f : frames) {
    DW_REQUIRE(f.rank() == 3, ErrorCode::kInvalidGeometry, "csa_forward: expected C x H x W maps");
    maps.push_back(ag::constant(f.reshaped({1, f.dim(0), f.dim(1), f.dim(2)})));
  }
  const std::array<GatLayer, 2> l{GatLayer::from_params(layers[0], false), GatLayer::from_params(layers[1], false)};
  const CsaResult res = csa_forward(maps, {graph}, l, graph.queries.size);
  const Shape& s = res.f_agg.shape();
  return {res.f_agg.value().reshaped({s[1], s[2], s[3]}), res.z.value()};
}

AggregatedFeature mean_aggregate_baseline(const fcm::PatchGraphSet& graph) {
  const int n = graph.count(), k = graph.top_k, d = graph.dim();
  patch::PatchSet z = graph.queries;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int r = 0; r < k; ++r) acc += graph.neighbors[(static_cast<std::size_t>(i) * k + r) * d + j];
      z.patches[static_cast<std::size_t>(i) * d + j] = acc / k;
    }
  const Tensor current = patch::fold(graph.queries);
  Tensor gate = patch::fold(z);
  for (std::size_t i = 0; i < gate.size(); ++i) gate[i] *= current[i];
  return {std::move(gate), z.patches};
}

}  // namespace dw::gat
