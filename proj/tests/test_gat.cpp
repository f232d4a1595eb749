#include <gtest/gtest.h>

#include <cmath>

#include "dw/gat.hpp"
#include "oracles.hpp"

namespace dw {
namespace {

using testing::random_tensor;

gat::GatLayerParams random_layer(int d, RandomStream& rng, gat::Activation act = gat::Activation::kElu) {
  return {random_tensor({d, d}, rng, -0.6, 0.6), random_tensor({2 * d}, rng), 0.2, act};
}

double phi(double x, gat::Activation act) { return act == gat::Activation::kElu ? (x > 0 ? x : std::expm1(x)) : x; }

std::vector<double> matvec(const Tensor& w, const std::vector<double>& x) {
  const int r = w.dim(0), c = w.dim(1);
  std::vector<double> y(r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[i] += w[i * c + j] * x[j];
  return y;
}

// One attention layer written straight from the formulas: softmax over the
// neighbours of LeakyReLU(a . [W q || W p_k]), then phi(sum_k alpha_k W p_k).
std::vector<double> layer_oracle(const std::vector<double>& q, const std::vector<std::vector<double>>& nb,
                                 const gat::GatLayerParams& p, std::vector<double>* alpha_out = nullptr) {
  const auto wq = matvec(p.w, q);
  const int d = p.d_out();
  std::vector<std::vector<double>> wp;
  std::vector<double> logits;
  for (const auto& n : nb) {
    wp.push_back(matvec(p.w, n));
    double e = 0.0;
    for (int j = 0; j < d; ++j) e += p.a[j] * wq[j] + p.a[d + j] * wp.back()[j];
    logits.push_back(e > 0 ? e : p.negative_slope * e);
  }
  double z = 0.0;
  for (double e : logits) z += std::exp(e);
  std::vector<double> out(d, 0.0);
  std::vector<double> alpha;
  for (std::size_t k = 0; k < nb.size(); ++k) {
    alpha.push_back(std::exp(logits[k]) / z);
    for (int j = 0; j < d; ++j) out[j] += alpha.back() * wp[k][j];
  }
  for (double& v : out) v = phi(v, p.activation);
  if (alpha_out) *alpha_out = alpha;
  return out;
}

fcm::MatchConfig config(int s, int p, int k, int n) {
  fcm::MatchConfig c;
  c.patch_size = s;
  c.padding = p;
  c.top_k = k;
  c.radius = n;
  return c;
}

TEST(Attention, SingletonIsOne) {
  RandomStream rng(1);
  const auto p = random_layer(3, rng);
  const auto a = gat::attention_coeffs(std::vector<double>{0.1, 0.2, 0.3}, random_tensor({1, 3}, rng), p);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
}

TEST(Attention, IdenticalNeighboursSplitEvenly) {
  RandomStream rng(2);
  const auto p = random_layer(2, rng);
  const auto a = gat::attention_coeffs(std::vector<double>{0.5, -0.1}, Tensor({2, 2}, std::vector<double>{1, 2, 1, 2}), p);
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  EXPECT_NEAR(a[1], 0.5, 1e-12);
}

TEST(Attention, HandComputedScalarCase) {
  const gat::GatLayerParams p{Tensor({1, 1}, 1.0), Tensor({2}, std::vector<double>{0, 1}), 0.2, gat::Activation::kElu};
  const auto a = gat::attention_coeffs(std::vector<double>{1.0}, Tensor({2, 1}, std::vector<double>{1, -1}), p);
  const double z = std::exp(1.0) + std::exp(-0.2);
  EXPECT_NEAR(a[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(a[1], std::exp(-0.2) / z, 1e-12);
  EXPECT_NEAR(a[0], 0.7685, 1e-4);
}

TEST(Attention, RowsSumToOneAndArePositive) {
  RandomStream rng(3);
  for (int t = 0; t < 50; ++t) {
    const int d = rng.range(1, 8), k = rng.range(1, 4);
    const auto p = random_layer(d, rng);
    std::vector<double> q(d);
    for (double& v : q) v = rng.uniform(-2, 2);
    const auto a = gat::attention_coeffs(q, random_tensor({k, d}, rng, -2, 2), p);
    double s = 0.0;
    for (double x : a) {
      EXPECT_GT(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Attention, MatchesFormulaOracle) {
  RandomStream rng(4);
  for (int t = 0; t < 20; ++t) {
    const int d = rng.range(1, 6), k = rng.range(1, 4);
    const auto p = random_layer(d, rng);
    std::vector<double> q(d);
    for (double& v : q) v = rng.uniform(-1, 1);
    const Tensor nb = random_tensor({k, d}, rng);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < k; ++i) rows.emplace_back(nb.data() + i * d, nb.data() + (i + 1) * d);
    std::vector<double> alpha;
    const auto want = layer_oracle(q, rows, p, &alpha);
    const auto a = gat::attention_coeffs(q, nb, p);
    const auto z = gat::aggregate(q, nb, a, p);
    for (int i = 0; i < k; ++i) EXPECT_NEAR(a[i], alpha[i], 1e-12);
    for (int j = 0; j < d; ++j) EXPECT_NEAR(z[j], want[j], 1e-10);
  }
}

TEST(Aggregate, SingleNeighbourIdentityActivation) {
  RandomStream rng(5);
  const auto p = random_layer(3, rng, gat::Activation::kIdentity);
  const Tensor nb = random_tensor({1, 3}, rng);
  const auto z = gat::aggregate(std::vector<double>{0, 0, 0}, nb, std::vector<double>{1.0}, p);
  const auto want = matvec(p.w, {nb[0], nb[1], nb[2]});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(z[j], want[j], 1e-14);
}

TEST(Aggregate, EqualNeighboursIgnoreWeights) {
  RandomStream rng(6);
  const auto p = random_layer(2, rng);
  const Tensor nb({3, 2}, std::vector<double>{0.4, -0.3, 0.4, -0.3, 0.4, -0.3});
  const auto z = gat::aggregate(std::vector<double>{1, 1}, nb, std::vector<double>{0.2, 0.5, 0.3}, p);
  const auto wp = matvec(p.w, {0.4, -0.3});
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(z[j], phi(wp[j], p.activation), 1e-14);
}

TEST(Attention, ShiftInvariantSoftmax) {
  // With only a_p[0] and a_q[0] non-zero, turning on a_q[0] adds (W q)_0 to
  // every logit. Positive W, q and p_k keep every logit positive so the
  // LeakyReLU stays linear.
  RandomStream rng(7);
  int checked = 0;
  for (int t = 0; t < 20; ++t) {
    auto p = random_layer(3, rng);
    for (double& v : p.w.vec()) v = std::abs(v) + 0.05;
    std::fill(p.a.vec().begin(), p.a.vec().end(), 0.0);
    p.a[3] = 1.0;
    auto shifted = p;
    shifted.a[0] = 1.0;
    const std::vector<double> q{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    const Tensor nb = random_tensor({4, 3}, rng, 0.0, 1.0);
    const double wq0 = matvec(p.w, q)[0];
    bool positive = true;
    for (int k = 0; k < 4; ++k) {
      const double e = matvec(p.w, {nb[k * 3], nb[k * 3 + 1], nb[k * 3 + 2]})[0];
      positive = positive && e > 0 && e + wq0 > 0;
    }
    if (!positive) continue;
    const auto a0 = gat::attention_coeffs(q, nb, p), a1 = gat::attention_coeffs(q, nb, shifted);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(a0[k], a1[k], 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(CsaForward, IdentityLayersOnIdenticalFramesSquareTheMap) {
  RandomStream rng(8);
  const Tensor f = random_tensor({2, 4, 4}, rng);
  const auto g = fcm::build_graph({f, f, f}, config(2, 0, 2, 1));
  const auto id = gat::GatLayerParams::identity(8);
  const auto out = gat::csa_forward({f, f, f}, g, {id, id});
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out.f_agg[i], f[i] * f[i], 1e-12);
}

TEST(CsaForward, MatchesPerSubgraphOracle) {
  RandomStream rng(9);
  const auto frames = std::vector<Tensor>{random_tensor({2, 4, 6}, rng), random_tensor({2, 4, 6}, rng),
                                          random_tensor({2, 4, 6}, rng)};
  const auto g = fcm::build_graph(frames, config(2, 1, 3, 1));
  const int d = g.dim();
  const std::array<gat::GatLayerParams, 2> layers{random_layer(d, rng), random_layer(d, rng)};
  const auto got = gat::csa_forward(frames, g, layers);

  patch::PatchSet z = g.queries;
  for (int i = 0; i < g.count(); ++i) {
    const auto qr = g.queries.row(i);
    std::vector<double> q(qr.begin(), qr.end());
    std::vector<std::vector<double>> nb, nb1;
    for (int k = 0; k < 3; ++k) {
      nb.emplace_back(g.neighbors.data() + (i * 3 + k) * d, g.neighbors.data() + (i * 3 + k + 1) * d);
      auto h = matvec(layers[0].w, nb.back());
      for (double& v : h) v = phi(v, layers[0].activation);
      nb1.push_back(h);
    }
    const auto z1 = layer_oracle(q, nb, layers[0]);
    const auto z2 = layer_oracle(z1, nb1, layers[1]);
    for (int j = 0; j < d; ++j) {
      EXPECT_NEAR(got.z[i * d + j], z2[j], 1e-10);
      z.patches[i * d + j] = z2[j];
    }
  }
  const Tensor folded = patch::fold(z);
  for (std::size_t e = 0; e < folded.size(); ++e) EXPECT_NEAR(got.f_agg[e], folded[e] * frames[1][e], 1e-10);
}

TEST(CsaForward, NeighbourOrderDoesNotMatter) {
  RandomStream rng(10);
  const auto frames = std::vector<Tensor>{random_tensor({1, 4, 4}, rng), random_tensor({1, 4, 4}, rng),
                                          random_tensor({1, 4, 4}, rng)};
  auto g = fcm::build_graph(frames, config(2, 1, 3, 1));
  const int d = g.dim();
  const std::array<gat::GatLayerParams, 2> layers{random_layer(d, rng), random_layer(d, rng)};
  const auto before = gat::csa_forward(frames, g, layers);
  // Reverse every query's neighbour list.
  for (int i = 0; i < g.count(); ++i)
    for (int j = 0; j < d; ++j) std::swap(g.neighbors[(i * 3) * d + j], g.neighbors[(i * 3 + 2) * d + j]);
  const auto after = gat::csa_forward(frames, g, layers);
  for (std::size_t e = 0; e < before.z.size(); ++e) EXPECT_NEAR(before.z[e], after.z[e], 1e-6);
}

TEST(CsaForward, SingleCoLocatedNeighbourHasFullWeight) {
  RandomStream rng(11);
  const Tensor f = random_tensor({1, 4, 4}, rng);
  const auto g = fcm::build_graph({f, f, f}, config(2, 0, 1, 1));
  const auto p = random_layer(4, rng);
  const auto res = gat::csa_forward({f, f, f}, g, {p, p});
  for (int i = 0; i < g.count(); ++i) {
    const auto row = g.queries.row(i);
    auto h = matvec(p.w, std::vector<double>(row.begin(), row.end()));
    for (double& v : h) v = phi(v, p.activation);
    auto z = matvec(p.w, h);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(res.z[i * 4 + j], phi(z[j], p.activation), 1e-12);
  }
}

TEST(CsaForward, LayerWidthMismatchIsConfigError) {
  RandomStream rng(12);
  const Tensor f = random_tensor({1, 4, 4}, rng);
  const auto g = fcm::build_graph({f, f, f}, config(2, 0, 1, 1));
  const std::array<gat::GatLayerParams, 2> bad{random_layer(4, rng), random_layer(3, rng)};
  try {
    gat::csa_forward({f, f, f}, g, bad);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
}

TEST(MeanBaseline, SingleAndOpposingNeighbours) {
  RandomStream rng(13);
  const auto frames = std::vector<Tensor>{random_tensor({1, 4, 4}, rng), random_tensor({1, 4, 4}, rng),
                                          random_tensor({1, 4, 4}, rng)};
  auto g = fcm::build_graph(frames, config(2, 1, 1, 1));
  auto m = gat::mean_aggregate_baseline(g);
  EXPECT_EQ(m.z.vec(), g.neighbors.vec());

  g = fcm::build_graph(frames, config(2, 1, 2, 1));
  for (int i = 0; i < g.count(); ++i)
    for (int j = 0; j < 4; ++j) g.neighbors[(i * 2 + 1) * 4 + j] = -g.neighbors[(i * 2) * 4 + j];
  m = gat::mean_aggregate_baseline(g);
  for (double v : m.z.vec()) EXPECT_EQ(v, 0.0);
}

TEST(MeanBaseline, BatchedFormAgrees) {
  RandomStream rng(14);
  const auto frames = std::vector<Tensor>{random_tensor({2, 4, 4}, rng), random_tensor({2, 4, 4}, rng),
                                          random_tensor({2, 4, 4}, rng)};
  const auto g = fcm::build_graph(frames, config(2, 1, 3, 1));
  const auto plain = gat::mean_aggregate_baseline(g);
  std::vector<ag::Var> maps;
  for (const auto& f : frames) maps.push_back(ag::constant(f.reshaped({1, 2, 4, 4})));
  const auto batched = gat::mean_forward(maps, {g}, 2);
  for (std::size_t e = 0; e < plain.f_agg.size(); ++e) EXPECT_NEAR(batched.f_agg.value()[e], plain.f_agg[e], 1e-12);
}

TEST(GatGradient, AttendMatchesFiniteDifferences) {
  RandomStream rng(15);
  const int r = 2, k = 3, d = 4;
  const Tensor weights = random_tensor({r, d}, rng);
  const auto loss = [&](const std::vector<ag::Var>& x) {
    const ag::Var z = gat::activate(gat::attend(x[0], x[1], x[2], x[3], 0.2), gat::Activation::kElu);
    return ag::sum(ag::mul(z, ag::constant(weights)));
  };
  const double err = testing::gradient_check(
      loss, {random_tensor({r, d}, rng), random_tensor({r, k, d}, rng), random_tensor({d, d}, rng, -0.7, 0.7),
             random_tensor({2 * d}, rng)});
  EXPECT_LT(err, 1e-4);
}

TEST(GatGradient, TwoLayerForwardMatchesFiniteDifferences) {
  RandomStream rng(16);
  const auto f0 = random_tensor({1, 1, 4, 4}, rng), f1 = random_tensor({1, 1, 4, 4}, rng),
             f2 = random_tensor({1, 1, 4, 4}, rng);
  const auto g = fcm::build_graph({f0.reshaped({1, 4, 4}), f1.reshaped({1, 4, 4}), f2.reshaped({1, 4, 4})},
                                  config(2, 1, 2, 1));
  const Tensor weights = random_tensor({1, 1, 4, 4}, rng);
  const auto loss = [&](const std::vector<ag::Var>& x) {
    const std::array<gat::GatLayer, 2> layers{gat::GatLayer{x[3], x[4], 0.2, gat::Activation::kElu},
                                              gat::GatLayer{x[5], x[6], 0.2, gat::Activation::kElu}};
    const auto res = gat::csa_forward({x[0], x[1], x[2]}, {g}, layers, 2);
    return ag::sum(ag::mul(res.f_agg, ag::constant(weights)));
  };
  const double err = testing::gradient_check(
      loss, {f0, f1, f2, random_tensor({4, 4}, rng, -0.7, 0.7), random_tensor({8}, rng),
             random_tensor({4, 4}, rng, -0.7, 0.7), random_tensor({8}, rng)});
  EXPECT_LT(err, 1e-4);
}

}  // namespace
}  // namespace dw
