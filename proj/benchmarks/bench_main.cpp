#include <benchmark/benchmark.h>

#include "dw/fcm.hpp"
#include "dw/losses.hpp"
#include "dw/models.hpp"

namespace {

using namespace dw;

Tensor random_tensor(const Shape& shape, RandomStream& rng) {
  Tensor t(shape);
  for (double& v : t.vec()) v = rng.uniform(-1, 1);
  return t;
}

void BM_BuildGraph(benchmark::State& state) {
  RandomStream rng(1);
  const int side = static_cast<int>(state.range(0));
  std::vector<Tensor> frames;
  for (int f = 0; f < 3; ++f) frames.push_back(random_tensor({64, side, side}, rng));
  fcm::MatchConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fcm::build_graph(frames, cfg));
}
BENCHMARK(BM_BuildGraph)->Arg(8)->Arg(16);

void BM_Conv3x3(benchmark::State& state) {
  RandomStream rng(2);
  const int c = static_cast<int>(state.range(0));
  const ag::Var x = ag::constant(random_tensor({4, c, 32, 32}, rng));
  const ag::Var w(random_tensor({c, c, 3, 3}, rng), true);
  for (auto _ : state) {
    const ag::Var y = ag::conv2d(x, w, nullptr, 1, 1);
    ag::backward(ag::sum(y));
    benchmark::DoNotOptimize(y.value().data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

void BM_SwLoss(benchmark::State& state) {
  RandomStream rng(3);
  patch::RandomConvExtractor ex(4);
  const auto proj = patch::ProjectionMatrix::random(32, ex.channels(), 5);
  const ag::Var a(random_tensor({4, 3, 32, 32}, rng), true);
  const ag::Var b = ag::constant(random_tensor({4, 3, 32, 32}, rng));
  for (auto _ : state) {
    const ag::Var l = loss::sw_loss(a, b, ex, proj);
    ag::backward(l);
    benchmark::DoNotOptimize(l.item());
  }
}
BENCHMARK(BM_SwLoss);

void BM_CsaClcForward(benchmark::State& state) {
  RandomStream rng(6);
  model::ModelSpec spec;
  spec.kind = model::Kind::kCsaClc;
  spec.num_frames = 3;
  const model::CsaClc net(spec, 7);
  std::vector<ag::Var> frames;
  for (int f = 0; f < 3; ++f) frames.push_back(ag::constant(random_tensor({4, 3, 32, 32}, rng)));
  for (auto _ : state) {
    ag::NoGradGuard guard;
    benchmark::DoNotOptimize(net.forward(frames, frames[1]).pseudo.value().data());
  }
}
BENCHMARK(BM_CsaClcForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
