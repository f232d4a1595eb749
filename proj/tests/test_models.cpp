#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dw/checkpoint.hpp"
#include "dw/models.hpp"
#include "oracles.hpp"

namespace dw {
namespace {

using testing::random_tensor;

model::ModelSpec small_spec(model::Kind kind, int radius = 1) {
  model::ModelSpec s;
  s.kind = kind;
  s.backbone.base_channels = 4;
  s.backbone.depth = 2;
  s.backbone.resblocks_per_stage = 1;
  s.match.radius = radius;
  s.num_frames = kind == model::Kind::kDew ? 1 : 2 * radius + 1;
  return s;
}

std::vector<ag::Var> random_frames(int count, const Shape& shape, RandomStream& rng) {
  std::vector<ag::Var> f;
  for (int i = 0; i < count; ++i) f.push_back(ag::constant(random_tensor(shape, rng)));
  return f;
}

TEST(Models, OutputShapes) {
  RandomStream rng(1);
  const Shape in{2, 3, 16, 16};
  const auto frames = random_frames(3, in, rng);

  model::Clc clc(small_spec(model::Kind::kClc), 1);
  EXPECT_EQ(clc.forward(frames).shape(), in);

  model::CsaClc csa(small_spec(model::Kind::kCsaClc), 2);
  const auto out = csa.forward(frames, frames[1]);
  EXPECT_EQ(out.pseudo.shape(), in);
  EXPECT_EQ(out.f_agg.shape(), (Shape{2, 16, 4, 4}));
  EXPECT_EQ(out.f_t.shape(), out.f_agg.shape());
  EXPECT_EQ(out.f_gt.shape(), out.f_agg.shape());

  model::Dew dew(small_spec(model::Kind::kDew), 3);
  const auto d = dew.forward(frames[0]);
  EXPECT_EQ(d.restored.shape(), in);
  EXPECT_EQ(d.bottleneck.shape(), (Shape{2, 16, 4, 4}));
}

TEST(Models, ZeroHeadReproducesTheReferenceFrame) {
  RandomStream rng(2);
  auto spec = small_spec(model::Kind::kDew);
  spec.zero_final = true;
  const ag::Var x = ag::constant(random_tensor({1, 3, 16, 16}, rng, -0.9, 0.9));
  model::Dew dew(spec, 4);
  const auto y = dew.forward(x).restored.value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], x.value()[i], 1e-12);

  spec.backbone.input_skip = false;
  model::Dew plain(spec, 4);
  const Tensor zero = plain.forward(x).restored.value();
  for (double v : zero.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Models, ZeroFramesGiveZeroWithZeroHead) {
  auto spec = small_spec(model::Kind::kCsaClc);
  spec.zero_final = true;
  model::CsaClc csa(spec, 5);
  const ag::Var z = ag::constant(Tensor({1, 3, 16, 16}, 0.0));
  const Tensor out = csa.forward({z, z, z}, z).pseudo.value();
  for (double v : out.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Models, RestoredOutputIsOpenInterval) {
  RandomStream rng(3);
  model::Dew dew(small_spec(model::Kind::kDew), 6);
  const auto y = dew.forward(ag::constant(random_tensor({1, 3, 16, 16}, rng))).restored.value();
  for (double v : y.vec()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Models, CsaClcSharesOneEncoder) {
  RandomStream rng(4);
  const auto frames = random_frames(3, {1, 3, 16, 16}, rng);
  const ag::Var gt = ag::constant(random_tensor({1, 3, 16, 16}, rng));
  model::CsaClc csa(small_spec(model::Kind::kCsaClc), 7);
  const auto out = csa.forward(frames, gt);
  EXPECT_EQ(out.f_t.value().vec(), csa.encoder()(frames[1], false).back().value().vec());
  EXPECT_EQ(out.f_gt.value().vec(), csa.encoder()(gt, false).back().value().vec());
  const auto same = csa.forward(frames, frames[1]);
  EXPECT_EQ(same.f_gt.value().vec(), same.f_t.value().vec());
}

TEST(Models, ClcUsesOneEncoderPerFrame) {
  // Each extra frame adds a full encoder; CSA-CLC does not grow.
  const auto c1 = model::Clc(small_spec(model::Kind::kClc, 1), 1).parameter_count();
  const auto c2 = model::Clc(small_spec(model::Kind::kClc, 2), 1).parameter_count();
  const auto enc = model::Dew(small_spec(model::Kind::kDew), 1).parameter_count();
  EXPECT_GT(c2 - c1, enc / 4);
  EXPECT_EQ(model::CsaClc(small_spec(model::Kind::kCsaClc, 1), 1).parameter_count(),
            model::CsaClc(small_spec(model::Kind::kCsaClc, 2), 1).parameter_count());
}

TEST(Models, SeededInitialisationIsDeterministic) {
  const model::CsaClc a(small_spec(model::Kind::kCsaClc), 9), b(small_spec(model::Kind::kCsaClc), 9),
      c(small_spec(model::Kind::kCsaClc), 10);
  ASSERT_EQ(a.parameter_count(), b.parameter_count());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameters().entries().size(); ++i) {
    const auto& ea = a.parameters().entries()[i];
    EXPECT_EQ(ea.var.value().vec(), b.parameters().entries()[i].var.value().vec()) << ea.name;
    any_diff |= ea.var.value().vec() != c.parameters().entries()[i].var.value().vec();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Models, IndivisibleInputIsGeometryError) {
  RandomStream rng(5);
  const auto frames = random_frames(3, {1, 3, 12, 16}, rng);
  model::CsaClc csa(small_spec(model::Kind::kCsaClc), 11);
  try {
    csa.forward(frames, frames[1]);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidGeometry);
  }
}

TEST(Models, WrongFrameCountIsConfigError) {
  RandomStream rng(6);
  const auto frames = random_frames(2, {1, 3, 16, 16}, rng);
  model::Clc clc(small_spec(model::Kind::kClc), 12);
  EXPECT_THROW(clc.forward(frames), Error);
  auto bad = small_spec(model::Kind::kCsaClc);
  bad.num_frames = 5;
  EXPECT_THROW(model::CsaClc(bad, 1), Error);
}

TEST(Models, ParseNames) {
  EXPECT_EQ(model::parse_kind("csaclc"), model::Kind::kCsaClc);
  EXPECT_EQ(model::parse_aggregator(model::to_string(model::Aggregator::kMean)), model::Aggregator::kMean);
  EXPECT_THROW(model::parse_norm("layer"), Error);
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
  RandomStream rng(7);
  const auto frames = random_frames(3, {1, 3, 16, 16}, rng);
  auto spec = small_spec(model::Kind::kCsaClc);
  spec.backbone.norm = model::Norm::kBatch;
  spec.match.padding = 2;
  const model::CsaClc net(spec, 13);
  const auto path = std::filesystem::temp_directory_path() / "dw_test_roundtrip.dwck";
  ckpt::save(path, net, {{"epoch", "3"}});

  const auto loaded = ckpt::load(path);
  EXPECT_EQ(loaded.info.at("epoch"), "3");
  const auto* back = dynamic_cast<const model::CsaClc*>(loaded.net.get());
  ASSERT_NE(back, nullptr);
  EXPECT_EQ(back->spec().match.padding, 2);
  EXPECT_EQ(back->spec().backbone.norm, model::Norm::kBatch);
  EXPECT_EQ(back->spec().backbone.input_skip, spec.backbone.input_skip);
  EXPECT_EQ(back->parameter_count(), net.parameter_count());
  EXPECT_EQ(back->forward(frames, frames[1]).pseudo.value().vec(), net.forward(frames, frames[1]).pseudo.value().vec());
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto path = std::filesystem::temp_directory_path() / "dw_test_foreign.dwck";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(ckpt::load(path), Error);
  EXPECT_THROW(ckpt::load(path.string() + ".missing"), Error);
}

}  // namespace
}  // namespace dw
