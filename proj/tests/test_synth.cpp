#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dw/synth.hpp"

namespace dw {
namespace {

namespace fs = std::filesystem;
using synth::Inconsistency;
using synth::InconsistencySet;
using synth::Weather;

synth::SceneSpec spec_with(InconsistencySet kinds, Weather w = Weather::kRain, std::uint64_t seed = 5) {
  synth::SceneSpec s;
  s.scene_id = "s";
  s.weather = w;
  s.inconsistency = kinds;
  s.rng_seed = seed;
  return s;
}

Image noise_image(int h, int w, std::uint64_t seed) {
  RandomStream rng(seed);
  Image img(h, w);
  for (double& v : img.pixels()) v = rng.uniform(0.05, 0.95);
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dw_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Render, DeterministicAndInRange) {
  const auto s = spec_with(InconsistencySet::all());
  const Image a = synth::render_clean_scene(s, 1), b = synth::render_clean_scene(s, 1);
  EXPECT_EQ(a, b);
  for (double v : a.pixels()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Render, MovingObjectOnlyChangesItsBoxes) {
  const auto s = spec_with({Inconsistency::kObjectMotion});
  const Image a = synth::render_clean_scene(s, 0), b = synth::render_clean_scene(s, 2);
  const auto ba = synth::moving_object_box(s, 0), bb = synth::moving_object_box(s, 2);
  ASSERT_TRUE(ba && bb);
  const auto inside = [](const synth::Box& bx, int y, int x) { return y >= bx.y0 && y <= bx.y1 && x >= bx.x0 && x <= bx.x1; };
  int changed = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        if (a.at(c, y, x) == b.at(c, y, x)) continue;
        ++changed;
        EXPECT_TRUE(inside(*ba, y, x) || inside(*bb, y, x)) << "pixel " << y << "," << x;
      }
  EXPECT_GT(changed, 0);
}

TEST(Render, StaticSceneWithoutInconsistency) {
  const auto s = spec_with({});
  EXPECT_FALSE(synth::moving_object_box(s, 0));
  for (int t = 0; t < s.num_frames; ++t) EXPECT_EQ(synth::render_clean_scene(s, t), synth::render_clean_scene(s, s.radius()));
}

TEST(Weather, ZeroDensityIsIdentity) {
  const Image img = noise_image(32, 32, 1);
  for (auto w : {Weather::kRain, Weather::kSnow, Weather::kFog}) {
    RandomStream rng(2);
    EXPECT_EQ(synth::apply_weather(img, w, 0.0, rng), img);
  }
}

TEST(Weather, DenseFogMovesEveryPixelTowardWhite) {
  const Image img = noise_image(32, 32, 3);
  RandomStream rng(4);
  const Image out = synth::apply_weather(img, Weather::kFog, 1.0, rng);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) EXPECT_LT(1.0 - out.pixels()[i], 1.0 - img.pixels()[i]);
}

TEST(Weather, SnowMasksDependOnTheDraw) {
  const Image img(32, 32, 0.3);
  RandomStream r1(5), r2(6);
  EXPECT_NE(synth::apply_weather(img, Weather::kSnow, 0.6, r1), synth::apply_weather(img, Weather::kSnow, 0.6, r2));
}

TEST(Weather, OutputInUnitRange) {
  const Image img = noise_image(32, 32, 7);
  for (auto w : {Weather::kRain, Weather::kSnow, Weather::kFog}) {
    RandomStream rng(8);
    const Image out = synth::apply_weather(img, w, 1.0, rng);
    for (double v : out.pixels()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Inconsistency, EmptySetIsIdentity) {
  const Image img = noise_image(32, 32, 9);
  RandomStream rng(10);
  EXPECT_EQ(synth::inject_inconsistency(img, {}, rng), img);
}

TEST(Inconsistency, ColorShiftStaysWithinBounds) {
  Image img(32, 32, 0.5);
  for (int t = 0; t < 20; ++t) {
    RandomStream rng(100 + t);
    const Image out = synth::inject_inconsistency(img, {Inconsistency::kColorShift}, rng);
    for (int c = 0; c < 3; ++c) {
      double mi = 0, mo = 0;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          mi += img.at(c, y, x);
          mo += out.at(c, y, x);
        }
      EXPECT_GE(mo / mi, 0.85 - 1e-12);
      EXPECT_LE(mo / mi, 1.15 + 1e-12);
    }
  }
}

TEST(Inconsistency, IlluminationOffsetBounded) {
  const Image img(32, 32, 0.5);
  for (int t = 0; t < 20; ++t) {
    RandomStream rng(200 + t);
    const Image out = synth::inject_inconsistency(img, {Inconsistency::kIlluminationShift}, rng);
    const double off = out.at(0, 0, 0) - 0.5;
    EXPECT_LE(std::abs(off), 0.1 + 1e-12);
    EXPECT_GT(std::abs(off), 0.0);
    for (double v : out.pixels()) EXPECT_NEAR(v - 0.5, off, 1e-12);
  }
}

TEST(Inconsistency, JitterIsASmallTranslation) {
  const Image img = noise_image(32, 32, 11);
  for (int t = 0; t < 10; ++t) {
    RandomStream rng(300 + t);
    const Image out = synth::inject_inconsistency(img, {Inconsistency::kSpatialJitter}, rng);
    bool found = false;
    for (int dy = -2; dy <= 2 && !found; ++dy)
      for (int dx = -2; dx <= 2 && !found; ++dx) found = mean_abs_diff(out, synth::translate(img, dy, dx)) == 0.0;
    EXPECT_TRUE(found);
  }
}

TEST(Window, OracleIsTheCleanCentreRender) {
  for (auto w : {Weather::kRain, Weather::kSnow, Weather::kFog}) {
    const auto s = spec_with(InconsistencySet::all(), w, 12);
    const auto win = synth::make_window(s);
    ASSERT_EQ(static_cast<int>(win.frames.size()), s.num_frames);
    EXPECT_EQ(win.gt_aligned_oracle, synth::render_clean_scene(s, s.radius()));
    EXPECT_GT(mean_abs_diff(win.gt_misaligned, win.gt_aligned_oracle), 0.0);
  }
  const auto clean = synth::make_window(spec_with({}, Weather::kRain, 13));
  EXPECT_EQ(mean_abs_diff(clean.gt_misaligned, clean.gt_aligned_oracle), 0.0);
}

TEST(Window, NarrowingKeepsTheCentre) {
  const auto win = synth::make_window(spec_with(InconsistencySet::all()));
  const auto n = win.narrowed(1);
  ASSERT_EQ(n.frames.size(), 3u);
  EXPECT_EQ(n.center(), win.center());
  EXPECT_EQ(n.frames[0], win.frames[1]);
}

TEST(Spec, ValidationRejectsBadGeometry) {
  auto s = spec_with({});
  s.height = 36;
  EXPECT_NO_THROW(s.validate(4));
  try {
    s.validate(8);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
  s.height = 32;
  s.num_frames = 4;
  EXPECT_THROW(s.validate(8), Error);
}

TEST(InconsistencySet, TextRoundTrip) {
  EXPECT_EQ(InconsistencySet::parse(InconsistencySet::all().to_string()), InconsistencySet::all());
  EXPECT_EQ(InconsistencySet::parse("none"), InconsistencySet{});
  EXPECT_THROW(InconsistencySet::parse("wobble"), Error);
}

TEST(Dataset, LayoutAndByteReproducibility) {
  const auto specs = synth::make_scene_specs(2, 32, 32, 5, 0.5, InconsistencySet::all(), 21);
  const auto a = temp_dir("dataset_a"), b = temp_dir("dataset_b");
  const auto manifest = synth::generate_dataset(specs, a, 8);
  synth::generate_dataset(specs, b, 8);
  ASSERT_EQ(manifest.entries.size(), 2u);
  for (const auto& e : manifest.entries) {
    int frames = 0;
    for (const auto& f : fs::directory_iterator(a / "scenes" / e.spec.scene_id / "frames")) frames += f.is_regular_file();
    EXPECT_EQ(frames, 5);
    EXPECT_TRUE(fs::exists(a / "scenes" / e.spec.scene_id / "gt.png"));
    EXPECT_TRUE(fs::exists(a / "scenes" / e.spec.scene_id / "gt_aligned.png"));
  }
  for (const auto& f : fs::recursive_directory_iterator(a)) {
    if (!f.is_regular_file()) continue;
    EXPECT_EQ(slurp(f.path()), slurp(b / fs::relative(f.path(), a))) << f.path();
  }
  const std::string header = slurp(a / "manifest.csv");
  EXPECT_EQ(header.rfind("scene_id,seed,weather,inconsistencies,num_frames,H,W", 0), 0u);
}

TEST(Dataset, LoadRestoresQuantizedWindows) {
  const auto specs = synth::make_scene_specs(3, 32, 32, 3, 0.4, InconsistencySet::all(), 22);
  const auto dir = temp_dir("dataset_load");
  synth::generate_dataset(specs, dir, 8);
  const auto scenes = synth::load_dataset(dir);
  ASSERT_EQ(scenes.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto win = synth::make_window(specs[i]);
    EXPECT_EQ(scenes[i].spec.weather, specs[i].weather);
    EXPECT_EQ(scenes[i].window.gt_misaligned, quantize8(win.gt_misaligned));
    EXPECT_EQ(scenes[i].window.frames.back(), quantize8(win.frames.back()));
  }
}

TEST(Dataset, IndivisibleSizeRejected) {
  const auto specs = synth::make_scene_specs(1, 36, 32, 5, 0.5, InconsistencySet::all(), 23);
  EXPECT_THROW(synth::generate_dataset(specs, temp_dir("dataset_bad"), 8), Error);
}

TEST(Specs, WeathersCycle) {
  const auto specs = synth::make_scene_specs(6, 32, 32, 5, 0.5, {}, 24);
  const Weather want[] = {Weather::kRain, Weather::kSnow, Weather::kFog};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(specs[i].weather, want[i % 3]);
}

}  // namespace
}  // namespace dw
