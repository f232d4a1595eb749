#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dw/image.hpp"
#include "dw/random.hpp"

/// Procedural time-multiplexed scenes with weather overlays and imperfect labels.
namespace dw::synth {

enum class Weather { kRain, kSnow, kFog };

enum class Inconsistency : unsigned {
  kColorShift = 1u << 0,
  kIlluminationShift = 1u << 1,
  kObjectMotion = 1u << 2,
  kSpatialJitter = 1u << 3,
};

/// Bit set over `Inconsistency`.
class InconsistencySet {
 public:
  InconsistencySet() = default;
  InconsistencySet(std::initializer_list<Inconsistency> kinds) {
    for (auto k : kinds) insert(k);
  }
  static InconsistencySet all() {
    return {Inconsistency::kColorShift, Inconsistency::kIlluminationShift, Inconsistency::kObjectMotion,
            Inconsistency::kSpatialJitter};
  }

  void insert(Inconsistency k) { bits_ |= static_cast<unsigned>(k); }
  bool contains(Inconsistency k) const { return bits_ & static_cast<unsigned>(k); }
  bool empty() const { return bits_ == 0; }
  unsigned bits() const { return bits_; }
  bool operator==(const InconsistencySet&) const = default;

  /// "color_shift|spatial_jitter", or "none".
  std::string to_string() const;
  static InconsistencySet parse(const std::string& text);

 private:
  unsigned bits_ = 0;
};

std::string to_string(Weather w);
Weather parse_weather(const std::string& text);

struct SceneSpec {
  std::string scene_id;
  int height = 32;
  int width = 32;
  int num_frames = 5;
  Weather weather = Weather::kRain;
  double weather_density = 0.5;
  InconsistencySet inconsistency;
  std::uint64_t rng_seed = 0;

  int radius() const { return (num_frames - 1) / 2; }

  /// Throws invalid-config unless H, W >= 16, both divisible by `divisor`,
  /// num_frames odd and >= 1, and density in [0, 1].
  void validate(int divisor) const;
};

struct FrameWindow {
  std::vector<Image> frames;  // 2n+1 degraded frames, centre at index n
  Image gt_misaligned;
  Image gt_aligned_oracle;
  std::vector<int> timestamps;

  int radius() const { return static_cast<int>(frames.size() - 1) / 2; }
  const Image& center() const { return frames[radius()]; }

  /// Sub-window with a smaller temporal radius around the same centre.
  FrameWindow narrowed(int radius) const;
};

/// Clean render of the scene at time `t`; pure function of (spec, t).
Image render_clean_scene(const SceneSpec& spec, int t);

/// Axis-aligned box covered by the moving object at time `t` (inclusive bounds).
/// Empty when the spec has no object motion.
struct Box {
  int y0, x0, y1, x1;
};
std::optional<Box> moving_object_box(const SceneSpec& spec, int t);

Image apply_weather(const Image& img, Weather weather, double density, RandomStream& rng);

/// Shifts content by (dy, dx) with edge replication.
Image translate(const Image& img, int dy, int dx);

Image inject_inconsistency(const Image& img, const InconsistencySet& kinds, RandomStream& rng);

/// Assembles the full window for a scene in memory.
FrameWindow make_window(const SceneSpec& spec);

struct ManifestEntry {
  SceneSpec spec;
  std::filesystem::path scene_dir;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
};

/// Generates `count` scene specs from a master seed; weathers cycle rain, snow, fog.
std::vector<SceneSpec> make_scene_specs(int count, int height, int width, int num_frames, double density,
                                        const InconsistencySet& kinds, std::uint64_t seed,
                                        const std::vector<Weather>& weathers = {Weather::kRain, Weather::kSnow,
                                                                                Weather::kFog});

/// Writes manifest.csv and scenes/<id>/{frames/NNN.png, gt.png, gt_aligned.png}.
DatasetManifest generate_dataset(const std::vector<SceneSpec>& specs, const std::filesystem::path& out_dir,
                                 int divisor);

DatasetManifest read_manifest(const std::filesystem::path& root);

struct Scene {
  SceneSpec spec;
  FrameWindow window;
};

/// Loads every scene listed in the manifest (8-bit quantized values).
std::vector<Scene> load_dataset(const std::filesystem::path& root);

}  // namespace dw::synth
