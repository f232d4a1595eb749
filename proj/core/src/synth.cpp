#include "dw/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dw::synth {

namespace {

constexpr std::pair<Inconsistency, const char*> kKindNames[] = {
    {Inconsistency::kColorShift, "color_shift"},
    {Inconsistency::kIlluminationShift, "illumination_shift"},
    {Inconsistency::kObjectMotion, "object_motion"},
    {Inconsistency::kSpatialJitter, "spatial_jitter"},
};

// Salts for the independent random streams of a scene.
constexpr std::uint64_t kLayoutSalt = 1;
constexpr std::uint64_t kLabelSalt = 2;
constexpr std::uint64_t kFrameSaltBase = 100;

struct Rgb {
  double r, g, b;
  double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

Rgb random_color(RandomStream& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

enum class Shape { kRect, kDisc };

struct Object {
  Shape shape;
  double cy, cx, half;  // centre and half-extent
  Rgb color;
  double shade;  // vertical shading gradient

  bool covers(double y, double x) const {
    if (shape == Shape::kRect) return std::abs(y - cy) <= half && std::abs(x - cx) <= half;
    return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= half * half;
  }
};

struct Layout {
  Rgb sky_top, sky_horizon, ground;
  int horizon;
  // Ground texture: two oriented gratings plus a checker.
  double f1y, f1x, p1, f2y, f2x, p2, checker;
  std::vector<Object> objects;
  // Moving object (only drawn in motion when the spec asks for it).
  int mover_h, mover_w, mover_y, mover_x, mover_vy, mover_vx;
  Rgb mover_color;
};

Layout make_layout(const SceneSpec& spec) {
  RandomStream rng = RandomStream::derive(spec.rng_seed, kLayoutSalt);
  const int h = spec.height, w = spec.width;
  Layout l{};
  l.sky_top = {rng.uniform(0.2, 0.5), rng.uniform(0.35, 0.6), rng.uniform(0.6, 0.9)};
  l.sky_horizon = {rng.uniform(0.6, 0.85), rng.uniform(0.6, 0.85), rng.uniform(0.65, 0.9)};
  l.ground = random_color(rng, 0.2, 0.55);
  l.horizon = static_cast<int>(std::lround(h * rng.uniform(0.3, 0.5)));
  l.f1y = rng.uniform(0.3, 1.2);
  l.f1x = rng.uniform(0.3, 1.2);
  l.p1 = rng.uniform(0.0, 2.0 * M_PI);
  l.f2y = rng.uniform(-1.2, -0.3);
  l.f2x = rng.uniform(0.3, 1.2);
  l.p2 = rng.uniform(0.0, 2.0 * M_PI);
  l.checker = rng.uniform(0.04, 0.1);
  const int count = 3 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    Object o{};
    o.shape = rng.below(2) ? Shape::kDisc : Shape::kRect;
    o.half = rng.uniform(2.0, std::max(3.0, std::min(h, w) / 6.0));
    o.cy = rng.uniform(o.half, h - 1 - o.half);
    o.cx = rng.uniform(o.half, w - 1 - o.half);
    o.color = random_color(rng, 0.05, 0.95);
    o.shade = rng.uniform(-0.2, 0.2);
    l.objects.push_back(o);
  }
  l.mover_h = rng.range(4, std::max(4, h / 5));
  l.mover_w = rng.range(4, std::max(4, w / 5));
  l.mover_y = rng.range(2, h - l.mover_h - 3);
  l.mover_x = rng.range(2, w - l.mover_w - 3);
  do {
    l.mover_vy = rng.range(-2, 2);
    l.mover_vx = rng.range(-2, 2);
  } while (l.mover_vy == 0 && l.mover_vx == 0);
  l.mover_color = random_color(rng, 0.05, 0.95);
  return l;
}

Box mover_box(const Layout& l, const SceneSpec& spec, int t) {
  const int dt = t - spec.radius();
  const int y0 = l.mover_y + l.mover_vy * dt;
  const int x0 = l.mover_x + l.mover_vx * dt;
  return {y0, x0, y0 + l.mover_h - 1, x0 + l.mover_w - 1};
}

bool block_differs(const Image& img, int sy, int sx, int dy, int dx, int size) {
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (img.at(c, sy + y, sx + x) != img.at(c, dy + y, dx + x)) return true;
  return false;
}

Image relocate_block(const Image& img, RandomStream& rng) {
  const int h = img.height(), w = img.width();
  const int size = std::max(4, std::min(h, w) / 4);
  const int max_shift = std::max(3, size * 3 / 4);
  int sy = 0, sx = 0, ty = 0, tx = 0;
  for (int attempt = 0; attempt < 32; ++attempt) {
    sy = rng.range(0, h - size);
    sx = rng.range(0, w - size);
    const int my = rng.range(3, max_shift) * (rng.below(2) ? 1 : -1);
    const int mx = rng.range(3, max_shift) * (rng.below(2) ? 1 : -1);
    ty = std::clamp(sy + my, 0, h - size);
    tx = std::clamp(sx + mx, 0, w - size);
    if ((ty != sy || tx != sx) && block_differs(img, sy, sx, ty, tx, size)) break;
  }
  Image out = img;
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, ty + y, tx + x) = img.at(c, sy + y, sx + x);
  return out;
}

void add_streak(Image& img, double y0, double x0, int length, double slant, double intensity) {
  for (int j = 0; j < length; ++j) {
    const int y = static_cast<int>(std::lround(y0 + j));
    const int x = static_cast<int>(std::lround(x0 + slant * j));
    if (y < 0 || y >= img.height() || x < 0 || x >= img.width()) continue;
    for (int c = 0; c < Image::kChannels; ++c) img.at(c, y, x) += intensity;
  }
}

void add_flake(Image& img, double cy, double cx, double radius, double opacity) {
  const int r = static_cast<int>(std::ceil(radius + 0.5));
  for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y) {
    for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
      if (y < 0 || y >= img.height() || x < 0 || x >= img.width()) continue;
      const double d = std::hypot(y - cy, x - cx) / (radius + 0.5);
      if (d >= 1.0) continue;
      const double a = opacity * (1.0 - d * d);
      for (int c = 0; c < Image::kChannels; ++c) img.at(c, y, x) += a * (1.0 - img.at(c, y, x));
    }
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

std::string frame_name(int t) {
  std::ostringstream os;
  os << std::setw(3) << std::setfill('0') << t << ".png";
  return os.str();
}

}  // namespace

std::string InconsistencySet::to_string() const {
  std::string out;
  for (const auto& [kind, name] : kKindNames) {
    if (!contains(kind)) continue;
    if (!out.empty()) out += "|";
    out += name;
  }
  return out.empty() ? "none" : out;
}

InconsistencySet InconsistencySet::parse(const std::string& text) {
  InconsistencySet set;
  if (text.empty() || text == "none") return set;
  if (text == "all") return all();
  for (const auto& tok : split(text, '|')) {
    bool found = false;
    for (const auto& [kind, name] : kKindNames) {
      if (tok == name) {
        set.insert(kind);
        found = true;
      }
    }
    DW_REQUIRE(found, ErrorCode::kInvalidConfig, "unknown inconsistency kind '" + tok + "'");
  }
  return set;
}

std::string to_string(Weather w) {
  switch (w) {
    case Weather::kRain: return "rain";
    case Weather::kSnow: return "snow";
    case Weather::kFog: return "fog";
  }
  return "rain";
}

Weather parse_weather(const std::string& text) {
  if (text == "rain") return Weather::kRain;
  if (text == "snow") return Weather::kSnow;
  if (text == "fog") return Weather::kFog;
  throw Error(ErrorCode::kInvalidConfig, "unknown weather '" + text + "'");
}

void SceneSpec::validate(int divisor) const {
  DW_REQUIRE(height >= 16 && width >= 16, ErrorCode::kInvalidConfig, scene_id + ": canvas must be at least 16x16");
  DW_REQUIRE(divisor >= 1 && height % divisor == 0 && width % divisor == 0, ErrorCode::kInvalidConfig,
             scene_id + ": canvas " + std::to_string(height) + "x" + std::to_string(width) +
                 " not divisible by " + std::to_string(divisor));
  DW_REQUIRE(num_frames >= 1 && num_frames % 2 == 1, ErrorCode::kInvalidConfig,
             scene_id + ": num_frames must be odd and >= 1");
  DW_REQUIRE(weather_density >= 0.0 && weather_density <= 1.0, ErrorCode::kInvalidConfig,
             scene_id + ": weather density outside [0,1]");
}

FrameWindow FrameWindow::narrowed(int r) const {
  const int n = radius();
  DW_REQUIRE(r >= 0 && r <= n, ErrorCode::kInvalidConfig,
             "window radius " + std::to_string(r) + " exceeds available " + std::to_string(n));
  FrameWindow out;
  out.frames.assign(frames.begin() + (n - r), frames.begin() + (n + r + 1));
  out.timestamps.assign(timestamps.begin() + (n - r), timestamps.begin() + (n + r + 1));
  out.gt_misaligned = gt_misaligned;
  out.gt_aligned_oracle = gt_aligned_oracle;
  return out;
}

std::optional<Box> moving_object_box(const SceneSpec& spec, int t) {
  if (!spec.inconsistency.contains(Inconsistency::kObjectMotion)) return std::nullopt;
  return mover_box(make_layout(spec), spec, t);
}

Image render_clean_scene(const SceneSpec& spec, int t) {
  const Layout l = make_layout(spec);
  const int h = spec.height, w = spec.width;
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Rgb px;
      if (y < l.horizon) {
        const double a = l.horizon > 1 ? static_cast<double>(y) / (l.horizon - 1) : 0.0;
        px = {l.sky_top.r + a * (l.sky_horizon.r - l.sky_top.r), l.sky_top.g + a * (l.sky_horizon.g - l.sky_top.g),
              l.sky_top.b + a * (l.sky_horizon.b - l.sky_top.b)};
      } else {
        const double tex = 0.08 * std::sin(l.f1y * y + l.f1x * x + l.p1) +
                           0.06 * std::sin(l.f2y * y + l.f2x * x + l.p2) +
                           (((y / 2 + x / 2) % 2) ? l.checker : -l.checker);
        px = {l.ground.r + tex, l.ground.g + tex, l.ground.b + 0.5 * tex};
      }
      for (const auto& o : l.objects) {
        if (o.covers(y, x)) {
          const double s = 1.0 + o.shade * (y - o.cy) / std::max(1.0, o.half);
          px = {o.color.r * s, o.color.g * s, o.color.b * s};
        }
      }
      for (int c = 0; c < Image::kChannels; ++c) img.at(c, y, x) = px[c];
    }
  }
  if (spec.inconsistency.contains(Inconsistency::kObjectMotion)) {
    const Box b = mover_box(l, spec, t);
    for (int y = std::max(0, b.y0); y <= std::min(h - 1, b.y1); ++y)
      for (int x = std::max(0, b.x0); x <= std::min(w - 1, b.x1); ++x)
        for (int c = 0; c < Image::kChannels; ++c) img.at(c, y, x) = l.mover_color[c];
  }
  img.clip01();
  return img;
}

Image apply_weather(const Image& img, Weather weather, double density, RandomStream& rng) {
  DW_REQUIRE(density >= 0.0 && density <= 1.0, ErrorCode::kInvalidInput, "weather density outside [0,1]");
  if (density == 0.0) return img;
  Image out = img;
  const int h = img.height(), w = img.width();
  switch (weather) {
    case Weather::kRain: {
      const int count = static_cast<int>(std::lround(density * h * w / 14.0));
      const double wind = rng.uniform(-0.3, 0.3);
      for (int i = 0; i < count; ++i) {
        const double y0 = rng.uniform(-6.0, h - 1.0);
        const double x0 = rng.uniform(0.0, w - 1.0);
        const int len = rng.range(4, 9);
        add_streak(out, y0, x0, len, wind + rng.uniform(-0.05, 0.05), rng.uniform(0.25, 0.5));
      }
      break;
    }
    case Weather::kSnow: {
      const int count = static_cast<int>(std::lround(density * h * w / 18.0));
      for (int i = 0; i < count; ++i) {
        add_flake(out, rng.uniform(0.0, h - 1.0), rng.uniform(0.0, w - 1.0), rng.uniform(0.5, 1.5),
                  rng.uniform(0.6, 0.95));
      }
      break;
    }
    case Weather::kFog: {
      const double base = rng.uniform(0.4, 0.5);
      for (int y = 0; y < h; ++y) {
        const double alpha = density * (base + 0.25 * (1.0 - static_cast<double>(y) / std::max(1, h - 1)));
        for (int c = 0; c < Image::kChannels; ++c)
          for (int x = 0; x < w; ++x) out.at(c, y, x) = (1.0 - alpha) * out.at(c, y, x) + alpha;
      }
      break;
    }
  }
  out.clip01();
  return out;
}

Image translate(const Image& img, int dy, int dx) {
  Image out(img.height(), img.width());
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        out.at(c, y, x) = img.at(c, std::clamp(y - dy, 0, img.height() - 1), std::clamp(x - dx, 0, img.width() - 1));
  return out;
}

Image inject_inconsistency(const Image& img, const InconsistencySet& kinds, RandomStream& rng) {
  Image out = img;
  if (kinds.contains(Inconsistency::kObjectMotion)) out = relocate_block(out, rng);
  if (kinds.contains(Inconsistency::kSpatialJitter)) {
    int dy = 0, dx = 0;
    while (dy == 0 && dx == 0) {
      dy = rng.range(-2, 2);
      dx = rng.range(-2, 2);
    }
    out = translate(out, dy, dx);
  }
  if (kinds.contains(Inconsistency::kColorShift)) {
    for (int c = 0; c < Image::kChannels; ++c) {
      const double f = rng.uniform(0.85, 1.15);
      for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) out.at(c, y, x) *= f;
    }
  }
  if (kinds.contains(Inconsistency::kIlluminationShift)) {
    double off = 0.0;
    while (std::abs(off) < 0.02) off = rng.uniform(-0.1, 0.1);
    for (double& v : out.pixels()) v += off;
  }
  out.clip01();
  return out;
}

FrameWindow make_window(const SceneSpec& spec) {
  FrameWindow win;
  for (int t = 0; t < spec.num_frames; ++t) {
    RandomStream rng = RandomStream::derive(spec.rng_seed, kFrameSaltBase + t);
    win.frames.push_back(apply_weather(render_clean_scene(spec, t), spec.weather, spec.weather_density, rng));
    win.timestamps.push_back(t);
  }
  win.gt_aligned_oracle = render_clean_scene(spec, spec.radius());
  RandomStream label_rng = RandomStream::derive(spec.rng_seed, kLabelSalt);
  win.gt_misaligned = inject_inconsistency(win.gt_aligned_oracle, spec.inconsistency, label_rng);
  return win;
}

std::vector<SceneSpec> make_scene_specs(int count, int height, int width, int num_frames, double density,
                                        const InconsistencySet& kinds, std::uint64_t seed,
                                        const std::vector<Weather>& weathers) {
  DW_REQUIRE(!weathers.empty(), ErrorCode::kInvalidConfig, "no weather kinds configured");
  std::vector<SceneSpec> specs;
  for (int i = 0; i < count; ++i) {
    SceneSpec s;
    std::ostringstream id;
    id << "scene_" << std::setw(3) << std::setfill('0') << i;
    s.scene_id = id.str();
    s.height = height;
    s.width = width;
    s.num_frames = num_frames;
    s.weather = weathers[i % weathers.size()];
    s.weather_density = density;
    s.inconsistency = kinds;
    s.rng_seed = RandomStream::mix(seed + 0x632be59bd9b4e019ULL * (i + 1));
    specs.push_back(s);
  }
  return specs;
}

DatasetManifest generate_dataset(const std::vector<SceneSpec>& specs, const std::filesystem::path& out_dir,
                                 int divisor) {
  namespace fs = std::filesystem;
  for (const auto& s : specs) s.validate(divisor);
  DatasetManifest manifest{out_dir, {}};
  std::error_code ec;
  fs::create_directories(out_dir / "scenes", ec);
  DW_REQUIRE(!ec, ErrorCode::kIoFailure, "cannot create " + (out_dir / "scenes").string());

  const fs::path manifest_path = out_dir / "manifest.csv";
  std::ofstream csv(manifest_path);
  DW_REQUIRE(csv, ErrorCode::kIoFailure, "cannot write " + manifest_path.string());
  csv << "scene_id,seed,weather,inconsistencies,num_frames,H,W,density\n";
  csv << std::setprecision(17);
  for (const auto& s : specs) {
    const fs::path dir = out_dir / "scenes" / s.scene_id;
    fs::create_directories(dir / "frames", ec);
    DW_REQUIRE(!ec, ErrorCode::kIoFailure, "cannot create " + (dir / "frames").string());
    const FrameWindow win = make_window(s);
    for (std::size_t t = 0; t < win.frames.size(); ++t) write_png(dir / "frames" / frame_name(t), win.frames[t]);
    write_png(dir / "gt.png", win.gt_misaligned);
    write_png(dir / "gt_aligned.png", win.gt_aligned_oracle);
    csv << s.scene_id << ',' << s.rng_seed << ',' << to_string(s.weather) << ',' << s.inconsistency.to_string() << ','
        << s.num_frames << ',' << s.height << ',' << s.width << ',' << s.weather_density << '\n';
    manifest.entries.push_back({s, dir});
  }
  csv.flush();
  DW_REQUIRE(csv, ErrorCode::kIoFailure, "write failed: " + manifest_path.string());
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.csv";
  std::ifstream in(path);
  DW_REQUIRE(in, ErrorCode::kIoFailure, "cannot read " + path.string());
  DatasetManifest manifest{root, {}};
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    DW_REQUIRE(cells.size() >= 7, ErrorCode::kInvalidInput, "malformed manifest row: " + line);
    SceneSpec s;
    s.scene_id = cells[0];
    s.rng_seed = std::stoull(cells[1]);
    s.weather = parse_weather(cells[2]);
    s.inconsistency = InconsistencySet::parse(cells[3]);
    s.num_frames = std::stoi(cells[4]);
    s.height = std::stoi(cells[5]);
    s.width = std::stoi(cells[6]);
    s.weather_density = cells.size() > 7 ? std::stod(cells[7]) : 0.5;
    manifest.entries.push_back({s, root / "scenes" / s.scene_id});
  }
  return manifest;
}

std::vector<Scene> load_dataset(const std::filesystem::path& root) {
  const DatasetManifest manifest = read_manifest(root);
  std::vector<Scene> scenes;
  for (const auto& e : manifest.entries) {
    Scene sc{e.spec, {}};
    for (int t = 0; t < e.spec.num_frames; ++t) {
      sc.window.frames.push_back(read_png(e.scene_dir / "frames" / frame_name(t)));
      sc.window.timestamps.push_back(t);
    }
    sc.window.gt_misaligned = read_png(e.scene_dir / "gt.png");
    sc.window.gt_aligned_oracle = read_png(e.scene_dir / "gt_aligned.png");
    scenes.push_back(std::move(sc));
  }
  DW_REQUIRE(!scenes.empty(), ErrorCode::kInvalidInput, "dataset at " + root.string() + " has no scenes");
  return scenes;
}

}  // namespace dw::synth
