#include "dw/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "dw/checkpoint.hpp"

namespace dw::train {

namespace {

struct Batch {
  std::vector<ag::Var> frames;  // per temporal position, [B, 3, H, W]
  ag::Var gt;
};

Image rotate90(const Image& img, int k) {
  Image cur = img;
  for (int r = 0; r < k; ++r) {
    const int h = cur.height(), w = cur.width();
    Image next(w, h);
    for (int c = 0; c < Image::kChannels; ++c)
      for (int y = 0; y < w; ++y)
        for (int x = 0; x < h; ++x) next.at(c, y, x) = cur.at(c, x, w - 1 - y);
    cur = std::move(next);
  }
  return cur;
}

Image flip_h(const Image& img) {
  Image out(img.height(), img.width());
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
  return out;
}

Image crop_image(const Image& img, int y0, int x0, int size) {
  Image out(size, size);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

long steps_per_epoch(std::size_t scenes, int batch) { return static_cast<long>((scenes + batch - 1) / batch); }

/// Epoch order and augmented windows for one step.
std::vector<synth::FrameWindow> batch_windows(const std::vector<synth::Scene>& scenes, const TrainConfig& cfg,
                                              const std::vector<std::size_t>& order, long step_in_epoch,
                                              RandomStream& rng) {
  std::vector<synth::FrameWindow> out;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const std::size_t idx = order[(step_in_epoch * cfg.batch_size + i) % order.size()];
    out.push_back(augment(scenes[idx].window.narrowed(cfg.frames), cfg.crop, rng, cfg.rotate));
  }
  return out;
}

Batch to_vars(const std::vector<synth::FrameWindow>& windows) {
  Batch b;
  const std::size_t frames = windows.front().frames.size();
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<Image> imgs;
    for (const auto& w : windows) imgs.push_back(w.frames[f]);
    b.frames.push_back(ag::constant(to_batch(imgs)));
  }
  std::vector<Image> gts;
  for (const auto& w : windows) gts.push_back(w.gt_misaligned);
  b.gt = ag::constant(to_batch(gts));
  return b;
}

std::vector<std::size_t> shuffled(std::size_t n, RandomStream& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

ag::Var flatten(const ag::Var& x) { return ag::reshape(x, {x.dim(0), static_cast<int>(x.size() / x.dim(0))}); }

class LossCsv {
 public:
  explicit LossCsv(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
    DW_REQUIRE(out_.good(), ErrorCode::kIoFailure, "cannot write " + path.string());
    out_ << std::setprecision(10);
  }
  void row(long step, double lr, const loss::LossReport& r) {
    if (!header_) {
      out_ << "step,lr";
      for (const auto& t : r.terms) out_ << ',' << t.name;
      out_ << ",total\n";
      header_ = true;
    }
    out_ << step << ',' << lr;
    for (const auto& t : r.terms) out_ << ',' << t.value;
    out_ << ',' << r.total << '\n';
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool header_ = false;
};

std::map<std::string, std::string> info_for(const TrainConfig& cfg, Stage stage, long epoch, long step) {
  return {{"stage", to_string(stage)},
          {"epoch", std::to_string(epoch)},
          {"step", std::to_string(step)},
          {"seed", std::to_string(cfg.seed)},
          {"supervision", to_string(cfg.supervision)}};
}

/// Shared optimisation loop; `objective` builds the loss for one batch.
TrainResult run(const std::vector<synth::Scene>& scenes, const TrainConfig& cfg, Stage stage, model::Network& net,
                const std::filesystem::path& out_dir,
                const std::function<loss::Objective(const std::vector<synth::FrameWindow>&, long step)>& objective,
                const StepHook& hook) {
  DW_REQUIRE(!scenes.empty(), ErrorCode::kInvalidInput, "training needs at least one scene");
  std::filesystem::create_directories(out_dir);
  const std::string name = to_string(stage);
  TrainResult result;
  result.checkpoint = out_dir / (name + ".dwck");
  LossCsv csv(out_dir / (name + "_loss.csv"));
  result.loss_csv = csv.path();

  nn::Adam adam(cfg.adam_beta1, cfg.adam_beta2);
  const long spe = steps_per_epoch(scenes.size(), cfg.batch_size);
  net.set_training(true);
  long step = 0;
  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream rng = RandomStream::derive(cfg.seed, 0x5eed0000ULL + epoch);
    const auto order = shuffled(scenes.size(), rng);
    for (long s = 0; s < spe; ++s, ++step) {
      const auto windows = batch_windows(scenes, cfg, order, s, rng);
      net.parameters().zero_grad();
      loss::Objective obj = objective(windows, step);
      if (!std::isfinite(obj.report.total)) {
        const auto last_good = out_dir / (name + "_last_good.dwck");
        ckpt::save(last_good, net, info_for(cfg, stage, epoch, step));
        throw Error(ErrorCode::kDivergence, "non-finite loss at step " + std::to_string(step) +
                                                "; last good parameters saved to " + last_good.string());
      }
      ag::backward(obj.total);
      const double lr = lr_schedule(step, spe, cfg);
      adam.step(net.parameters(), lr);
      csv.row(step, lr, obj.report);
      result.final_loss = obj.report.total;
      if (hook) hook(step, obj.report);
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      std::ostringstream fname;
      fname << name << "_e" << std::setw(3) << std::setfill('0') << epoch + 1 << ".dwck";
      ckpt::save(out_dir / fname.str(), net, info_for(cfg, stage, epoch + 1, step));
    }
  }
  result.steps = step;
  net.set_training(false);
  ckpt::save(result.checkpoint, net, info_for(cfg, stage, cfg.epochs, step));
  return result;
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kClc: return "clc";
    case Stage::kCsaClc: return "csaclc";
    case Stage::kDew: return "dew";
  }
  return "?";
}

std::string to_string(Supervision s) {
  switch (s) {
    case Supervision::kJoint: return "joint";
    case Supervision::kPseudo: return "pseudo";
    case Supervision::kOriginal: return "original";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "clc") return Stage::kClc;
  if (s == "csaclc") return Stage::kCsaClc;
  if (s == "dew") return Stage::kDew;
  throw Error(ErrorCode::kInvalidConfig, "unknown stage '" + s + "' (expected clc|csaclc|dew)");
}

Supervision parse_supervision(const std::string& s) {
  if (s == "joint") return Supervision::kJoint;
  if (s == "pseudo") return Supervision::kPseudo;
  if (s == "original") return Supervision::kOriginal;
  throw Error(ErrorCode::kInvalidConfig, "unknown supervision '" + s + "' (expected joint|pseudo|original)");
}

void TrainConfig::validate() const {
  DW_REQUIRE(epochs >= 1, ErrorCode::kInvalidConfig, "epochs must be >= 1");
  DW_REQUIRE(batch_size >= 1, ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  DW_REQUIRE(lr_warm_start <= lr_peak, ErrorCode::kInvalidConfig, "lr_warm_start must not exceed lr_peak");
  DW_REQUIRE(lr_floor <= lr_peak, ErrorCode::kInvalidConfig, "lr_floor must not exceed lr_peak");
  DW_REQUIRE(lr_floor >= 0.0 && lr_warm_start >= 0.0, ErrorCode::kInvalidConfig, "learning rates must be >= 0");
  DW_REQUIRE(warmup_epochs >= 0, ErrorCode::kInvalidConfig, "warmup_epochs must be >= 0");
  DW_REQUIRE(frames >= 0, ErrorCode::kInvalidConfig, "frames (temporal radius) must be >= 0");
  DW_REQUIRE(sw_projections >= 1, ErrorCode::kInvalidConfig, "sw_projections must be >= 1");
  DW_REQUIRE(weights.tau > 0.0, ErrorCode::kInvalidConfig, "tau must be > 0");
  backbone.validate();
  match.validate();
  const int div = backbone.divisor(match.patch_size);
  DW_REQUIRE(crop >= div && crop % div == 0, ErrorCode::kInvalidConfig,
             "crop " + std::to_string(crop) + " must be a positive multiple of " + std::to_string(div));
}

double lr_schedule(long step, long steps_per_epoch, const TrainConfig& cfg) {
  DW_REQUIRE(step >= 0 && steps_per_epoch >= 1, ErrorCode::kInvalidInput, "lr_schedule: bad step arguments");
  const long total = static_cast<long>(cfg.epochs) * steps_per_epoch;
  const long warm = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
  if (step < warm) {
    return cfg.lr_warm_start + (cfg.lr_peak - cfg.lr_warm_start) * static_cast<double>(step) / warm;
  }
  const long span = total - 1 - warm;
  const double p = span > 0 ? std::min(1.0, static_cast<double>(step - warm) / span) : 1.0;
  return cfg.lr_floor + 0.5 * (cfg.lr_peak - cfg.lr_floor) * (1.0 + std::cos(M_PI * p));
}

synth::FrameWindow augment(const synth::FrameWindow& window, int crop, RandomStream& rng, bool rotate) {
  const int h = window.gt_misaligned.height(), w = window.gt_misaligned.width();
  DW_REQUIRE(crop >= 1 && crop <= h && crop <= w, ErrorCode::kInvalidConfig,
             "crop " + std::to_string(crop) + " exceeds image " + std::to_string(h) + "x" + std::to_string(w));
  const int y0 = rng.range(0, h - crop);
  const int x0 = rng.range(0, w - crop);
  const int quarter_turns = rotate ? rng.range(0, 3) : 0;
  const bool flip = rotate && rng.range(0, 1) == 1;
  const auto apply = [&](const Image& img) {
    Image out = rotate90(crop_image(img, y0, x0, crop), quarter_turns);
    return flip ? flip_h(out) : out;
  };
  synth::FrameWindow out;
  out.timestamps = window.timestamps;
  for (const auto& f : window.frames) out.frames.push_back(apply(f));
  out.gt_misaligned = apply(window.gt_misaligned);
  out.gt_aligned_oracle = apply(window.gt_aligned_oracle);
  return out;
}

model::ModelSpec model_spec(const TrainConfig& cfg, Stage stage) {
  model::ModelSpec spec;
  spec.backbone = cfg.backbone;
  spec.match = cfg.match;
  spec.match.radius = cfg.frames;
  spec.aggregator = cfg.aggregator;
  switch (stage) {
    case Stage::kClc:
      spec.kind = model::Kind::kClc;
      spec.num_frames = cfg.num_frames();
      break;
    case Stage::kCsaClc:
      spec.kind = model::Kind::kCsaClc;
      spec.num_frames = cfg.num_frames();
      break;
    case Stage::kDew:
      spec.kind = model::Kind::kDew;
      spec.num_frames = 1;
      break;
  }
  return spec;
}

TrainResult train_constructor(const std::vector<synth::Scene>& scenes, const TrainConfig& cfg,
                              const std::filesystem::path& out_dir, const StepHook& hook) {
  cfg.validate();
  DW_REQUIRE(cfg.stage == Stage::kClc || cfg.stage == Stage::kCsaClc, ErrorCode::kInvalidConfig,
             "train_constructor needs stage clc or csaclc");
  auto net = model::build(model_spec(cfg, cfg.stage), RandomStream::derive(cfg.seed, 1).next_u64());
  const bool rain_robust = cfg.stage == Stage::kCsaClc && cfg.constructor_rain_robust;
  DW_REQUIRE(!rain_robust || cfg.batch_size >= 2, ErrorCode::kInvalidConfig,
             "the Rain-Robust term needs batch_size >= 2");

  const auto objective = [&](const std::vector<synth::FrameWindow>& windows, long) {
    const Batch b = to_vars(windows);
    if (cfg.stage == Stage::kClc) {
      return loss::clc_objective(static_cast<const model::Clc&>(*net).forward(b.frames), b.gt);
    }
    const auto out = static_cast<const model::CsaClc&>(*net).forward(b.frames, b.gt);
    if (!rain_robust) return loss::clc_objective(out.pseudo, b.gt);
    return loss::csaclc_objective(out.pseudo, b.gt, flatten(out.f_t), flatten(out.f_gt), cfg.weights.tau);
  };
  return run(scenes, cfg, cfg.stage, *net, out_dir, objective, hook);
}

TrainResult train_dew(const std::vector<synth::Scene>& scenes, const model::Network* constructor,
                      const TrainConfig& cfg, const std::filesystem::path& out_dir, const StepHook& hook) {
  cfg.validate();
  DW_REQUIRE(cfg.batch_size >= 2, ErrorCode::kInvalidConfig, "the Rain-Robust term needs batch_size >= 2");
  DW_REQUIRE(constructor || cfg.supervision == Supervision::kOriginal, ErrorCode::kInvalidConfig,
             "supervision '" + to_string(cfg.supervision) + "' needs a pseudo-label constructor");
  const auto* clc = dynamic_cast<const model::Clc*>(constructor);
  const auto* csa = dynamic_cast<const model::CsaClc*>(constructor);
  DW_REQUIRE(!constructor || clc || csa, ErrorCode::kInvalidConfig, "constructor checkpoint is not a CLC or CSA-CLC");
  if (constructor) {
    DW_REQUIRE(constructor->spec().num_frames == cfg.num_frames(), ErrorCode::kInvalidConfig,
               "constructor expects " + std::to_string(constructor->spec().num_frames) + " frames, config gives " +
                   std::to_string(cfg.num_frames()));
  }
  const model::ModelSpec spec = model_spec(cfg, Stage::kDew);
  if (csa) {
    DW_REQUIRE(csa->spec().backbone.bottleneck_channels() == spec.backbone.bottleneck_channels() &&
                   csa->spec().backbone.depth == spec.backbone.depth,
               ErrorCode::kInvalidConfig, "distillation needs matching De-W and CSA-CLC bottlenecks");
  }
  model::Dew dew(spec, RandomStream::derive(cfg.seed, 2).next_u64());

  const bool clc_family = clc != nullptr;
  loss::LossWeights w = cfg.weights;
  if (cfg.supervision == Supervision::kPseudo) {
    w.lambda_o = 0.0;
    w.lambda_d = 0.0;
    w.lambda1 = 0.0;
  } else if (cfg.supervision == Supervision::kOriginal) {
    w.lambda_d = 0.0;
  }
  const patch::RandomConvExtractor extractor(RandomStream::derive(cfg.seed, 3).next_u64());

  const auto objective = [&](const std::vector<synth::FrameWindow>& windows, long step) {
    const Batch b = to_vars(windows);
    const ag::Var& input = b.frames[cfg.frames];
    ag::Var pseudo = b.gt;
    ag::Var f_agg;
    if (cfg.supervision != Supervision::kOriginal) {
      ag::NoGradGuard guard;
      if (clc) {
        pseudo = clc->forward(b.frames);
      } else {
        const auto out = csa->forward(b.frames, b.gt);
        pseudo = out.pseudo;
        f_agg = out.f_agg;
      }
    }
    const model::DewOutput out = dew.forward(input);
    const ag::Var u = flatten(out.bottleneck);
    const ag::Var v = flatten(dew.encode(b.gt));
    if (clc_family) {
      loss::SwContext sw{&extractor, patch::ProjectionMatrix::random(cfg.sw_projections, extractor.channels(),
                                                                     RandomStream::derive(cfg.seed, 0x5700000ULL + step).next_u64())};
      return loss::ias_clc_objective(out.restored, pseudo, b.gt, u, v, sw, w);
    }
    return loss::ias_csaclc_objective(out.restored, pseudo, b.gt, out.bottleneck, f_agg, u, v, w);
  };
  return run(scenes, cfg, Stage::kDew, dew, out_dir, objective, hook);
}

}  // namespace dw::train
