#include "dw/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <map>

#include "dw/checkpoint.hpp"

namespace dw::eval {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  DW_REQUIRE(out.good(), ErrorCode::kIoFailure, "cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(10);
  return out;
}

const Image& reference(const synth::Scene& s, Against against) {
  return against == Against::kOracle ? s.window.gt_aligned_oracle : s.window.gt_misaligned;
}

}  // namespace

std::string to_string(Against a) { return a == Against::kOracle ? "oracle" : "misaligned_gt"; }

Against parse_against(const std::string& s) {
  if (s == "oracle") return Against::kOracle;
  if (s == "misaligned_gt") return Against::kMisalignedGt;
  throw Error(ErrorCode::kInvalidConfig, "unknown reference '" + s + "' (expected oracle|misaligned_gt)");
}

std::vector<MetricsRecord> score(const std::vector<synth::Scene>& scenes, const std::vector<Image>& outputs,
                                 Against against) {
  DW_REQUIRE(scenes.size() == outputs.size(), ErrorCode::kInvalidInput, "score: one output per scene required");
  std::vector<MetricsRecord> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Image& ref = reference(scenes[i], against);
    out.push_back({scenes[i].spec.scene_id, scenes[i].spec.weather, metrics::psnr(outputs[i], ref),
                   metrics::ssim(outputs[i], ref), against});
  }
  return out;
}

std::vector<Image> infer(const model::Network& net, const std::vector<synth::Scene>& scenes) {
  std::vector<Image> out;
  const bool dew = net.spec().kind == model::Kind::kDew;
  for (const auto& s : scenes) {
    if (dew) {
      ag::NoGradGuard guard;
      const auto& m = static_cast<const model::Dew&>(net);
      out.push_back(from_batch(m.forward(ag::constant(to_batch(s.window.center()))).restored.value(), 0));
    } else {
      const auto w = s.window.narrowed(net.spec().num_frames / 2);
      out.push_back(model::construct_pseudo(net, w.frames, w.gt_misaligned));
    }
  }
  return out;
}

std::vector<MetricsRecord> evaluate(const model::Network& net, const std::vector<synth::Scene>& scenes,
                                    Against against) {
  return score(scenes, infer(net, scenes), against);
}

std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records) {
  std::vector<SummaryRow> rows;
  for (const auto w : {synth::Weather::kRain, synth::Weather::kSnow, synth::Weather::kFog}) {
    SummaryRow r{synth::to_string(w)};
    for (const auto& m : records) {
      if (m.weather != w) continue;
      ++r.count;
      r.psnr_db += m.psnr_db;
      r.ssim += m.ssim;
    }
    if (r.count == 0) continue;
    r.psnr_db /= r.count;
    r.ssim /= r.count;
    rows.push_back(r);
  }
  SummaryRow all{"overall"};
  for (const auto& r : rows) {
    all.count += r.count;
    all.psnr_db += r.psnr_db * r.count;
    all.ssim += r.ssim * r.count;
  }
  if (all.count > 0) {
    all.psnr_db /= all.count;
    all.ssim /= all.count;
  }
  rows.push_back(all);
  return rows;
}

void write_records_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  auto out = open_csv(path);
  out << "scene_id,weather,psnr_db,ssim,against\n";
  for (const auto& r : records)
    out << r.scene_id << ',' << synth::to_string(r.weather) << ',' << r.psnr_db << ',' << r.ssim << ','
        << to_string(r.against) << '\n';
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = open_csv(path);
  out << "group,count,psnr_db,ssim\n";
  for (const auto& r : rows) out << r.group << ',' << r.count << ',' << r.psnr_db << ',' << r.ssim << '\n';
}

std::string to_string(Sweep s) {
  switch (s) {
    case Sweep::kSupervision: return "supervision";
    case Sweep::kFrames: return "frames";
    case Sweep::kPadding: return "padding";
    case Sweep::kTopK: return "topk";
    case Sweep::kAggregator: return "aggregator";
  }
  return "?";
}

Sweep parse_sweep(const std::string& s) {
  for (const auto v : {Sweep::kSupervision, Sweep::kFrames, Sweep::kPadding, Sweep::kTopK, Sweep::kAggregator})
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::kInvalidConfig, "unknown sweep '" + s + "' (expected supervision|frames|padding|topk|aggregator)");
}

std::vector<std::string> sweep_values(Sweep sweep) {
  switch (sweep) {
    case Sweep::kSupervision: return {"original", "pseudo", "joint"};
    case Sweep::kFrames: return {"1", "3", "5"};
    case Sweep::kPadding: return {"0", "1", "3"};
    case Sweep::kTopK: return {"1", "2", "3"};
    case Sweep::kAggregator: return {"gat", "mean"};
  }
  return {};
}

std::vector<AblationRow> ablate(Sweep sweep, const config::Config& base, const std::vector<synth::Scene>& train_scenes,
                                const std::vector<synth::Scene>& eval_scenes, const std::filesystem::path& out_dir) {
  std::vector<AblationRow> rows;
  std::filesystem::path shared_ckpt;
  for (const auto& value : sweep_values(sweep)) {
    train::TrainConfig cfg = base.train;
    if (cfg.stage == train::Stage::kDew) cfg.stage = train::Stage::kCsaClc;
    switch (sweep) {
      case Sweep::kSupervision: cfg.supervision = train::parse_supervision(value); break;
      case Sweep::kFrames: cfg.frames = std::stoi(value) / 2; break;
      case Sweep::kPadding: cfg.match.padding = std::stoi(value); break;
      case Sweep::kTopK: cfg.match.top_k = std::stoi(value); break;
      case Sweep::kAggregator: cfg.aggregator = model::parse_aggregator(value); break;
    }
    if (sweep == Sweep::kPadding || sweep == Sweep::kTopK || sweep == Sweep::kAggregator)
      cfg.stage = train::Stage::kCsaClc;
    const auto cell = out_dir / (to_string(sweep) + "_" + value);

    std::filesystem::path ckpt_path = shared_ckpt;
    if (sweep != Sweep::kSupervision || shared_ckpt.empty()) {
      ckpt_path = train::train_constructor(train_scenes, cfg, cell).checkpoint;
      if (sweep == Sweep::kSupervision) shared_ckpt = ckpt_path;
    }
    const auto constructor = ckpt::load(ckpt_path);
    const auto c_rows = summarize(evaluate(*constructor.net, eval_scenes));

    cfg.stage = train::Stage::kDew;
    const auto dew_ckpt = train::train_dew(train_scenes, constructor.net.get(), cfg, cell).checkpoint;
    const auto dew = ckpt::load(dew_ckpt);
    const auto d_rows = summarize(evaluate(*dew.net, eval_scenes));

    rows.push_back({to_string(sweep), value, cfg.seed, c_rows.back().psnr_db, c_rows.back().ssim, d_rows.back().psnr_db,
                    d_rows.back().ssim});
  }
  write_ablation_csv(out_dir / ("ablation_" + to_string(sweep) + ".csv"), rows);
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_csv(path);
  out << "sweep,value,seed,constructor_psnr,constructor_ssim,dew_psnr,dew_ssim\n";
  for (const auto& r : rows)
    out << r.sweep << ',' << r.value << ',' << r.seed << ',' << r.constructor_psnr << ',' << r.constructor_ssim << ','
        << r.dew_psnr << ',' << r.dew_ssim << '\n';
}

}  // namespace dw::eval
