// dwx: data generation, training, evaluation, ablation and plotting.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "dw/checkpoint.hpp"
#include "dw/config.hpp"
#include "dw/evaluation.hpp"
#include "dw/plot.hpp"

namespace {

namespace fs = std::filesystem;

struct Shared {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--config", s.config_path, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", s.seed, "seed override");
  cmd->add_option("--out", s.out, "output directory");
  cmd->add_option("--set", s.overrides, "override as section.key=value (repeatable)");
}

dw::config::Config resolve(const Shared& s) {
  dw::config::Config cfg = s.config_path.empty() ? dw::config::Config{} : dw::config::load(s.config_path);
  for (const auto& o : s.overrides) dw::config::apply_override(cfg, o);
  return cfg;
}

fs::path out_dir(const Shared& s, const char* fallback) { return s.out.empty() ? fs::path(fallback) : fs::path(s.out); }

void save_config(const fs::path& dir, const dw::config::Config& cfg) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << dw::config::dump(cfg);
}

void print_summary(const std::vector<dw::eval::SummaryRow>& rows) {
  for (const auto& r : rows)
    std::cout << r.group << ": n=" << r.count << " psnr=" << r.psnr_db << " dB ssim=" << r.ssim << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label guided de-weathering toolkit"};
  app.require_subcommand(1);

  Shared gen_s, clc_s, dew_s, eval_s, abl_s, plot_s;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_shared(gen, gen_s);

  auto* clc = app.add_subcommand("train-clc", "train the label constructor (CLC or CSA-CLC)");
  add_shared(clc, clc_s);
  std::string clc_data, clc_stage;
  clc->add_option("--data", clc_data, "dataset directory (default: [data] dir)");
  clc->add_option("--stage", clc_stage, "clc | csaclc (default: [train] stage)");

  auto* dew = app.add_subcommand("train-dew", "train the de-weathering model");
  add_shared(dew, dew_s);
  std::string dew_data, dew_ckpt, dew_sup;
  dew->add_option("--data", dew_data, "dataset directory");
  dew->add_option("--constructor", dew_ckpt, "constructor checkpoint")->check(CLI::ExistingFile);
  dew->add_option("--supervision", dew_sup, "joint | pseudo | original");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_shared(ev, eval_s);
  std::string ev_data, ev_ckpt, ev_against = "oracle";
  ev->add_option("--data", ev_data, "dataset directory");
  ev->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  ev->add_option("--against", ev_against, "oracle | misaligned_gt");

  auto* abl = app.add_subcommand("ablate", "run an ablation sweep");
  add_shared(abl, abl_s);
  std::string abl_data, abl_eval_data, abl_sweep;
  abl->add_option("--sweep", abl_sweep, "supervision | frames | padding | topk | aggregator")->required();
  abl->add_option("--data", abl_data, "training dataset directory");
  abl->add_option("--eval-data", abl_eval_data, "evaluation dataset directory (default: training data)");

  auto* pl = app.add_subcommand("plot", "render SVG panels from CSV files");
  add_shared(pl, plot_s);
  std::vector<std::string> plot_inputs;
  pl->add_option("csv", plot_inputs, "CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = resolve(gen_s);
      if (gen_s.seed) cfg.data.seed = *gen_s.seed;
      const fs::path dir = gen_s.out.empty() ? cfg.data.dir : fs::path(gen_s.out);
      const auto& d = cfg.data;
      const auto specs = dw::synth::make_scene_specs(d.scenes, d.height, d.width, d.num_frames, d.density,
                                                     d.inconsistency, d.seed, d.weathers);
      const auto manifest = dw::synth::generate_dataset(
          specs, dir, cfg.train.backbone.divisor(cfg.train.match.patch_size));
      std::cout << "wrote " << manifest.entries.size() << " scenes to " << dir.string() << '\n';
    } else if (clc->parsed()) {
      auto cfg = resolve(clc_s);
      if (clc_s.seed) cfg.train.seed = *clc_s.seed;
      if (!clc_stage.empty()) cfg.train.stage = dw::train::parse_stage(clc_stage);
      if (cfg.train.stage == dw::train::Stage::kDew) cfg.train.stage = dw::train::Stage::kCsaClc;
      const auto scenes = dw::synth::load_dataset(clc_data.empty() ? cfg.data.dir : fs::path(clc_data));
      const fs::path out = out_dir(clc_s, "runs/constructor");
      save_config(out, cfg);
      const auto res = dw::train::train_constructor(scenes, cfg.train, out);
      std::cout << "checkpoint " << res.checkpoint.string() << " after " << res.steps
                << " steps, final loss " << res.final_loss << '\n';
    } else if (dew->parsed()) {
      auto cfg = resolve(dew_s);
      if (dew_s.seed) cfg.train.seed = *dew_s.seed;
      if (!dew_sup.empty()) cfg.train.supervision = dw::train::parse_supervision(dew_sup);
      cfg.train.stage = dw::train::Stage::kDew;
      const auto scenes = dw::synth::load_dataset(dew_data.empty() ? cfg.data.dir : fs::path(dew_data));
      std::optional<dw::ckpt::Loaded> constructor;
      if (!dew_ckpt.empty()) constructor = dw::ckpt::load(dew_ckpt);
      const fs::path out = out_dir(dew_s, "runs/dew");
      save_config(out, cfg);
      const auto res =
          dw::train::train_dew(scenes, constructor ? constructor->net.get() : nullptr, cfg.train, out);
      std::cout << "checkpoint " << res.checkpoint.string() << " after " << res.steps
                << " steps, final loss " << res.final_loss << '\n';
    } else if (ev->parsed()) {
      const auto cfg = resolve(eval_s);
      const auto scenes = dw::synth::load_dataset(ev_data.empty() ? cfg.data.dir : fs::path(ev_data));
      const auto model = dw::ckpt::load(ev_ckpt);
      const auto records = dw::eval::evaluate(*model.net, scenes, dw::eval::parse_against(ev_against));
      const auto rows = dw::eval::summarize(records);
      const fs::path out = out_dir(eval_s, "runs/eval");
      dw::eval::write_records_csv(out / "records.csv", records);
      dw::eval::write_summary_csv(out / "summary.csv", rows);
      print_summary(rows);
    } else if (abl->parsed()) {
      auto cfg = resolve(abl_s);
      if (abl_s.seed) cfg.train.seed = *abl_s.seed;
      const fs::path train_dir = abl_data.empty() ? cfg.data.dir : fs::path(abl_data);
      const auto train_scenes = dw::synth::load_dataset(train_dir);
      const auto eval_scenes =
          abl_eval_data.empty() ? train_scenes : dw::synth::load_dataset(abl_eval_data);
      const fs::path out = out_dir(abl_s, "runs/ablation");
      save_config(out, cfg);
      const auto rows = dw::eval::ablate(dw::eval::parse_sweep(abl_sweep), cfg, train_scenes, eval_scenes, out);
      for (const auto& r : rows)
        std::cout << r.sweep << '=' << r.value << " constructor " << r.constructor_psnr << " dB, dew " << r.dew_psnr
                  << " dB\n";
    } else if (pl->parsed()) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      for (const auto& p : dw::plot::plot(inputs, out_dir(plot_s, "plots"))) std::cout << p.string() << '\n';
    }
  } catch (const dw::Error& e) {
    std::cerr << "error [" << dw::to_string(e.code()) << "]: " << e.what() << '\n';
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
