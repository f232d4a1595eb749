#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dw/config.hpp"
#include "dw/metrics.hpp"
#include "dw/models.hpp"

/// Per-scene evaluation, per-weather summaries and ablation sweeps.
namespace dw::eval {

enum class Against { kOracle, kMisalignedGt };
std::string to_string(Against a);
Against parse_against(const std::string& s);

struct MetricsRecord {
  std::string scene_id;
  synth::Weather weather = synth::Weather::kRain;
  double psnr_db = 0.0;
  double ssim = 0.0;
  Against against = Against::kOracle;
};

struct SummaryRow {
  std::string group;  // rain | snow | fog | overall
  int count = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// Scores `outputs[i]` against scene i's reference.
std::vector<MetricsRecord> score(const std::vector<synth::Scene>& scenes, const std::vector<Image>& outputs,
                                 Against against);

/// Runs `net` on every scene and scores the result. A De-W model restores the
/// centre frame; a constructor produces the pseudo-label from its frame window.
std::vector<Image> infer(const model::Network& net, const std::vector<synth::Scene>& scenes);
std::vector<MetricsRecord> evaluate(const model::Network& net, const std::vector<synth::Scene>& scenes,
                                    Against against = Against::kOracle);

/// Per-weather means (weathers present only, fixed order) then the overall mean.
std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records);

void write_records_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

enum class Sweep { kSupervision, kFrames, kPadding, kTopK, kAggregator };
std::string to_string(Sweep s);
Sweep parse_sweep(const std::string& s);

struct AblationRow {
  std::string sweep;
  std::string value;
  std::uint64_t seed = 0;
  double constructor_psnr = 0.0;
  double constructor_ssim = 0.0;
  double dew_psnr = 0.0;
  double dew_ssim = 0.0;
};

/// Grid values swept for `sweep`.
std::vector<std::string> sweep_values(Sweep sweep);

/// Trains constructor (CSA-CLC) and De-W per grid cell from `base` with the
/// same seed, scores both on `eval_scenes` against the oracle, and writes
/// `<out>/ablation_<sweep>.csv`. Constructors that a cell does not change are shared.
std::vector<AblationRow> ablate(Sweep sweep, const config::Config& base, const std::vector<synth::Scene>& train_scenes,
                                const std::vector<synth::Scene>& eval_scenes, const std::filesystem::path& out_dir);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace dw::eval
