#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dw/losses.hpp"
#include "dw/models.hpp"
#include "dw/synth.hpp"

/// Two-stage training: constructor pretraining, then the de-weathering model
/// under joint supervision from the frozen constructor.
namespace dw::train {

enum class Stage { kClc, kCsaClc, kDew };
enum class Supervision { kJoint, kPseudo, kOriginal };

std::string to_string(Stage s);
std::string to_string(Supervision s);
Stage parse_stage(const std::string& s);
Supervision parse_supervision(const std::string& s);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  int crop = 32;
  bool rotate = true;  // random multiples of 90 degrees plus horizontal flip
  double lr_warm_start = 5e-5;
  double lr_peak = 2e-4;
  double lr_floor = 1e-6;
  int warmup_epochs = 4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  Stage stage = Stage::kCsaClc;
  Supervision supervision = Supervision::kJoint;
  int frames = 1;  // temporal radius n
  int checkpoint_every = 10;  // epochs; 0 keeps only the final checkpoint
  bool constructor_rain_robust = true;
  int sw_projections = 32;
  loss::LossWeights weights;
  fcm::MatchConfig match;
  model::BackboneConfig backbone;
  model::Aggregator aggregator = model::Aggregator::kGat;

  void validate() const;
  int num_frames() const { return 2 * frames + 1; }
};

/// Linear warm-up then cosine decay reaching `lr_floor` at the last step.
double lr_schedule(long step, long steps_per_epoch, const TrainConfig& cfg);

/// Same crop, rotation and flip for every frame, the label and the oracle.
synth::FrameWindow augment(const synth::FrameWindow& window, int crop, RandomStream& rng, bool rotate = true);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  double final_loss = 0.0;
  long steps = 0;
};

/// Optional observer called after every optimiser step.
using StepHook = std::function<void(long step, const loss::LossReport& report)>;

/// Trains a CLC (stage clc) or CSA-CLC (stage csaclc). Writes
/// `<out>/<stage>.dwck`, periodic `<out>/<stage>_eNNN.dwck` and `<out>/<stage>_loss.csv`.
TrainResult train_constructor(const std::vector<synth::Scene>& scenes, const TrainConfig& cfg,
                              const std::filesystem::path& out_dir, const StepHook& hook = {});

/// Trains the de-weathering model against a frozen constructor (may be null
/// for original-only supervision). Writes `<out>/dew.dwck` and `<out>/dew_loss.csv`.
TrainResult train_dew(const std::vector<synth::Scene>& scenes, const model::Network* constructor,
                      const TrainConfig& cfg, const std::filesystem::path& out_dir, const StepHook& hook = {});

/// Model spec implied by a training configuration for the given stage.
model::ModelSpec model_spec(const TrainConfig& cfg, Stage stage);

}  // namespace dw::train
