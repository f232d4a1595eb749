#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dw/fcm.hpp"
#include "dw/gat.hpp"
#include "dw/nn.hpp"

/// U-Net style encoder-decoder networks: the multi-encoder CLC, the shared
/// encoder CSA-CLC and the single-frame de-weathering model.
namespace dw::model {

enum class Norm { kNone, kBatch };
enum class Aggregator { kGat, kMean };
enum class Kind { kClc, kCsaClc, kDew };

std::string to_string(Norm n);
std::string to_string(Aggregator a);
std::string to_string(Kind k);
Norm parse_norm(const std::string& s);
Aggregator parse_aggregator(const std::string& s);
Kind parse_kind(const std::string& s);

struct BackboneConfig {
  int base_channels = 16;
  int depth = 2;
  int resblocks_per_stage = 1;
  Norm norm = Norm::kNone;
  /// Adds atanh of the reference frame to the head's pre-activation, so a
  /// zero head reproduces the input.
  bool input_skip = true;

  void validate() const;
  int channels(int stage) const { return base_channels << stage; }
  int bottleneck_channels() const { return channels(depth); }
  /// Input sides must be multiples of this for patch size `s` at the bottleneck.
  int divisor(int patch_size) const { return (1 << depth) * patch_size; }
};

/// Everything needed to rebuild a network before loading its weights.
struct ModelSpec {
  Kind kind = Kind::kDew;
  BackboneConfig backbone;
  fcm::MatchConfig match;  // CSA-CLC only; match.radius fixes the frame count
  int num_frames = 1;      // CLC / CSA-CLC input frames
  Aggregator aggregator = Aggregator::kGat;
  bool zero_final = false;

  void validate() const;
};

/// conv -> [batch norm] -> LeakyReLU(0.2)
struct ConvUnit {
  nn::Conv2d conv;
  std::optional<nn::BatchNorm2d> bn;
  ag::Var operator()(const ag::Var& x, bool training, bool act = true) const;
};

struct ResBlock {
  ConvUnit a;
  ConvUnit b;
  ag::Var operator()(const ag::Var& x, bool training) const;
};

struct Encoder {
  ConvUnit stem;
  std::vector<ConvUnit> down;
  std::vector<std::vector<ResBlock>> blocks;
  /// Feature maps at every scale, finest first; the last entry is the bottleneck.
  std::vector<ag::Var> operator()(const ag::Var& x, bool training) const;
};

struct Decoder {
  std::vector<ConvUnit> up;      // coarse to fine
  std::vector<ConvUnit> merge;
  std::vector<std::vector<ResBlock>> blocks;
  nn::Conv2d head;
  /// `skips` finest first (bottleneck excluded); returns tanh output. A
  /// non-null `input` is the frame the head output is added to (pre-tanh).
  ag::Var operator()(const ag::Var& bottleneck, const std::vector<ag::Var>& skips, bool training,
                     const ag::Var* input = nullptr) const;
};

class Network {
 public:
  explicit Network(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~Network() = default;

  const ModelSpec& spec() const { return spec_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

 protected:
  ModelSpec spec_;
  nn::ParameterStore store_;
  bool training_ = false;
};

/// Distinct encoder per frame; concatenated features aligned by 1x1 convolutions.
class Clc final : public Network {
 public:
  Clc(const ModelSpec& spec, std::uint64_t seed);
  /// `frames[f]` is [B, 3, H, W] in [-1, 1]; returns the pseudo-label batch.
  ag::Var forward(const std::vector<ag::Var>& frames) const;

 private:
  std::vector<Encoder> encoders_;
  std::vector<nn::Conv2d> align_;
  Decoder decoder_;
};

struct CsaOutput {
  ag::Var pseudo;  // [B, 3, H, W]
  ag::Var f_agg;   // [B, C, h, w]
  ag::Var f_t;     // bottleneck of the current degraded frame
  ag::Var f_gt;    // bottleneck of the label
};

/// One shared encoder for all frames and the label; CSA at the bottleneck.
class CsaClc final : public Network {
 public:
  CsaClc(const ModelSpec& spec, std::uint64_t seed);
  CsaOutput forward(const std::vector<ag::Var>& frames, const ag::Var& gt) const;

  const Encoder& encoder() const { return encoder_; }
  const std::array<gat::GatLayer, 2>& gat_layers() const { return gat_; }

 private:
  Encoder encoder_;
  std::array<gat::GatLayer, 2> gat_;
  nn::Conv2d fuse_;
  Decoder decoder_;
};

struct DewOutput {
  ag::Var restored;    // [B, 3, H, W] in (-1, 1)
  ag::Var bottleneck;  // G_t
};

class Dew final : public Network {
 public:
  Dew(const ModelSpec& spec, std::uint64_t seed);
  DewOutput forward(const ag::Var& frame) const;
  /// Encoder bottleneck only.
  ag::Var encode(const ag::Var& frame) const;

 private:
  Encoder encoder_;
  Decoder decoder_;
};

/// Builds the network described by `spec` with seeded initial weights.
std::unique_ptr<Network> build(const ModelSpec& spec, std::uint64_t seed);

/// Constructor inference on plain images: pseudo-label for one window.
Image construct_pseudo(const Network& constructor, const std::vector<Image>& frames, const Image& gt);

}  // namespace dw::model
