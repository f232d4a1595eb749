#include "dw/models.hpp"

#include <algorithm>
#include <cmath>

namespace dw::model {

namespace {

constexpr double kSlope = 0.2;
constexpr double kInputClamp = 0.995;

ConvUnit make_unit(nn::ParameterStore& store, const std::string& name, int in, int out, int k, int stride,
                   RandomStream& rng, Norm norm) {
  ConvUnit u;
  u.conv = nn::make_conv(store, name, in, out, k, stride, rng);
  if (norm == Norm::kBatch) u.bn = nn::make_batch_norm(store, name + ".bn", out);
  return u;
}

std::vector<ResBlock> make_blocks(nn::ParameterStore& store, const std::string& name, int ch, int count,
                                  RandomStream& rng, Norm norm) {
  std::vector<ResBlock> blocks;
  for (int i = 0; i < count; ++i) {
    const std::string p = name + ".res" + std::to_string(i);
    blocks.push_back({make_unit(store, p + ".a", ch, ch, 3, 1, rng, norm), make_unit(store, p + ".b", ch, ch, 3, 1, rng, norm)});
  }
  return blocks;
}

Encoder make_encoder(nn::ParameterStore& store, const std::string& name, const BackboneConfig& cfg, RandomStream& rng) {
  Encoder e;
  e.stem = make_unit(store, name + ".stem", 3, cfg.channels(0), 3, 1, rng, cfg.norm);
  for (int i = 1; i <= cfg.depth; ++i) {
    const std::string p = name + ".down" + std::to_string(i);
    e.down.push_back(make_unit(store, p, cfg.channels(i - 1), cfg.channels(i), 3, 2, rng, cfg.norm));
    e.blocks.push_back(make_blocks(store, p, cfg.channels(i), cfg.resblocks_per_stage, rng, cfg.norm));
  }
  return e;
}

Decoder make_decoder(nn::ParameterStore& store, const std::string& name, const BackboneConfig& cfg, RandomStream& rng,
                     bool zero_final) {
  Decoder d;
  for (int i = cfg.depth; i >= 1; --i) {
    const std::string p = name + ".up" + std::to_string(i);
    d.up.push_back(make_unit(store, p + ".conv", cfg.channels(i), cfg.channels(i - 1), 3, 1, rng, cfg.norm));
    d.merge.push_back(make_unit(store, p + ".merge", 2 * cfg.channels(i - 1), cfg.channels(i - 1), 3, 1, rng, cfg.norm));
    d.blocks.push_back(make_blocks(store, p, cfg.channels(i - 1), cfg.resblocks_per_stage, rng, cfg.norm));
  }
  d.head = nn::make_conv(store, name + ".head", cfg.channels(0), 3, 3, 1, rng, zero_final);
  return d;
}

gat::GatLayer make_gat(nn::ParameterStore& store, const std::string& name, int d, RandomStream& rng) {
  Tensor w({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) w[static_cast<std::size_t>(i) * d + j] = (i == j ? 1.0 : 0.0) + 0.01 * rng.normal();
  Tensor a({2 * d});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.01 * rng.normal();
  return {store.add(name + ".w", std::move(w)), store.add(name + ".a", std::move(a)), kSlope, gat::Activation::kElu};
}

Tensor sample_map(const Tensor& batch, int b) {
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  Tensor out({c, h, w});
  std::copy(batch.data() + b * n, batch.data() + (b + 1) * n, out.data());
  return out;
}

}  // namespace

std::string to_string(Norm n) { return n == Norm::kBatch ? "batch" : "none"; }
std::string to_string(Aggregator a) { return a == Aggregator::kMean ? "mean" : "gat"; }
std::string to_string(Kind k) {
  switch (k) {
    case Kind::kClc: return "clc";
    case Kind::kCsaClc: return "csaclc";
    case Kind::kDew: return "dew";
  }
  return "?";
}

Norm parse_norm(const std::string& s) {
  if (s == "none") return Norm::kNone;
  if (s == "batch") return Norm::kBatch;
  throw Error(ErrorCode::kInvalidConfig, "unknown norm '" + s + "' (expected none|batch)");
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "gat") return Aggregator::kGat;
  if (s == "mean") return Aggregator::kMean;
  throw Error(ErrorCode::kInvalidConfig, "unknown aggregator '" + s + "' (expected gat|mean)");
}

Kind parse_kind(const std::string& s) {
  if (s == "clc") return Kind::kClc;
  if (s == "csaclc") return Kind::kCsaClc;
  if (s == "dew") return Kind::kDew;
  throw Error(ErrorCode::kInvalidConfig, "unknown model kind '" + s + "'");
}

void BackboneConfig::validate() const {
  DW_REQUIRE(base_channels >= 1, ErrorCode::kInvalidConfig, "base_channels must be >= 1");
  DW_REQUIRE(depth >= 1 && depth <= 5, ErrorCode::kInvalidConfig, "depth must be in [1, 5]");
  DW_REQUIRE(resblocks_per_stage >= 0, ErrorCode::kInvalidConfig, "resblocks_per_stage must be >= 0");
}

void ModelSpec::validate() const {
  backbone.validate();
  DW_REQUIRE(num_frames >= 1 && num_frames % 2 == 1, ErrorCode::kInvalidConfig, "num_frames must be odd and >= 1");
  if (kind == Kind::kCsaClc) {
    match.validate();
    DW_REQUIRE(2 * match.radius + 1 == num_frames, ErrorCode::kInvalidConfig,
               "match radius " + std::to_string(match.radius) + " does not fit " + std::to_string(num_frames) + " frames");
  }
}

ag::Var ConvUnit::operator()(const ag::Var& x, bool training, bool act) const {
  ag::Var y = conv(x);
  if (bn) y = (*bn)(y, training);
  return act ? ag::leaky_relu(y, kSlope) : y;
}

ag::Var ResBlock::operator()(const ag::Var& x, bool training) const {
  return ag::add(x, b(a(x, training), training, false));
}

std::vector<ag::Var> Encoder::operator()(const ag::Var& x, bool training) const {
  std::vector<ag::Var> feats{stem(x, training)};
  for (std::size_t i = 0; i < down.size(); ++i) {
    ag::Var h = down[i](feats.back(), training);
    for (const auto& blk : blocks[i]) h = blk(h, training);
    feats.push_back(h);
  }
  return feats;
}

ag::Var Decoder::operator()(const ag::Var& bottleneck, const std::vector<ag::Var>& skips, bool training,
                            const ag::Var* input) const {
  DW_REQUIRE(skips.size() == up.size(), ErrorCode::kInvalidInput, "decoder: skip count mismatch");
  ag::Var h = bottleneck;
  for (std::size_t i = 0; i < up.size(); ++i) {
    h = up[i](ag::upsample2x(h), training);
    h = merge[i](ag::concat({h, skips[skips.size() - 1 - i]}, 1), training);
    for (const auto& blk : blocks[i]) h = blk(h, training);
  }
  ag::Var pre = head(h);
  if (input) {
    Tensor base = input->value();
    for (double& v : base.vec()) v = std::atanh(std::clamp(v, -kInputClamp, kInputClamp));
    pre = ag::add(pre, ag::constant(std::move(base)));
  }
  return ag::tanh(pre);
}

Clc::Clc(const ModelSpec& spec, std::uint64_t seed) : Network(spec) {
  spec_.kind = Kind::kClc;
  spec_.validate();
  RandomStream rng(seed);
  const auto& cfg = spec_.backbone;
  for (int f = 0; f < spec_.num_frames; ++f) encoders_.push_back(make_encoder(store_, "enc" + std::to_string(f), cfg, rng));
  for (int l = 0; l <= cfg.depth; ++l) {
    align_.push_back(nn::make_conv(store_, "align" + std::to_string(l), spec_.num_frames * cfg.channels(l), cfg.channels(l),
                                   1, 1, rng));
  }
  decoder_ = make_decoder(store_, "dec", cfg, rng, spec_.zero_final);
}

ag::Var Clc::forward(const std::vector<ag::Var>& frames) const {
  DW_REQUIRE(static_cast<int>(frames.size()) == spec_.num_frames, ErrorCode::kInvalidConfig,
             "CLC expects " + std::to_string(spec_.num_frames) + " frames, got " + std::to_string(frames.size()));
  const int levels = spec_.backbone.depth + 1;
  std::vector<std::vector<ag::Var>> per_level(levels);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto feats = encoders_[f](frames[f], training_);
    for (int l = 0; l < levels; ++l) per_level[l].push_back(feats[l]);
  }
  std::vector<ag::Var> fused;
  for (int l = 0; l < levels; ++l) fused.push_back(align_[l](ag::concat(per_level[l], 1)));
  const ag::Var bottleneck = fused.back();
  fused.pop_back();
  const ag::Var* ref = spec_.backbone.input_skip ? &frames[frames.size() / 2] : nullptr;
  return decoder_(bottleneck, fused, training_, ref);
}

CsaClc::CsaClc(const ModelSpec& spec, std::uint64_t seed) : Network(spec) {
  spec_.kind = Kind::kCsaClc;
  spec_.validate();
  RandomStream rng(seed);
  const auto& cfg = spec_.backbone;
  encoder_ = make_encoder(store_, "enc", cfg, rng);
  const int d = cfg.bottleneck_channels() * spec_.match.patch_size * spec_.match.patch_size;
  gat_ = {make_gat(store_, "csa.gat0", d, rng), make_gat(store_, "csa.gat1", d, rng)};
  fuse_ = nn::make_conv(store_, "fuse", 2 * cfg.bottleneck_channels(), cfg.bottleneck_channels(), 1, 1, rng);
  decoder_ = make_decoder(store_, "dec", cfg, rng, spec_.zero_final);
}

CsaOutput CsaClc::forward(const std::vector<ag::Var>& frames, const ag::Var& gt) const {
  DW_REQUIRE(static_cast<int>(frames.size()) == spec_.num_frames, ErrorCode::kInvalidConfig,
             "CSA-CLC expects " + std::to_string(spec_.num_frames) + " frames, got " + std::to_string(frames.size()));
  const int div = spec_.backbone.divisor(spec_.match.patch_size);
  const Shape& in = gt.shape();
  DW_REQUIRE(in.size() == 4 && in[2] % div == 0 && in[3] % div == 0, ErrorCode::kInvalidGeometry,
             "input " + shape_str(in) + " not divisible by " + std::to_string(div));
  for (const auto& f : frames) DW_REQUIRE(f.shape() == in, ErrorCode::kInvalidGeometry, "frames and label differ in shape");

  const int t = spec_.match.radius;
  std::vector<ag::Var> bottlenecks;
  std::vector<ag::Var> skips;
  for (int f = 0; f < spec_.num_frames; ++f) {
    auto feats = encoder_(frames[f], training_);
    bottlenecks.push_back(feats.back());
    if (f == t) skips.assign(feats.begin(), feats.end() - 1);
  }
  const ag::Var f_gt = encoder_(gt, training_).back();

  std::vector<fcm::PatchGraphSet> graphs;
  for (int b = 0; b < in[0]; ++b) {
    std::vector<Tensor> maps;
    for (const auto& m : bottlenecks) maps.push_back(sample_map(m.value(), b));
    graphs.push_back(fcm::build_graph(maps, spec_.match));
  }
  const gat::CsaResult csa = spec_.aggregator == Aggregator::kGat
                                 ? gat::csa_forward(bottlenecks, graphs, gat_, spec_.match.patch_size)
                                 : gat::mean_forward(bottlenecks, graphs, spec_.match.patch_size);
  const ag::Var fused = fuse_(ag::concat({csa.f_agg, f_gt}, 1));
  const ag::Var* ref = spec_.backbone.input_skip ? &frames[t] : nullptr;
  return {decoder_(fused, skips, training_, ref), csa.f_agg, bottlenecks[t], f_gt};
}

Dew::Dew(const ModelSpec& spec, std::uint64_t seed) : Network(spec) {
  spec_.kind = Kind::kDew;
  spec_.num_frames = 1;
  spec_.validate();
  RandomStream rng(seed);
  encoder_ = make_encoder(store_, "enc", spec_.backbone, rng);
  decoder_ = make_decoder(store_, "dec", spec_.backbone, rng, spec_.zero_final);
}

DewOutput Dew::forward(const ag::Var& frame) const {
  auto feats = encoder_(frame, training_);
  const ag::Var g = feats.back();
  feats.pop_back();
  return {decoder_(g, feats, training_, spec_.backbone.input_skip ? &frame : nullptr), g};
}

ag::Var Dew::encode(const ag::Var& frame) const { return encoder_(frame, training_).back(); }

std::unique_ptr<Network> build(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case Kind::kClc: return std::make_unique<Clc>(spec, seed);
    case Kind::kCsaClc: return std::make_unique<CsaClc>(spec, seed);
    case Kind::kDew: return std::make_unique<Dew>(spec, seed);
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown model kind");
}

Image construct_pseudo(const Network& constructor, const std::vector<Image>& frames, const Image& gt) {
  ag::NoGradGuard guard;
  std::vector<ag::Var> inputs;
  for (const auto& f : frames) inputs.push_back(ag::constant(to_batch(f)));
  ag::Var out;
  if (const auto* clc = dynamic_cast<const Clc*>(&constructor)) {
    out = clc->forward(inputs);
  } else if (const auto* csa = dynamic_cast<const CsaClc*>(&constructor)) {
    out = csa->forward(inputs, ag::constant(to_batch(gt))).pseudo;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "construct_pseudo: not a label constructor");
  }
  return from_batch(out.value(), 0);
}

}  // namespace dw::model
