#include "dw/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <sstream>

namespace dw::config {

namespace {

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

template <typename T>
T parse_number(const std::string& section, const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  DW_REQUIRE(res.ec == std::errc() && res.ptr == end, ErrorCode::kInvalidConfig,
             where(section, key) + ": cannot parse '" + value + "' as a number");
  return out;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::kInvalidConfig, where(section, key) + ": expected a boolean, got '" + value + "'");
}

std::vector<synth::Weather> parse_weathers(const std::string& value) {
  std::vector<synth::Weather> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, '|')) out.push_back(synth::parse_weather(item));
  DW_REQUIRE(!out.empty(), ErrorCode::kInvalidConfig, "[data] weathers: empty list");
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Config from_tree(const boost::property_tree::ptree& tree) {
  Config cfg;
  for (const auto& [section, body] : tree) {
    DW_REQUIRE(!body.empty(), ErrorCode::kInvalidConfig, "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set(cfg, section, key, trim(value.data()));
  }
  return cfg;
}

}  // namespace

void set(Config& cfg, const std::string& section, const std::string& key, const std::string& value) {
  auto& d = cfg.data;
  auto& t = cfg.train;
  const auto i = [&] { return parse_number<int>(section, key, value); };
  const auto f = [&] { return parse_number<double>(section, key, value); };
  const auto u = [&] { return parse_number<std::uint64_t>(section, key, value); };
  const auto b = [&] { return parse_bool(section, key, value); };

  if (section == "data") {
    if (key == "dir") d.dir = value;
    else if (key == "scenes") d.scenes = i();
    else if (key == "height") d.height = i();
    else if (key == "width") d.width = i();
    else if (key == "num_frames") d.num_frames = i();
    else if (key == "density") d.density = f();
    else if (key == "inconsistency") d.inconsistency = synth::InconsistencySet::parse(value);
    else if (key == "weathers") d.weathers = parse_weathers(value);
    else if (key == "seed") d.seed = u();
    else throw Error(ErrorCode::kInvalidConfig, "unknown key " + where(section, key));
  } else if (section == "model") {
    if (key == "base_channels") t.backbone.base_channels = i();
    else if (key == "depth") t.backbone.depth = i();
    else if (key == "resblocks_per_stage") t.backbone.resblocks_per_stage = i();
    else if (key == "norm") t.backbone.norm = model::parse_norm(value);
    else if (key == "input_skip") t.backbone.input_skip = b();
    else if (key == "aggregator") t.aggregator = model::parse_aggregator(value);
    else throw Error(ErrorCode::kInvalidConfig, "unknown key " + where(section, key));
  } else if (section == "match") {
    if (key == "patch_size") t.match.patch_size = i();
    else if (key == "padding") t.match.padding = i();
    else if (key == "top_k") t.match.top_k = i();
    else if (key == "frames") t.frames = i();
    else throw Error(ErrorCode::kInvalidConfig, "unknown key " + where(section, key));
  } else if (section == "train") {
    if (key == "epochs") t.epochs = i();
    else if (key == "batch_size") t.batch_size = i();
    else if (key == "crop") t.crop = i();
    else if (key == "rotate") t.rotate = b();
    else if (key == "lr_warm_start") t.lr_warm_start = f();
    else if (key == "lr_peak") t.lr_peak = f();
    else if (key == "lr_floor") t.lr_floor = f();
    else if (key == "warmup_epochs") t.warmup_epochs = i();
    else if (key == "adam_beta1") t.adam_beta1 = f();
    else if (key == "adam_beta2") t.adam_beta2 = f();
    else if (key == "seed") t.seed = u();
    else if (key == "stage") t.stage = train::parse_stage(value);
    else if (key == "supervision") t.supervision = train::parse_supervision(value);
    else if (key == "checkpoint_every") t.checkpoint_every = i();
    else if (key == "constructor_rain_robust") t.constructor_rain_robust = b();
    else if (key == "sw_projections") t.sw_projections = i();
    else throw Error(ErrorCode::kInvalidConfig, "unknown key " + where(section, key));
  } else if (section == "loss") {
    if (key == "tau") t.weights.tau = f();
    else if (key == "lambda1") t.weights.lambda1 = f();
    else if (key == "lambda2") t.weights.lambda2 = f();
    else if (key == "lambda_o") t.weights.lambda_o = f();
    else if (key == "lambda_d") t.weights.lambda_d = f();
    else throw Error(ErrorCode::kInvalidConfig, "unknown key " + where(section, key));
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown section [" + section + "]");
  }
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  DW_REQUIRE(eq != std::string::npos && dot != std::string::npos && dot < eq, ErrorCode::kInvalidConfig,
             "override '" + assignment + "' is not of the form section.key=value");
  set(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      trim(assignment.substr(eq + 1)));
}

Config parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

Config load(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  DW_REQUIRE(std::filesystem::exists(path), ErrorCode::kIoFailure, "config file not found: " + path.string());
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

std::string dump(const Config& cfg) {
  const auto& d = cfg.data;
  const auto& t = cfg.train;
  std::ostringstream out;
  out.precision(17);
  std::string weathers;
  for (const auto w : d.weathers) weathers += (weathers.empty() ? "" : "|") + synth::to_string(w);
  out << "[data]\n"
      << "dir = " << d.dir.string() << "\nscenes = " << d.scenes << "\nheight = " << d.height << "\nwidth = " << d.width
      << "\nnum_frames = " << d.num_frames << "\ndensity = " << d.density
      << "\ninconsistency = " << d.inconsistency.to_string() << "\nweathers = " << weathers << "\nseed = " << d.seed
      << "\n\n[model]\n"
      << "base_channels = " << t.backbone.base_channels << "\ndepth = " << t.backbone.depth
      << "\nresblocks_per_stage = " << t.backbone.resblocks_per_stage << "\nnorm = " << model::to_string(t.backbone.norm)
      << "\ninput_skip = " << (t.backbone.input_skip ? "true" : "false")
      << "\naggregator = " << model::to_string(t.aggregator) << "\n\n[match]\n"
      << "patch_size = " << t.match.patch_size << "\npadding = " << t.match.padding << "\ntop_k = " << t.match.top_k
      << "\nframes = " << t.frames << "\n\n[train]\n"
      << "epochs = " << t.epochs << "\nbatch_size = " << t.batch_size << "\ncrop = " << t.crop
      << "\nrotate = " << (t.rotate ? "true" : "false") << "\nlr_warm_start = " << t.lr_warm_start
      << "\nlr_peak = " << t.lr_peak << "\nlr_floor = " << t.lr_floor << "\nwarmup_epochs = " << t.warmup_epochs
      << "\nadam_beta1 = " << t.adam_beta1 << "\nadam_beta2 = " << t.adam_beta2 << "\nseed = " << t.seed
      << "\nstage = " << train::to_string(t.stage) << "\nsupervision = " << train::to_string(t.supervision)
      << "\ncheckpoint_every = " << t.checkpoint_every
      << "\nconstructor_rain_robust = " << (t.constructor_rain_robust ? "true" : "false")
      << "\nsw_projections = " << t.sw_projections << "\n\n[loss]\n"
      << "tau = " << t.weights.tau << "\nlambda1 = " << t.weights.lambda1 << "\nlambda2 = " << t.weights.lambda2
      << "\nlambda_o = " << t.weights.lambda_o << "\nlambda_d = " << t.weights.lambda_d << "\n";
  return out.str();
}

}  // namespace dw::config
