#include "dw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace dw::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

json spec_to_json(const model::ModelSpec& s) {
  return {{"kind", model::to_string(s.kind)},
          {"num_frames", s.num_frames},
          {"aggregator", model::to_string(s.aggregator)},
          {"zero_final", s.zero_final},
          {"backbone",
           {{"base_channels", s.backbone.base_channels},
            {"depth", s.backbone.depth},
            {"resblocks_per_stage", s.backbone.resblocks_per_stage},
            {"norm", model::to_string(s.backbone.norm)},
            {"input_skip", s.backbone.input_skip}}},
          {"match",
           {{"patch_size", s.match.patch_size},
            {"padding", s.match.padding},
            {"top_k", s.match.top_k},
            {"radius", s.match.radius}}}};
}

model::ModelSpec spec_from_json(const json& j) {
  model::ModelSpec s;
  s.kind = model::parse_kind(j.at("kind").get<std::string>());
  s.num_frames = j.at("num_frames").get<int>();
  s.aggregator = model::parse_aggregator(j.at("aggregator").get<std::string>());
  s.zero_final = j.at("zero_final").get<bool>();
  const json& b = j.at("backbone");
  s.backbone.base_channels = b.at("base_channels").get<int>();
  s.backbone.depth = b.at("depth").get<int>();
  s.backbone.resblocks_per_stage = b.at("resblocks_per_stage").get<int>();
  s.backbone.norm = model::parse_norm(b.at("norm").get<std::string>());
  s.backbone.input_skip = b.at("input_skip").get<bool>();
  const json& m = j.at("match");
  s.match.patch_size = m.at("patch_size").get<int>();
  s.match.padding = m.at("padding").get<int>();
  s.match.top_k = m.at("top_k").get<int>();
  s.match.radius = m.at("radius").get<int>();
  return s;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save(const std::filesystem::path& path, const model::Network& net, const std::map<std::string, std::string>& info) {
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& e : net.parameters().entries()) {
    params.push_back({{"name", e.name}, {"shape", e.var.shape()}, {"offset", offset}, {"trainable", e.trainable}});
    offset += e.var.size();
  }
  const json header = {{"spec", spec_to_json(net.spec())}, {"info", info}, {"params", params}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    DW_REQUIRE(out.good(), ErrorCode::kIoFailure, "cannot write " + tmp.string());
    out.write("DWCK", 4);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : net.parameters().entries()) {
      out.write(reinterpret_cast<const char*>(e.var.value().data()),
                static_cast<std::streamsize>(e.var.size() * sizeof(double)));
    }
    DW_REQUIRE(out.good(), ErrorCode::kIoFailure, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Loaded load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  DW_REQUIRE(in.good(), ErrorCode::kIoFailure, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  DW_REQUIRE(in.good() && std::memcmp(magic, "DWCK", 4) == 0, ErrorCode::kInvalidInput,
             path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  DW_REQUIRE(version == kFormatVersion, ErrorCode::kInvalidInput,
             "unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  DW_REQUIRE(in.good() && len < (1ULL << 30), ErrorCode::kInvalidInput, "corrupt checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  DW_REQUIRE(in.good(), ErrorCode::kIoFailure, "truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("checkpoint header: ") + e.what());
  }
  const std::streampos data_start = in.tellg();

  Loaded out;
  try {
    out.net = model::build(spec_from_json(header.at("spec")), 0);
    out.info = header.at("info").get<std::map<std::string, std::string>>();
    auto& store = out.net->parameters();
    std::size_t stored = 0;
    for (const auto& p : header.at("params")) {
      const auto name = p.at("name").get<std::string>();
      ag::Var var = store.get(name);
      DW_REQUIRE(p.at("shape").get<Shape>() == var.shape(), ErrorCode::kInvalidInput,
                 "shape mismatch for parameter " + name);
      in.seekg(data_start + static_cast<std::streamoff>(p.at("offset").get<std::size_t>() * sizeof(double)));
      in.read(reinterpret_cast<char*>(var.mutable_value().data()),
              static_cast<std::streamsize>(var.size() * sizeof(double)));
      DW_REQUIRE(in.good(), ErrorCode::kIoFailure, "truncated data for parameter " + name);
      ++stored;
    }
    DW_REQUIRE(stored == store.entries().size(), ErrorCode::kInvalidInput, "checkpoint is missing parameters");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("checkpoint header: ") + e.what());
  }
  return out;
}

}  // namespace dw::ckpt
