#include "rtsrts/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"

namespace rtsrts::checkpoint {

using nlohmann::json;
using network::NetworkConfig;

std::string network_config_json(const NetworkConfig& c) {
  json j = {{"input_size", c.input_size},
            {"levels", c.levels},
            {"base_channels", c.base_channels},
            {"enable_seg_branch", c.enable_seg_branch},
            {"enable_aec", c.enable_aec},
            {"enable_ure", c.enable_ure},
            {"attention_residual_init", c.attention_residual_init},
            {"aec_norm", c.aec_norm},
            {"bottleneck", network::to_string(c.bottleneck)},
            {"leaky_slope", c.leaky_slope}};
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  NetworkConfig c;
  try {
    const json j = json::parse(text);
    c.input_size = j.at("input_size").get<int>();
    c.levels = j.at("levels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.enable_seg_branch = j.at("enable_seg_branch").get<bool>();
    c.enable_aec = j.at("enable_aec").get<bool>();
    c.enable_ure = j.at("enable_ure").get<bool>();
    c.attention_residual_init = j.at("attention_residual_init").get<double>();
    c.aec_norm = j.at("aec_norm").get<bool>();
    c.bottleneck = network::bottleneck_from_string(j.at("bottleneck").get<std::string>());
    c.leaky_slope = j.at("leaky_slope").get<double>();
  } catch (const json::exception& e) {
    throw IoError(std::string("network config: ") + e.what());
  }
  return c;
}

namespace {

struct Writer {
  std::vector<std::uint8_t> bytes;
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
};

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  const std::string& source;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw IoError(source + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes[pos + b]) << (8 * b);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(bytes[pos + b]) << (8 * b);
    pos += 8;
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes.begin() + pos, bytes.begin() + pos + n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize(const network::ModelState<float>& model) {
  Writer w;
  w.raw("RTSC1");
  w.u32(kFormatVersion);
  const std::string cfg = network_config_json(model.config);
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.raw(cfg);
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& e : model.params.entries()) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) w.u64(static_cast<std::uint64_t>(d));
    for (float v : e.value.values()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  w.u32(io::crc32_of(w.bytes));
  return std::move(w.bytes);
}

network::ModelState<float> deserialize(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), "RTSC1", 5) != 0) {
    throw IoError(source + ": not an RTSC1 checkpoint");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail{bytes, bytes.size() - 4, source};
  if (tail.u32() != io::crc32_of(body)) throw IoError(source + ": checkpoint checksum mismatch");

  Reader r{body, 5, source};
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw IoError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const NetworkConfig cfg = network_config_from_json(r.raw(r.u32()));
  network::ModelState<float> model;
  try {
    model = network::build(cfg, 0);
  } catch (const ValidationError& e) {
    throw IoError(source + ": invalid network config: " + e.what());
  }
  const std::uint32_t count = r.u32();
  if (count != model.params.size()) {
    throw IoError(source + ": " + std::to_string(count) + " parameters, configuration defines " +
                  std::to_string(model.params.size()));
  }
  for (auto& e : model.params.entries()) {
    const std::string name = r.raw(r.u32());
    if (name != e.name) throw IoError(source + ": expected parameter '" + e.name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    tensor::Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(static_cast<std::int64_t>(r.u64()));
    if (shape != e.value.shape()) {
      throw IoError(source + ": parameter " + name + " has shape " + tensor::to_string(shape) + ", expected " +
                    tensor::to_string(e.value.shape()));
    }
    auto dst = e.value.mutable_values();
    for (auto& v : dst) v = std::bit_cast<float>(r.u32());
  }
  if (r.pos != body.size()) throw IoError(source + ": trailing bytes after parameters");
  return model;
}

void save(const std::filesystem::path& path, const network::ModelState<float>& model) {
  io::write_file(path, serialize(model));
}

network::ModelState<float> load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path), path.string());
}

}  // namespace rtsrts::checkpoint
