#include "finp/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "finp/error.hpp"
#include "json.hpp"

namespace finp {

namespace {

constexpr const char* kFormat = "finp-checkpoint";

void put_f32_le(std::string& out, float f) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xffu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace

nn::ModelParams quantize_f32(const nn::ModelParams& model) {
  nn::ModelParams out = model;
  quantize_f32_inplace(out);
  return out;
}

void quantize_f32_inplace(nn::ModelParams& model) {
  for (double& x : model.flat()) x = static_cast<double>(static_cast<float>(x));
}

std::string encode_checkpoint(const nn::ModelParams& model, const Lineage& lineage) {
  nlohmann::ordered_json h;
  h["format"] = kFormat;
  h["version"] = 1;
  h["layer_sizes"] = model.arch().layer_sizes;
  h["activation"] = std::string(nn::activation_name(model.arch().activation));
  h["param_count"] = model.size();
  h["dtype"] = "float32";
  h["lineage"] = {{"seed", lineage.seed}, {"round", lineage.round}, {"client", lineage.client}};
  std::string out = h.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * model.size());
  for (double x : model.flat()) put_f32_le(out, static_cast<float>(x));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) fail(ErrorKind::data, "checkpoint: missing header line");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint: bad header: ") + e.what());
  }
  if (h.value("format", "") != kFormat) fail(ErrorKind::data, "checkpoint: unknown format");
  if (h.value("dtype", "") != "float32") fail(ErrorKind::data, "checkpoint: unsupported dtype");
  Checkpoint ck;
  nn::Architecture arch;
  try {
    arch.layer_sizes = h.at("layer_sizes").get<std::vector<std::size_t>>();
    arch.activation = nn::parse_activation(h.at("activation").get<std::string>());
    const auto count = h.at("param_count").get<std::size_t>();
    arch.validate();
    if (count != arch.param_count())
      fail(ErrorKind::data, "checkpoint: param_count disagrees with layer sizes");
    const auto& lin = h.at("lineage");
    ck.lineage.seed = lin.at("seed").get<std::uint64_t>();
    ck.lineage.round = lin.at("round").get<std::int64_t>();
    ck.lineage.client = lin.at("client").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint: bad header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::data, std::string("checkpoint: ") + e.what());
  }
  const std::size_t d = arch.param_count();
  const std::size_t payload = bytes.size() - nl - 1;
  if (payload != 4 * d)
    fail(ErrorKind::data, "checkpoint: payload is " + std::to_string(payload) + " bytes, expected " +
                              std::to_string(4 * d));
  std::vector<double> flat(d);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (std::size_t i = 0; i < d; ++i) flat[i] = static_cast<double>(get_f32_le(p + 4 * i));
  ck.model = nn::ModelParams(std::move(arch), std::move(flat));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const nn::ModelParams& model,
                     const Lineage& lineage) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(model, lineage);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::io, "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::uint64_t wire_hash(const nn::ModelParams& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : model.flat()) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
    for (int i = 0; i < 4; ++i) {
      h ^= (u >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace finp
