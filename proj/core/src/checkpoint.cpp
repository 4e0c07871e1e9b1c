#include "vdepth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "vdepth/error.hpp"

namespace vdepth {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'D', 'C', 'K'};

template <typename Int>
void put(std::string& out, Int v) {
  char buf[sizeof(Int)];
  std::memcpy(buf, &v, sizeof(Int));
  out.append(buf, sizeof(Int));
}

template <typename Int>
Int get(const std::string& in, std::size_t offset) {
  Int v;
  std::memcpy(&v, in.data() + offset, sizeof(Int));
  return v;
}

std::uint32_t checksum(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const NamedArray* CheckpointBundle::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::string serialize_checkpoint(const CheckpointBundle& bundle) {
  nlohmann::ordered_json manifest;
  manifest["config"] = bundle.config;
  manifest["epoch"] = bundle.epoch;
  manifest["step"] = bundle.step;
  manifest["gen_optimizer_steps"] = bundle.gen_optimizer_steps;
  auto arrays = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& a : bundle.arrays) {
    arrays.push_back({{"name", a.name}, {"shape", a.value.shape()}, {"dtype", "f32"}, {"offset", offset}});
    offset += a.value.size() * sizeof(float);
  }
  manifest["arrays"] = std::move(arrays);
  const std::string header = manifest.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, bundle.version);
  put<std::uint64_t>(out, header.size());
  out += header;
  out.reserve(out.size() + offset + 4);
  for (const auto& a : bundle.arrays)
    out.append(reinterpret_cast<const char*>(a.value.data()), a.value.size() * sizeof(float));
  put<std::uint32_t>(out, checksum(out.data(), out.size()));
  return out;
}

CheckpointBundle deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (bytes.size() < kPrefix + 4) throw CorruptionError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptionError("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) throw VersionMismatchError(version, kCheckpointVersion);
  const auto stored = get<std::uint32_t>(bytes, bytes.size() - 4);
  if (checksum(bytes.data(), bytes.size() - 4) != stored) throw CorruptionError("checkpoint: checksum mismatch");
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix - 4) throw CorruptionError("checkpoint: manifest overruns file");

  CheckpointBundle b;
  b.version = version;
  const std::size_t payload = kPrefix + header_len;
  const std::size_t payload_len = bytes.size() - 4 - payload;
  try {
    const auto m = nlohmann::json::parse(bytes.substr(kPrefix, header_len));
    b.config = m.at("config").get<ConfigMap>();
    b.epoch = m.at("epoch").get<std::int64_t>();
    b.step = m.at("step").get<std::int64_t>();
    b.gen_optimizer_steps = m.at("gen_optimizer_steps").get<std::int64_t>();
    for (const auto& entry : m.at("arrays")) {
      if (entry.at("dtype").get<std::string>() != "f32")
        throw CorruptionError("checkpoint: unsupported dtype " + entry.at("dtype").get<std::string>());
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      a.value = Tensor<float>(shape);
      const std::size_t n = a.value.size() * sizeof(float);
      if (offset > payload_len || n > payload_len - offset)
        throw CorruptionError("checkpoint: array " + a.name + " overruns payload");
      std::memcpy(a.value.data(), bytes.data() + payload + offset, n);
      b.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return b;
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(bundle);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace vdepth
