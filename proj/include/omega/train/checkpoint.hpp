#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "omega/error.hpp"
#include "omega/model/config.hpp"
#include "omega/model/params.hpp"

// Binary layout, little-endian:
//   "OMGA" | u32 version | u32 config bytes, key=value lines |
//   u32 tensor count | per tensor: u16 name length, name, u8 rank,
//   u32 dims..., f32 payload | u64 step | u32 CRC-32 of all preceding bytes

namespace omega::train {

inline constexpr char kCheckpointMagic[4] = {'O', 'M', 'G', 'A'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  model::ModelParams<float> params;
  std::uint64_t step = 0;
};

namespace detail {

class Writer {
 public:
  template <class U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <class U>
  U get(const char* what) {
    U v{};
    take(&v, sizeof(U), what);
    return v;
  }
  void take(void* out, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CorruptionError(std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const model::ModelParams<float>& params,
                                              std::uint64_t step) {
  detail::Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string cfg = params.config.to_text();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.put_bytes(cfg.data(), cfg.size());
  std::uint32_t count = 0;
  model::visit_model(params, [&](const std::string&, const numerics::Tensor&, model::TensorRole) {
    ++count;
  });
  w.put<std::uint32_t>(count);
  model::visit_model(params, [&](const std::string& name, const numerics::Tensor& t,
                                 model::TensorRole) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(t.data().data(), t.numel() * sizeof(float));
  });
  w.put<std::uint64_t>(step);
  w.put<std::uint32_t>(detail::crc32_of(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

/// Validates everything before returning; a partially read model is never
/// handed out. Structural problems are reported first so that they can name
/// the offending field; the checksum then catches damaged payload bytes.
inline Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  detail::Reader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw CorruptionError("checkpoint truncated before magic bytes");
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto cfg_len = r.get<std::uint32_t>("config length");
  if (cfg_len > r.remaining()) throw CorruptionError("checkpoint truncated in config block");
  std::string cfg_text(cfg_len, '\0');
  r.take(cfg_text.data(), cfg_len, "config block");
  model::ModelConfig config;
  try {
    config = model::ModelConfig::from_text(cfg_text);
    config.validate();
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("checkpoint config block invalid: ") + e.what());
  }

  Checkpoint out{model::make_params<float>(config), 0};
  std::map<std::string, numerics::Tensor*> expected;
  model::visit_model(out.params, [&](const std::string& name, numerics::Tensor& t,
                                     model::TensorRole) { expected.emplace(name, &t); });
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != expected.size()) {
    throw CorruptionError("checkpoint holds " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(expected.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    std::string name(name_len, '\0');
    r.take(name.data(), name_len, "tensor name");
    const auto it = expected.find(name);
    if (it == expected.end() || !it->second) {
      throw CorruptionError("checkpoint tensor '" + name + "' is unknown or duplicated");
    }
    numerics::Tensor& t = *it->second;
    it->second = nullptr;
    const auto rank = r.get<std::uint8_t>("tensor rank");
    numerics::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("tensor dims");
    if (shape != t.shape()) {
      throw CorruptionError("checkpoint tensor '" + name + "' has shape " +
                            numerics::shape_str(shape) + ", config implies " +
                            numerics::shape_str(t.shape()));
    }
    r.take(t.data().data(), t.numel() * sizeof(float), name.c_str());
  }
  out.step = r.get<std::uint64_t>("step counter");
  const std::size_t body = r.position();
  const auto stored_crc = r.get<std::uint32_t>("checksum");
  if (r.remaining() != 0) {
    throw CorruptionError(std::to_string(r.remaining()) + " trailing bytes after checkpoint");
  }
  if (detail::crc32_of(bytes.data(), body) != stored_crc) {
    throw CorruptionError("checkpoint checksum mismatch: payload is damaged");
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const model::ModelParams<float>& params, std::uint64_t step = 0) {
  const std::vector<char> bytes = serialize_checkpoint(params, step);
  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

/// Loads and requires the architecture to match `expected` (seed aside).
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const model::ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!c.params.config.same_geometry(expected)) {
    throw ConfigMismatchError("checkpoint architecture does not match the requested config:\n" +
                              c.params.config.to_text() + "requested:\n" + expected.to_text());
  }
  return c;
}

}  // namespace omega::train
