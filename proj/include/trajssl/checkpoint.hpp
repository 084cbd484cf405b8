#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "trajssl/errors.hpp"
#include "trajssl/nn.hpp"

namespace trajssl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'S', 'L',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned binary container: magic, version, config echo (JSON text), then
// named parameter tensors as (name, shape, little-endian float32 data).
// Parameters are written in registration order; values are narrowed from
// the in-memory doubles.
inline void save_checkpoint(const std::string& path, const Model& model,
                            const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);

  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };

  out.write(kCheckpointMagic, 8);
  put_u32(kCheckpointVersion);
  put_u64(config_echo.size());
  out.write(config_echo.data(), std::streamsize(config_echo.size()));

  const auto& params = model.params.all();
  put_u32(std::uint32_t(params.size()));
  for (const auto& p : params) {
    put_u32(std::uint32_t(p.name().size()));
    out.write(p.name().data(), std::streamsize(p.name().size()));
    put_u32(std::uint32_t(p.shape().size()));
    for (int d : p.shape()) put_u32(std::uint32_t(d));
    std::vector<float> data(p.numel());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = float(p.data()[i]);
    out.write(reinterpret_cast<const char*>(data.data()),
              std::streamsize(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = 0;
  std::string config_echo;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& tensor(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw VersionError("checkpoint: missing parameter " + name);
  }
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);

  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };

  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw VersionError("load_checkpoint: not a checkpoint file: " + path);
  }
  Checkpoint ck;
  ck.version = get_u32();
  if (ck.version != kCheckpointVersion) {
    throw VersionError("load_checkpoint: unsupported version " +
                       std::to_string(ck.version));
  }
  const std::uint64_t echo_len = get_u64();
  ck.config_echo.resize(echo_len);
  in.read(ck.config_echo.data(), std::streamsize(echo_len));

  const std::uint32_t count = get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const std::uint32_t name_len = get_u32();
    t.name.resize(name_len);
    in.read(t.name.data(), std::streamsize(name_len));
    const std::uint32_t rank = get_u32();
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(int(get_u32()));
      numel *= std::size_t(t.shape.back());
    }
    t.data.resize(numel);
    in.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(numel * sizeof(float)));
    if (!in) throw IoError("load_checkpoint: truncated file " + path);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

// Overwrites the model's parameters with checkpoint values; shapes and the
// name set must match the built model exactly.
inline void restore_params(Model& model, const Checkpoint& ck) {
  const auto& params = model.params.all();
  if (params.size() != ck.tensors.size()) {
    throw VersionError("checkpoint: parameter count mismatch");
  }
  for (const auto& p : params) {
    const CheckpointTensor& t = ck.tensor(p.name());
    if (t.shape != p.shape()) {
      throw VersionError("checkpoint: shape mismatch for " + p.name());
    }
    auto& data = const_cast<Tensor&>(p).data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = double(t.data[i]);
  }
}

}  // namespace trajssl
