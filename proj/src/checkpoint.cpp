// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint layout (little-endian):
//   "SVTN" | u16 version | config block | u32 tensor count |
//   per tensor: u8 kind (0 param, 1 buffer) | u32 name length | name |
//               u32 rows | u32 cols | rows*cols float64, row-major

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "svtnet/model.hpp"

namespace svtnet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'V', 'T', 'N'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <typename T>
  T get() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw std::runtime_error("truncated checkpoint");
  }

 private:
  std::istream& is_;
};

void write_tensor(Writer& w, std::uint8_t kind, const std::string& name, const Matrix& m) {
  w.put<std::uint8_t>(kind);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  w.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

}  // namespace

void SvtNet::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  Writer w(os);
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(config.variant));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(config.fusion));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(config.token_axis));
  w.put<std::int32_t>(config.descriptor_dim);
  w.put<std::int32_t>(config.tokens);
  w.put<std::int32_t>(config.reduction);
  w.put<std::int32_t>(config.stem_channels);
  w.put<std::int32_t>(config.mid_channels);
  w.put<double>(config.quant_step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.params().size() + params.buffers().size()));
  for (const auto& [name, m] : params.params()) write_tensor(w, 0, name, m);
  for (const auto& [name, m] : params.buffers()) write_tensor(w, 1, name, m);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

SvtNet SvtNet::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r(is);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  const auto variant = r.get<std::uint8_t>();
  const auto fusion = r.get<std::uint8_t>();
  const auto axis = r.get<std::uint8_t>();
  if (variant > 2 || fusion > 2 || axis > 1) throw std::runtime_error("corrupt checkpoint config");
  cfg.variant = static_cast<Variant>(variant);
  cfg.fusion = static_cast<Fusion>(fusion);
  cfg.token_axis = static_cast<SoftmaxAxis>(axis);
  cfg.descriptor_dim = r.get<std::int32_t>();
  cfg.tokens = r.get<std::int32_t>();
  cfg.reduction = r.get<std::int32_t>();
  cfg.stem_channels = r.get<std::int32_t>();
  cfg.mid_channels = r.get<std::int32_t>();
  cfg.quant_step = r.get<double>();
  cfg.validate();

  // Build the expected layout, then overwrite every tensor from the file.
  SvtNet net = SvtNet::build(cfg, 0);
  const auto count = r.get<std::uint32_t>();
  if (count != net.params.params().size() + net.params.buffers().size())
    throw std::runtime_error("checkpoint tensor count does not match its config");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = r.get<std::uint8_t>();
    const auto len = r.get<std::uint32_t>();
    if (len > 4096) throw std::runtime_error("corrupt tensor name");
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    Matrix& dst = kind == 0 ? net.params.param(name) : net.params.buffer(name);
    if (dst.rows() != static_cast<Eigen::Index>(rows) || dst.cols() != static_cast<Eigen::Index>(cols))
      throw std::runtime_error("shape mismatch for tensor " + name);
    r.bytes(dst.data(), static_cast<std::size_t>(dst.size()) * sizeof(double));
  }
  return net;
}

SvtNet SvtNet::load(const std::filesystem::path& path, Variant expected) {
  SvtNet net = load(path);
  if (net.config.variant != expected) throw std::runtime_error("variant mismatch");
  return net;
}

}  // namespace svtnet
