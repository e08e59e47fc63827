#pragma once

// Checkpoint file:
//   8 bytes   magic "MFAESCK1"
//   8 bytes   header length n (uint64, little-endian)
//   n bytes   JSON header; "tensors" lists {name, shape, offset, count}
//   payload   little-endian float32 values, tensors back to back
// `offset` and `count` are in floats from the start of the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfaes/nn/tensor.hpp"

namespace mfaes::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'A', 'E', 'S', 'C', 'K', '1'};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;  // float32-representable
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedArray> arrays;

  const NamedArray& find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw std::runtime_error("checkpoint has no tensor named " + name);
  }
  bool contains(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }
};

namespace detail {

inline void put_le_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_le_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

/// Written to a temporary file and renamed, so an existing checkpoint at
/// `path` is replaced only by a complete one.
inline void save_checkpoint(const std::string& path, nlohmann::json header, const std::vector<NamedArray>& arrays) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (numel(a.shape) != a.values.size()) throw std::invalid_argument("checkpoint: shape/value mismatch for " + a.name);
    index.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size();
  }
  header["tensors"] = index;
  const std::string head = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t n = head.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += head;
  out.reserve(out.size() + 4 * offset);
  for (const auto& a : arrays)
    for (double v : a.values) detail::put_le_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("checkpoint write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t(buf[8 + i]) << (8 * i);
  if (16 + n > buf.size()) throw std::runtime_error("truncated checkpoint header: " + path);

  Checkpoint ck;
  ck.header = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(n));
  const unsigned char* payload = buf.data() + 16 + n;
  const std::size_t payload_floats = (buf.size() - 16 - n) / 4;
  for (const auto& t : ck.header.at("tensors")) {
    NamedArray a;
    a.name = t.at("name").get<std::string>();
    a.shape = t.at("shape").get<Shape>();
    const auto off = t.at("offset").get<std::size_t>();
    const auto cnt = t.at("count").get<std::size_t>();
    if (off + cnt > payload_floats || cnt != numel(a.shape)) throw std::runtime_error("corrupt checkpoint entry " + a.name);
    a.values.resize(cnt);
    for (std::size_t i = 0; i < cnt; ++i)
      a.values[i] = static_cast<double>(std::bit_cast<float>(detail::get_le_u32(payload + 4 * (off + i))));
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

}  // namespace mfaes::nn
