#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtp/nn.hpp"

namespace gtp {

/// Checkpoint layout ("gtp-ckpt-1"):
///   [uint32 LE manifest length][manifest JSON][payload]
/// The manifest lists each parameter's name, shape, and offset/count (in
/// doubles) into the payload; payload values are little-endian IEEE-754
/// 64-bit floats. Round trips are bit-exact.
namespace ckpt {

inline constexpr const char* kFormat = "gtp-ckpt-1";

inline void put_u32le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64le(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64le(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, const ParamSet& params) {
  nlohmann::json manifest;
  manifest["format"] = ckpt::kFormat;
  manifest["params"] = nlohmann::json::array();
  std::string payload;
  size_t offset = 0;
  for (const Parameter* p : params.all()) {
    manifest["params"].push_back({{"name", p->name},
                                  {"shape", p->value.shape()},
                                  {"offset", offset},
                                  {"count", p->value.size()}});
    for (double d : p->value.vec()) ckpt::put_f64le(payload, d);
    offset += p->value.size();
  }
  const std::string mtext = manifest.dump();
  std::string head;
  ckpt::put_u32le(head, static_cast<uint32_t>(mtext.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw DataError("short write on checkpoint: " + path);
}

/// Loads values into an existing parameter set; every checkpoint entry must
/// match a registered parameter's name and shape and vice versa.
inline void load_checkpoint(const std::string& path, ParamSet& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};
  if (bytes.size() < 4) throw DataError("checkpoint truncated: " + path);
  uint32_t mlen = 0;
  for (int i = 0; i < 4; ++i) mlen |= static_cast<uint32_t>(bytes[i]) << (8 * i);
  if (bytes.size() < 4 + static_cast<size_t>(mlen)) {
    throw DataError("checkpoint manifest truncated: " + path);
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != ckpt::kFormat) {
    throw DataError("unsupported checkpoint format in " + path);
  }
  const unsigned char* payload = bytes.data() + 4 + mlen;
  const size_t payload_count = (bytes.size() - 4 - mlen) / 8;
  size_t loaded = 0;
  for (const auto& e : manifest.at("params")) {
    const std::string name = e.at("name");
    Parameter* p = params.find(name);
    if (!p) throw DataError("checkpoint has unknown parameter: " + name);
    const std::vector<int> shape = e.at("shape");
    if (shape != p->value.shape()) {
      throw DataError("shape mismatch for parameter " + name);
    }
    const size_t off = e.at("offset");
    const size_t count = e.at("count");
    if (count != p->value.size() || off + count > payload_count) {
      throw DataError("bad payload range for parameter " + name);
    }
    for (size_t i = 0; i < count; ++i) {
      p->value[i] = ckpt::get_f64le(payload + 8 * (off + i));
    }
    ++loaded;
  }
  if (loaded != params.count()) {
    throw DataError("checkpoint is missing parameters (" + std::to_string(loaded) + "/" +
                    std::to_string(params.count()) + ")");
  }
}

}  // namespace gtp
