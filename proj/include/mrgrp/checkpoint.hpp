#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrgrp/errors.hpp"
#include "mrgrp/nn.hpp"

namespace mrgrp {

// Layout:
//   MRGRP-CKPT-v1\n
//   meta <bytes>\n<json>\n
//   tensors <count>\n
//   <name> <rank> <d0> ... <offset>\n        (offset counted in float64s)
//   payload <count>\n
//   <count little-endian float64 values>
inline constexpr const char* kCheckpointMagic = "MRGRP-CKPT-v1";

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void write_le_doubles(std::ostream& os, std::span<const double> values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<double> read_le_doubles(std::istream& is, std::size_t count) {
  std::vector<char> buf(count * 8);
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw CheckpointError("checkpoint payload truncated");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParameterStore& params, const nlohmann::json& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint " + path);
  const std::string meta_text = meta.dump();
  os << kCheckpointMagic << '\n';
  os << "meta " << meta_text.size() << '\n' << meta_text << '\n';
  os << "tensors " << params.size() << '\n';
  std::size_t offset = 0;
  for (const auto& [name, t] : params.entries()) {
    if (name.find_first_of(" \n\t") != std::string::npos) {
      throw CheckpointError("tensor name contains whitespace: " + name);
    }
    os << name << ' ' << t.rank();
    for (auto d : t.shape()) os << ' ' << d;
    os << ' ' << offset << '\n';
    offset += t.size();
  }
  os << "payload " << offset << '\n';
  for (const auto& [_, t] : params.entries()) detail::write_le_doubles(os, t.values());
  if (!os) throw CheckpointError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) {
    throw CheckpointError(path + ": not an MRGRP-CKPT-v1 checkpoint");
  }
  auto expect_keyword = [&](const char* kw) -> std::size_t {
    std::string word;
    std::size_t n = 0;
    if (!std::getline(is, line)) throw CheckpointError(path + ": truncated header");
    std::istringstream ls(line);
    if (!(ls >> word >> n) || word != kw) throw CheckpointError(path + ": expected '" + kw + "'");
    return n;
  };

  Checkpoint ck;
  const std::size_t meta_len = expect_keyword("meta");
  std::string meta_text(meta_len, '\0');
  is.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
  is.get();
  try {
    ck.meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad meta block: " + e.what());
  }

  const std::size_t count = expect_keyword("tensors");
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> manifest;
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(is, line)) throw CheckpointError(path + ": truncated manifest");
    std::istringstream ls(line);
    Entry e;
    std::size_t rank = 0;
    if (!(ls >> e.name >> rank)) throw CheckpointError(path + ": bad manifest line: " + line);
    e.shape.resize(rank);
    for (auto& d : e.shape)
      if (!(ls >> d)) throw CheckpointError(path + ": bad manifest line: " + line);
    if (!(ls >> e.offset)) throw CheckpointError(path + ": bad manifest line: " + line);
    manifest.push_back(std::move(e));
  }
  const std::size_t total = expect_keyword("payload");
  const auto payload = detail::read_le_doubles(is, total);
  for (const auto& e : manifest) {
    const auto n = shape_size(e.shape);
    if (e.offset + n > payload.size()) throw CheckpointError(path + ": manifest offset out of range for " + e.name);
    std::vector<double> v(payload.begin() + static_cast<std::ptrdiff_t>(e.offset),
                          payload.begin() + static_cast<std::ptrdiff_t>(e.offset + n));
    ck.tensors.emplace_back(e.name, Tensor::from(e.shape, std::move(v)));
  }
  return ck;
}

/// Copies checkpoint tensors into an already-constructed store; every
/// parameter must be present with a matching shape.
inline void restore_parameters(const Checkpoint& ck, ParameterStore& params) {
  for (const auto& [name, t] : params.entries()) {
    const Tensor* src = ck.find(name);
    if (!src) throw CheckpointError("checkpoint lacks tensor " + name);
    if (src->shape() != t.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_string(src->shape()) +
                            ", model expects " + shape_string(t.shape()));
    }
    Tensor dst = t;
    std::copy(src->values().begin(), src->values().end(), dst.mutable_values().begin());
  }
}

}  // namespace mrgrp
