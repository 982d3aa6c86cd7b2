// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <sstream>
#include <string>

#include "neumat/autodiff/adam.hpp"
#include "neumat/model/material.hpp"
#include "neumat/util/binary_io.hpp"

// Checkpoint file layout (little-endian):
//   "NMAT1"
//   u32 x 9   architecture: resolution, channels, offset_channels, hidden,
//             offset_hidden, position_octaves, direction_octaves, encoding,
//             decoder kind
//   u64       iteration, config hash, optimizer step
//   str       trainer RNG state (u32 length + bytes)
//   u32       parameter count, then per parameter: str name, u32 rank, u32 extents
//   u32       1 if optimizer moments follow the weights
//   f32 blobs weights in manifest order, then (optional) first moments, then
//             second moments, each in manifest order
namespace neumat {

inline constexpr char kCheckpointMagic[5] = {'N', 'M', 'A', 'T', '1'};

/// Model weights plus everything needed to continue training bit-exactly.
struct Checkpoint {
  MaterialConfig arch;
  std::uint64_t iteration = 0;
  std::uint64_t config_hash = 0;
  std::string rng_state;
  ad::ParameterSet params;
  std::optional<ad::AdamState> optimizer;

  static Checkpoint from_material(const NeuralMaterial& m) {
    Checkpoint c;
    c.arch = m.config();
    c.params = m.parameters();
    return c;
  }
  NeuralMaterial material() const { return NeuralMaterial(arch, params); }
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream os(std::ios::binary);
  io::write_bytes(os, kCheckpointMagic, sizeof kCheckpointMagic);
  const auto& a = c.arch;
  for (std::uint32_t v : {a.resolution, a.channels, a.offset_channels, a.hidden, a.offset_hidden, a.position_octaves,
                          a.direction_octaves, static_cast<std::uint32_t>(a.encoding),
                          static_cast<std::uint32_t>(a.decoder)}) {
    io::write_u32(os, v);
  }
  io::write_u64(os, c.iteration);
  io::write_u64(os, c.config_hash);
  io::write_u64(os, c.optimizer ? c.optimizer->step : 0);
  io::write_string(os, c.rng_state);
  io::write_u32(os, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    io::write_string(os, p.name);
    io::write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) io::write_u32(os, static_cast<std::uint32_t>(d));
  }
  io::write_u32(os, c.optimizer ? 1 : 0);
  for (const auto& p : c.params) io::write_f32s(os, p.value);
  if (c.optimizer) {
    for (const auto& m : c.optimizer->m) io::write_f32s(os, m);
    for (const auto& v : c.optimizer->v) io::write_f32s(os, v);
  }
  return os.str();
}

/// Parses and validates a checkpoint image. Every parameter shape is checked
/// against the architecture recorded in the header.
inline Checkpoint parse_checkpoint(std::span<const std::byte> bytes, const std::string& what = "checkpoint") {
  io::Reader r(bytes, what);
  char magic[5];
  r.read(magic, 5, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError(what + ": not a neural material checkpoint");
  if (magic[4] != kCheckpointMagic[4]) {
    throw FormatError(what + ": unsupported checkpoint version '" + std::string(1, magic[4]) + "'");
  }
  Checkpoint c;
  auto& a = c.arch;
  a.resolution = r.u32("resolution");
  a.channels = r.u32("channels");
  a.offset_channels = r.u32("offset channels");
  a.hidden = r.u32("hidden width");
  a.offset_hidden = r.u32("offset hidden width");
  a.position_octaves = r.u32("position octaves");
  a.direction_octaves = r.u32("direction octaves");
  a.encoding = r.u32("encoding flag") != 0;
  const auto kind = r.u32("decoder kind");
  if (kind > 1) throw FormatError(what + ": unknown decoder kind " + std::to_string(kind));
  a.decoder = static_cast<DecoderKind>(kind);
  try {
    a.validate();
  } catch (const std::exception& e) {
    throw FormatError(what + ": invalid architecture: " + e.what());
  }
  c.iteration = r.u64("iteration");
  c.config_hash = r.u64("config hash");
  const auto step = r.u64("optimizer step");
  c.rng_state = r.string("rng state");

  const NeuralMaterial reference(a, 0);
  const auto& expected = reference.parameters();
  const auto count = r.u32("parameter count");
  if (count != expected.size()) {
    throw FormatError(what + ": " + std::to_string(count) + " parameters, architecture " + a.describe() + " needs " +
                      std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto name = r.string("parameter name", 256);
    const auto rank = r.u32("parameter rank");
    if (rank > 8) throw FormatError(what + ": implausible rank for '" + name + "'");
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u32("parameter extent");
    if (name != expected[i].name || shape != expected[i].shape) {
      throw FormatError(what + ": parameter " + std::to_string(i) + " is '" + name + "' " + ad::to_string(shape) +
                        ", expected '" + expected[i].name + "' " + ad::to_string(expected[i].shape));
    }
    c.params.add(name, shape);
  }
  const bool has_moments = r.u32("moments flag") != 0;
  for (auto& p : c.params) {
    r.f32s(p.value, ("weights of '" + p.name + "'").c_str());
    if (!ad::all_finite<float>(p.value)) throw FormatError(what + ": non-finite weights in '" + p.name + "'");
  }
  if (has_moments) {
    ad::AdamState s;
    s.step = step;
    for (auto& p : c.params) {
      s.m.emplace_back(p.size());
      r.f32s(s.m.back(), ("first moments of '" + p.name + "'").c_str());
      if (!ad::all_finite<float>(s.m.back())) throw FormatError(what + ": corrupted first moments for '" + p.name + "'");
    }
    for (auto& p : c.params) {
      s.v.emplace_back(p.size());
      r.f32s(s.v.back(), ("second moments of '" + p.name + "'").c_str());
      for (float v : s.v.back()) {
        if (!std::isfinite(v) || v < 0.0f) throw FormatError(what + ": corrupted second moments for '" + p.name + "'");
      }
    }
    c.optimizer = std::move(s);
  }
  if (r.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes after expected " +
                      std::to_string(r.position()));
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  io::write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  return parse_checkpoint(bytes, path);
}

}  // namespace neumat
