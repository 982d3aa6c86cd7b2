// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neumat/autodiff/adam.hpp"
#include "neumat/loss/loss.hpp"
#include "neumat/model/material.hpp"
#include "neumat/util/hash.hpp"

namespace neumat {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::uint64_t iterations = 0;  // 0 selects the decoder's default budget
  std::uint32_t tiles = 4;
  std::uint32_t tile_height = 32;
  std::uint32_t tile_width = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  bool encoding = true;
  bool gradient_loss = true;
  bool remap = true;
  double gradient_weight = 1.0;
  DecoderKind decoder = DecoderKind::mlp;
  std::uint32_t channels = 8;
  std::uint32_t hidden = 64;
  std::uint32_t offset_channels = 8;
  std::uint32_t offset_hidden = 32;
  std::uint64_t checkpoint_period = 1000;
  std::uint64_t log_period = 100;
  std::uint64_t validation_samples = 8192;
  unsigned threads = 1;
  std::string dataset;
  std::string output_dir;

  static constexpr std::uint64_t kDefaultIterations = 30000;
  static constexpr std::uint64_t kDefaultInceptionIterations = 80000;

  /// All switches off with the MLP decoder: the baseline configuration.
  static TrainConfig baseline() {
    TrainConfig c;
    c.encoding = c.gradient_loss = c.remap = false;
    return c;
  }

  std::uint64_t total_iterations() const {
    if (iterations) return iterations;
    return decoder == DecoderKind::inception ? kDefaultInceptionIterations : kDefaultIterations;
  }

  MaterialConfig material(std::uint32_t resolution) const {
    MaterialConfig m;
    m.resolution = resolution;
    m.channels = channels;
    m.hidden = hidden;
    m.offset_channels = offset_channels;
    m.offset_hidden = offset_hidden;
    m.encoding = encoding;
    m.decoder = decoder;
    return m;
  }
  LossConfig loss() const { return {gradient_loss, remap, gradient_weight}; }
  ad::AdamConfig adam() const { return {lr, beta1, beta2, eps}; }

  void validate() const {
    if (tiles == 0) throw ConfigError("tiles must be positive");
    if (tile_height == 0 || tile_width == 0) throw ConfigError("tile extents must be positive");
    if (gradient_loss && (tile_height < 3 || tile_width < 3)) {
      throw ConfigError("gradient loss needs tiles of at least 3x3, got " + std::to_string(tile_height) + "x" +
                        std::to_string(tile_width));
    }
    if (!(lr > 0) || !(eps > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      throw ConfigError("invalid optimizer constants");
    }
    if (checkpoint_period == 0 || log_period == 0) throw ConfigError("periods must be positive");
    if (threads == 0) throw ConfigError("threads must be positive");
  }

  /// Hash of everything that shapes the optimization trajectory. Budget,
  /// periods, thread count and paths are excluded so a run can be resumed
  /// with a longer budget or elsewhere.
  std::uint64_t hash(std::uint64_t dataset_hash) const {
    std::uint64_t h = hash_combine(fnv1a("neumat-train"), dataset_hash);
    for (std::uint64_t v :
         {std::uint64_t{tiles}, std::uint64_t{tile_height}, std::uint64_t{tile_width}, std::bit_cast<std::uint64_t>(lr),
          std::bit_cast<std::uint64_t>(beta1), std::bit_cast<std::uint64_t>(beta2), std::bit_cast<std::uint64_t>(eps),
          seed, std::uint64_t{encoding}, std::uint64_t{gradient_loss}, std::uint64_t{remap},
          std::bit_cast<std::uint64_t>(gradient_weight), static_cast<std::uint64_t>(decoder), std::uint64_t{channels},
          std::uint64_t{hidden}, std::uint64_t{offset_channels}, std::uint64_t{offset_hidden}}) {
      h = hash_combine(h, v);
    }
    return h;
  }

  /// Key/value view in a stable order; used for config files and manifests.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Sets one key from text. Unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
};

namespace detail {

template <typename U>
U parse_unsigned(const std::string& key, const std::string& text) {
  U v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + text + "'");
}

/// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  using detail::format_real;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"iterations", std::to_string(total_iterations())},
          {"tiles", std::to_string(tiles)},
          {"tile_height", std::to_string(tile_height)},
          {"tile_width", std::to_string(tile_width)},
          {"lr", format_real(lr)},
          {"beta1", format_real(beta1)},
          {"beta2", format_real(beta2)},
          {"eps", format_real(eps)},
          {"seed", std::to_string(seed)},
          {"encoding", b(encoding)},
          {"gradient_loss", b(gradient_loss)},
          {"remap", b(remap)},
          {"gradient_weight", format_real(gradient_weight)},
          {"decoder", to_string(decoder)},
          {"channels", std::to_string(channels)},
          {"hidden", std::to_string(hidden)},
          {"offset_channels", std::to_string(offset_channels)},
          {"offset_hidden", std::to_string(offset_hidden)},
          {"checkpoint_period", std::to_string(checkpoint_period)},
          {"log_period", std::to_string(log_period)},
          {"validation_samples", std::to_string(validation_samples)},
          {"threads", std::to_string(threads)},
          {"dataset", dataset},
          {"output_dir", output_dir}};
}

inline void TrainConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  static const std::map<std::string, std::function<void(TrainConfig&, const std::string&, const std::string&)>>
      setters = {
          {"iterations", [](auto& c, auto& k, auto& v) { c.iterations = parse_unsigned<std::uint64_t>(k, v); }},
          {"tiles", [](auto& c, auto& k, auto& v) { c.tiles = parse_unsigned<std::uint32_t>(k, v); }},
          {"tile_height", [](auto& c, auto& k, auto& v) { c.tile_height = parse_unsigned<std::uint32_t>(k, v); }},
          {"tile_width", [](auto& c, auto& k, auto& v) { c.tile_width = parse_unsigned<std::uint32_t>(k, v); }},
          {"lr", [](auto& c, auto& k, auto& v) { c.lr = parse_real(k, v); }},
          {"beta1", [](auto& c, auto& k, auto& v) { c.beta1 = parse_real(k, v); }},
          {"beta2", [](auto& c, auto& k, auto& v) { c.beta2 = parse_real(k, v); }},
          {"eps", [](auto& c, auto& k, auto& v) { c.eps = parse_real(k, v); }},
          {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_unsigned<std::uint64_t>(k, v); }},
          {"encoding", [](auto& c, auto& k, auto& v) { c.encoding = parse_bool(k, v); }},
          {"gradient_loss", [](auto& c, auto& k, auto& v) { c.gradient_loss = parse_bool(k, v); }},
          {"remap", [](auto& c, auto& k, auto& v) { c.remap = parse_bool(k, v); }},
          {"gradient_weight", [](auto& c, auto& k, auto& v) { c.gradient_weight = parse_real(k, v); }},
          {"decoder",
           [](auto& c, auto&, auto& v) {
             try {
               c.decoder = parse_decoder_kind(v);
             } catch (const std::invalid_argument& e) {
               throw ConfigError(e.what());
             }
           }},
          {"channels", [](auto& c, auto& k, auto& v) { c.channels = parse_unsigned<std::uint32_t>(k, v); }},
          {"hidden", [](auto& c, auto& k, auto& v) { c.hidden = parse_unsigned<std::uint32_t>(k, v); }},
          {"offset_channels",
           [](auto& c, auto& k, auto& v) { c.offset_channels = parse_unsigned<std::uint32_t>(k, v); }},
          {"offset_hidden", [](auto& c, auto& k, auto& v) { c.offset_hidden = parse_unsigned<std::uint32_t>(k, v); }},
          {"checkpoint_period",
           [](auto& c, auto& k, auto& v) { c.checkpoint_period = parse_unsigned<std::uint64_t>(k, v); }},
          {"log_period", [](auto& c, auto& k, auto& v) { c.log_period = parse_unsigned<std::uint64_t>(k, v); }},
          {"validation_samples",
           [](auto& c, auto& k, auto& v) { c.validation_samples = parse_unsigned<std::uint64_t>(k, v); }},
          {"threads", [](auto& c, auto& k, auto& v) { c.threads = parse_unsigned<unsigned>(k, v); }},
          {"dataset", [](auto& c, auto&, auto& v) { c.dataset = v; }},
          {"output_dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

/// Applies `key = value` lines on top of `base`. '#' starts a comment.
inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {},
                                     const std::string& what = "config") {
  std::istringstream is(text);
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(what + ":" + std::to_string(n) + ": expected key = value");
    try {
      base.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(what + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base), path);
}

inline std::string format_config(const TrainConfig& c) {
  std::string out;
  for (const auto& [k, v] : c.entries()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace neumat
