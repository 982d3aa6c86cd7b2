// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neumat/autodiff/ops.hpp"
#include "neumat/autodiff/parameter.hpp"
#include "neumat/model/encoding.hpp"
#include "neumat/model/pyramid.hpp"
#include "neumat/model/query.hpp"
#include "neumat/util/rng.hpp"

namespace neumat {

enum class DecoderKind : std::uint32_t { mlp = 0, inception = 1 };

inline const char* to_string(DecoderKind k) { return k == DecoderKind::mlp ? "mlp" : "inception"; }
inline DecoderKind parse_decoder_kind(const std::string& s) {
  if (s == "mlp") return DecoderKind::mlp;
  if (s == "inception") return DecoderKind::inception;
  throw std::invalid_argument("unknown decoder kind '" + s + "' (expected mlp or inception)");
}

/// Channel widths of one inception module. The four branch outputs are
/// concatenated: 64 + 128 + 32 + 32 = 256.
struct InceptionWidths {
  static constexpr std::size_t kChannels = 256;
  static constexpr std::size_t kModules = 6;
  static constexpr std::size_t kBranch1 = 64;         // 1x1
  static constexpr std::size_t kBranch2Reduce = 96;   // 1x1 before 3x3
  static constexpr std::size_t kBranch2 = 128;        // 3x3
  static constexpr std::size_t kBranch3Reduce = 16;   // 1x1 before 5x5
  static constexpr std::size_t kBranch3 = 32;         // 5x5
  static constexpr std::size_t kBranch4 = 32;         // 3x3 max-pool then 1x1
  static_assert(kBranch1 + kBranch2 + kBranch3 + kBranch4 == kChannels);
};

/// Architecture of a neural material. Everything here is stored in the
/// checkpoint and must match for weights to be loadable.
struct MaterialConfig {
  std::uint32_t resolution = 64;       // level-0 extent of the latent pyramid
  std::uint32_t channels = 8;          // latent channels per texel
  std::uint32_t offset_channels = 8;   // channels of the neural-offset texture
  std::uint32_t hidden = 64;           // decoder MLP width
  std::uint32_t offset_hidden = 32;    // offset MLP width
  std::uint32_t position_octaves = kPositionOctaves;
  std::uint32_t direction_octaves = kDirectionOctaves;
  bool encoding = true;
  DecoderKind decoder = DecoderKind::mlp;

  std::size_t num_levels() const { return static_cast<std::size_t>(std::countr_zero(resolution)) + 1; }
  std::size_t u_octaves() const { return encoding ? position_octaves : 0; }
  std::size_t w_octaves() const { return encoding ? direction_octaves : 0; }
  std::size_t offset_input_width() const { return offset_channels + encoded_width(2, w_octaves()); }
  std::size_t decoder_input_width() const {
    return channels + encoded_width(2, u_octaves()) + 2 * encoded_width(2, w_octaves());
  }

  void validate() const {
    if (resolution < 2 || !std::has_single_bit(resolution)) {
      throw std::invalid_argument("material resolution must be a power of two >= 2");
    }
    if (channels == 0 || offset_channels == 0 || hidden == 0 || offset_hidden == 0) {
      throw std::invalid_argument("material widths must be positive");
    }
    if (encoding && (position_octaves == 0 || direction_octaves == 0)) {
      throw std::invalid_argument("encoding enabled with zero octaves");
    }
  }

  std::string describe() const {
    return "R=" + std::to_string(resolution) + " C=" + std::to_string(channels) +
           " offsetC=" + std::to_string(offset_channels) + " hidden=" + std::to_string(hidden) +
           " offsetHidden=" + std::to_string(offset_hidden) + " Lu=" + std::to_string(u_octaves()) +
           " Lw=" + std::to_string(w_octaves()) + " decoder=" + neumat::to_string(decoder);
  }
  bool operator==(const MaterialConfig&) const = default;
};

/// How a flat batch of N queries maps onto image tiles [tiles x height x width].
/// Only the inception decoder looks at the spatial arrangement.
struct TileLayout {
  std::size_t tiles = 1, height = 1, width = 1;
  std::size_t size() const { return tiles * height * width; }
  static TileLayout row(std::size_t n) { return {1, 1, n}; }
};

/// Intermediate values of one forward pass, for tests and diagnostics.
template <typename T>
struct ForwardTrace {
  ad::Tensor<T> uv;            // query positions [N x 2]
  ad::Tensor<T> displacement;  // offset-module output [N x 2]
  ad::Tensor<T> warped_uv;     // u' [N x 2]
  ad::Tensor<T> features;      // pyramid sample [N x C]
  ad::Tensor<T> decoder_input;
  SampleStats pyramid_stats;
  // Inception decoder only: input and output shape of every module, and the
  // channel count of each of its four branches.
  std::vector<std::pair<ad::Shape, ad::Shape>> module_shapes;
  std::vector<std::array<std::size_t, 4>> branch_channels;
};

/// Neural reflectance model: a neural offset module warps u, a latent
/// texture pyramid is sampled at the warped position and level of detail,
/// and a decoder maps the latent vector plus encoded (u', wi, wo) to RGB.
class NeuralMaterial {
 public:
  struct Linear {
    std::size_t weight, bias;
  };
  struct Conv {
    std::size_t weight, bias;
  };
  struct InceptionModule {
    Conv branch1, branch2_reduce, branch2, branch3_reduce, branch3, branch4;
  };

  explicit NeuralMaterial(MaterialConfig config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    declare();
    initialize(seed);
  }

  /// Adopts existing weights (e.g. from a checkpoint); shapes are validated.
  NeuralMaterial(MaterialConfig config, const ad::ParameterSet& weights) : config_(config) {
    config_.validate();
    declare();
    if (weights.size() != params_.size()) {
      throw std::invalid_argument("parameter count " + std::to_string(weights.size()) + " does not match " +
                                  std::to_string(params_.size()) + " expected for " + config_.describe());
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (weights[i].name != params_[i].name || weights[i].shape != params_[i].shape) {
        throw std::invalid_argument("parameter '" + weights[i].name + "' " + ad::to_string(weights[i].shape) +
                                    " does not match expected '" + params_[i].name + "' " +
                                    ad::to_string(params_[i].shape));
      }
      params_[i].value = weights[i].value;
    }
  }

  const MaterialConfig& config() const { return config_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

  std::size_t pyramid_level(std::size_t l) const { return pyramid_ + l; }
  std::size_t offset_texture() const { return offset_texture_; }
  const std::vector<Linear>& offset_layers() const { return offset_mlp_; }
  const std::vector<Linear>& decoder_layers() const { return decoder_mlp_; }
  const std::vector<InceptionModule>& inception_modules() const { return inception_; }

  /// Differentiable forward pass. `leaves` comes from parameters().bind<T>().
  template <typename T>
  ad::Tensor<T> forward(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves, std::span<const Query7D> queries,
                        TileLayout layout, ForwardTrace<T>* trace = nullptr) const;

  /// Batched no-grad evaluation in fp32. Queries are processed in chunks;
  /// for the inception decoder each tile is one chunk.
  std::vector<Rgb> evaluate(std::span<const Query7D> queries, TileLayout layout) const;
  std::vector<Rgb> evaluate(std::span<const Query7D> queries) const {
    return evaluate(queries, TileLayout::row(queries.size()));
  }

 private:
  void declare();
  void initialize(std::uint64_t seed);

  Linear add_linear(const std::string& name, std::size_t in, std::size_t out) {
    return {params_.add(name + ".weight", {in, out}), params_.add(name + ".bias", {out})};
  }
  Conv add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    return {params_.add(name + ".weight", {out, in, k, k}), params_.add(name + ".bias", {out})};
  }

  template <typename T>
  ad::Tensor<T> mlp(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves, const std::vector<Linear>& layers,
                    ad::Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = ad::add_bias(tape, ad::matmul(tape, x, leaves[layers[i].weight]), leaves[layers[i].bias], 1);
      if (i + 1 < layers.size()) x = ad::relu(tape, x);
    }
    return x;
  }

  template <typename T>
  ad::Tensor<T> conv(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves, const Conv& c,
                     const ad::Tensor<T>& x, bool relu) const {
    const std::size_t pad = params_[c.weight].shape[2] / 2;
    auto y = ad::add_bias(tape, ad::conv2d(tape, x, leaves[c.weight], pad), leaves[c.bias], 1);
    return relu ? ad::relu(tape, y) : y;
  }

  template <typename T>
  ad::Tensor<T> inception_module(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves, const InceptionModule& m,
                                 const ad::Tensor<T>& x, ForwardTrace<T>* trace) const {
    auto b1 = conv(tape, leaves, m.branch1, x, true);
    auto b2 = conv(tape, leaves, m.branch2, conv(tape, leaves, m.branch2_reduce, x, true), true);
    auto b3 = conv(tape, leaves, m.branch3, conv(tape, leaves, m.branch3_reduce, x, true), true);
    auto b4 = conv(tape, leaves, m.branch4, ad::maxpool2d(tape, x, 3, 1), true);
    auto y = ad::concat(tape, {b1, b2, b3, b4}, 1);
    if (trace) {
      trace->module_shapes.emplace_back(x.shape(), y.shape());
      trace->branch_channels.push_back({b1.dim(1), b2.dim(1), b3.dim(1), b4.dim(1)});
    }
    return y;
  }

  template <typename T>
  ad::Tensor<T> inception_decoder(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves, const ad::Tensor<T>& x,
                                  TileLayout layout, ForwardTrace<T>* trace) const {
    const std::size_t cin = x.dim(1), hw = layout.height * layout.width;
    auto img = ad::transpose_last2(tape, ad::reshape(tape, x, {layout.tiles, hw, cin}));
    img = ad::reshape(tape, img, {layout.tiles, cin, layout.height, layout.width});
    img = conv(tape, leaves, inception_entry_, img, true);
    for (const auto& m : inception_) img = inception_module(tape, leaves, m, img, trace);
    img = conv(tape, leaves, inception_exit_, img, false);
    auto rows = ad::transpose_last2(tape, ad::reshape(tape, img, {layout.tiles, 3, hw}));
    return ad::reshape(tape, rows, {layout.size(), 3});
  }

  MaterialConfig config_;
  ad::ParameterSet params_;
  std::size_t pyramid_ = 0;
  std::size_t offset_texture_ = 0;
  std::vector<Linear> offset_mlp_;
  std::vector<Linear> decoder_mlp_;
  Conv inception_entry_{}, inception_exit_{};
  std::vector<InceptionModule> inception_;
};

inline void NeuralMaterial::declare() {
  const std::size_t levels = config_.num_levels();
  pyramid_ = params_.size();
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t r = config_.resolution >> l;
    params_.add("pyramid." + std::to_string(l), {r, r, config_.channels});
  }
  offset_texture_ = params_.add("offset.texture", {config_.resolution, config_.resolution, config_.offset_channels});
  offset_mlp_ = {add_linear("offset.fc0", config_.offset_input_width(), config_.offset_hidden),
                 add_linear("offset.fc1", config_.offset_hidden, config_.offset_hidden),
                 add_linear("offset.fc2", config_.offset_hidden, 2)};

  const std::size_t din = config_.decoder_input_width();
  if (config_.decoder == DecoderKind::mlp) {
    decoder_mlp_ = {add_linear("decoder.fc0", din, config_.hidden), add_linear("decoder.fc1", config_.hidden, config_.hidden),
                    add_linear("decoder.fc2", config_.hidden, config_.hidden), add_linear("decoder.fc3", config_.hidden, 3)};
  } else {
    using W = InceptionWidths;
    inception_entry_ = add_conv("inception.entry", din, W::kChannels, 1);
    for (std::size_t i = 0; i < W::kModules; ++i) {
      const std::string p = "inception.m" + std::to_string(i);
      inception_.push_back({add_conv(p + ".b1", W::kChannels, W::kBranch1, 1),
                            add_conv(p + ".b2_reduce", W::kChannels, W::kBranch2Reduce, 1),
                            add_conv(p + ".b2", W::kBranch2Reduce, W::kBranch2, 3),
                            add_conv(p + ".b3_reduce", W::kChannels, W::kBranch3Reduce, 1),
                            add_conv(p + ".b3", W::kBranch3Reduce, W::kBranch3, 5),
                            add_conv(p + ".b4", W::kChannels, W::kBranch4, 1)});
    }
    inception_exit_ = add_conv("inception.exit", W::kChannels, 3, 1);
  }
}

inline void NeuralMaterial::initialize(std::uint64_t seed) {
  TrainRng rng(seed);
  auto fill_uniform = [&rng](std::vector<float>& v, double bound) {
    for (auto& x : v) x = static_cast<float>(uniform(rng, -bound, bound));
  };
  // Latent textures start small and centred.
  for (std::size_t l = 0; l < config_.num_levels(); ++l) fill_uniform(params_[pyramid_ + l].value, 0.1);
  fill_uniform(params_[offset_texture_].value, 0.1);

  // Fan-in scaled uniform: sqrt(6 / fan_in) ahead of a relu, sqrt(1 / fan_in)
  // for linear outputs. Biases start at zero.
  auto init_weight = [&](std::size_t idx, bool feeds_relu) {
    const auto& s = params_[idx].shape;
    const std::size_t fan_in = s.size() == 2 ? s[0] : s[1] * s[2] * s[3];
    fill_uniform(params_[idx].value, std::sqrt((feeds_relu ? 6.0 : 1.0) / static_cast<double>(fan_in)));
  };
  for (std::size_t i = 0; i < offset_mlp_.size(); ++i) init_weight(offset_mlp_[i].weight, i + 1 < offset_mlp_.size());
  // Identity warp at initialisation.
  std::fill(params_[offset_mlp_.back().weight].value.begin(), params_[offset_mlp_.back().weight].value.end(), 0.0f);

  for (std::size_t i = 0; i < decoder_mlp_.size(); ++i) init_weight(decoder_mlp_[i].weight, i + 1 < decoder_mlp_.size());
  if (config_.decoder == DecoderKind::inception) {
    init_weight(inception_entry_.weight, true);
    for (const auto& m : inception_) {
      for (const Conv* c : {&m.branch1, &m.branch2_reduce, &m.branch2, &m.branch3_reduce, &m.branch3, &m.branch4}) {
        init_weight(c->weight, true);
      }
    }
    init_weight(inception_exit_.weight, false);
  }
}

namespace detail {

template <typename T>
ad::Tensor<T> query_column(std::span<const Query7D> queries, int which) {
  const std::size_t n = queries.size();
  std::vector<T> v(which == 3 ? n : 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = queries[i];
    switch (which) {
      case 0: v[2 * i] = q.uv.x; v[2 * i + 1] = q.uv.y; break;
      case 1: v[2 * i] = q.wi.x; v[2 * i + 1] = q.wi.y; break;
      case 2: v[2 * i] = q.wo.x; v[2 * i + 1] = q.wo.y; break;
      default: v[i] = q.lod; break;
    }
  }
  return which == 3 ? ad::Tensor<T>::constant({n}, std::move(v)) : ad::Tensor<T>::constant({n, 2}, std::move(v));
}

/// Runs one pipeline stage, naming it in any numeric failure.
template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ad::NumericError& e) {
    throw ad::NumericError(std::string("material stage '") + name + "': " + e.what());
  }
}

}  // namespace detail

template <typename T>
ad::Tensor<T> NeuralMaterial::forward(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves,
                                      std::span<const Query7D> queries, TileLayout layout,
                                      ForwardTrace<T>* trace) const {
  if (leaves.size() != params_.size()) throw std::invalid_argument("forward: leaves do not match parameters");
  const std::size_t n = queries.size();
  if (n == 0) throw ad::ShapeError("forward: empty query batch");
  if (config_.decoder == DecoderKind::inception && layout.size() != n) {
    throw ad::ShapeError("forward: tile layout " + std::to_string(layout.tiles) + "x" + std::to_string(layout.height) +
                         "x" + std::to_string(layout.width) + " does not cover " + std::to_string(n) + " queries");
  }
  const auto uv = detail::query_column<T>(queries, 0);
  const auto wi = detail::query_column<T>(queries, 1);
  const auto wo = detail::query_column<T>(queries, 2);
  const auto lod = detail::query_column<T>(queries, 3);
  const std::size_t lw = config_.w_octaves(), lu = config_.u_octaves();

  const auto enc_wo = lw ? ad::fourier_encode(tape, wo, lw) : wo;
  const auto enc_wi = lw ? ad::fourier_encode(tape, wi, lw) : wi;

  const auto displacement = detail::stage("neural_offset", [&] {
    const std::vector<ad::Tensor<T>> tex = {leaves[offset_texture_]};
    const auto zero_lod = ad::Tensor<T>::zeros({n});
    auto feat = sample_pyramid(tape, std::span<const ad::Tensor<T>>(tex), uv, zero_lod);
    return mlp(tape, leaves, offset_mlp_, ad::concat(tape, {feat, enc_wo}, 1));
  });
  const auto warped = ad::fract(tape, ad::add(tape, uv, displacement));

  SampleStats stats;
  const auto features = detail::stage("sample_pyramid", [&] {
    std::span<const ad::Tensor<T>> levels(leaves.data() + pyramid_, config_.num_levels());
    return sample_pyramid(tape, levels, warped, lod, &stats);
  });

  const auto enc_u = lu ? ad::fourier_encode(tape, warped, lu) : warped;
  const auto input = ad::concat(tape, {features, enc_u, enc_wi, enc_wo}, 1);
  auto rgb = detail::stage("decoder", [&] {
    return config_.decoder == DecoderKind::mlp ? mlp(tape, leaves, decoder_mlp_, input)
                                               : inception_decoder(tape, leaves, input, layout, trace);
  });
  if (trace) {
    trace->uv = uv;
    trace->displacement = displacement;
    trace->warped_uv = warped;
    trace->features = features;
    trace->decoder_input = input;
    trace->pyramid_stats = stats;
  }
  return rgb;
}

inline std::vector<Rgb> NeuralMaterial::evaluate(std::span<const Query7D> queries, TileLayout layout) const {
  std::vector<Rgb> out(queries.size());
  const auto leaves = params_.bind<float>(false);
  auto run = [&](std::size_t begin, std::size_t count, TileLayout sub) {
    ad::Tape<float> tape;
    const auto rgb = forward(tape, leaves, queries.subspan(begin, count), sub);
    for (std::size_t i = 0; i < count; ++i) out[begin + i] = {rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]};
  };
  if (config_.decoder == DecoderKind::mlp) {
    constexpr std::size_t kChunk = 4096;
    for (std::size_t b = 0; b < queries.size(); b += kChunk) {
      const std::size_t c = std::min(kChunk, queries.size() - b);
      run(b, c, TileLayout::row(c));
    }
  } else {
    if (layout.size() != queries.size()) throw ad::ShapeError("evaluate: tile layout does not cover the queries");
    const std::size_t per_tile = layout.height * layout.width;
    for (std::size_t t = 0; t < layout.tiles; ++t) run(t * per_tile, per_tile, {1, layout.height, layout.width});
  }
  return out;
}

}  // namespace neumat
