// Copyright 2026 The Blockstream Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bst/config.hpp"
#include "bst/core.hpp"

namespace bst {

// y = x W^T + b, W stored (out x in).
struct Linear {
  Matrix weight;
  std::vector<double> bias;
};

struct LayerNorm {
  std::vector<double> gain;
  std::vector<double> bias;
};

struct Attention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
};

struct FeedForward {
  Linear up;    // d_model -> ff_dim, ReLU
  Linear down;  // ff_dim -> d_model
};

struct EncoderLayer {
  LayerNorm norm_attn;
  Attention self_attn;
  LayerNorm norm_ff;
  FeedForward ff;
  // Layer 0: projects the mean-pooled block input into the initial context
  // embedding. Layer l > 0: projects the context handed over from layer l-1.
  Linear context_proj;
};

struct DecoderLayer {
  LayerNorm norm_self;
  Attention self_attn;
  LayerNorm norm_src;
  Attention src_attn;
  LayerNorm norm_ff;
  FeedForward ff;
};

struct ModelParams {
  ModelConfig config;
  std::vector<Linear> subsample_convs;  // kernel 2, stride 2; weight (d_model x 2*in)
  Linear subsample_out;
  std::vector<EncoderLayer> encoder;
  LayerNorm encoder_norm;
  Matrix embedding;  // vocab x d_model
  std::vector<DecoderLayer> decoder;
  LayerNorm decoder_norm;
  Linear decoder_out;
  Linear ctc_main;
  Linear ctc_aux;  // applied to the intermediate-layer tap

  bool operator==(const ModelParams&) const;
};

enum class TensorKind { kProjection, kNormGain, kNormBias };

struct TensorShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  TensorKind kind = TensorKind::kProjection;
};

// The canonical parameter order, derived from the config alone. This is the
// order of tensors in the weight file and the order of PRNG draws.
//
//   subsample.conv{k}.{weight,bias}        k = 0 .. num_subsample_convs-1
//   subsample.out.{weight,bias}
//   encoder.{l}.norm_attn.{gain,bias}
//   encoder.{l}.self_attn.{query,key,value,output}.{weight,bias}
//   encoder.{l}.norm_ff.{gain,bias}
//   encoder.{l}.ff.{up,down}.{weight,bias}
//   encoder.{l}.context_proj.{weight,bias}
//   encoder_norm.{gain,bias}
//   decoder.embedding
//   decoder.{l}.norm_self, self_attn, norm_src, src_attn, norm_ff, ff
//   decoder_norm.{gain,bias}
//   decoder.out.{weight,bias}
//   ctc_main.{weight,bias}
//   ctc_aux.{weight,bias}
std::vector<TensorShape> parameter_layout(const ModelConfig& config);

namespace detail {

template <class Fn>
void visit_linear(const std::string& name, auto& lin, Fn& fn) {
  fn(name + ".weight", std::span(lin.weight.data()), lin.weight.rows(), lin.weight.cols(),
     TensorKind::kProjection);
  fn(name + ".bias", std::span(lin.bias), 1, lin.bias.size(), TensorKind::kProjection);
}

template <class Fn>
void visit_norm(const std::string& name, auto& norm, Fn& fn) {
  fn(name + ".gain", std::span(norm.gain), 1, norm.gain.size(), TensorKind::kNormGain);
  fn(name + ".bias", std::span(norm.bias), 1, norm.bias.size(), TensorKind::kNormBias);
}

template <class Fn>
void visit_attention(const std::string& name, auto& att, Fn& fn) {
  visit_linear(name + ".query", att.query, fn);
  visit_linear(name + ".key", att.key, fn);
  visit_linear(name + ".value", att.value, fn);
  visit_linear(name + ".output", att.output, fn);
}

}  // namespace detail

// Calls fn(name, span<T>, rows, cols, kind) for each tensor in canonical order.
// Works for both mutable and const params.
template <class Params, class Fn>
void visit_tensors(Params& p, Fn&& fn) {
  using detail::visit_attention;
  using detail::visit_linear;
  using detail::visit_norm;
  for (std::size_t k = 0; k < p.subsample_convs.size(); ++k) {
    visit_linear("subsample.conv" + std::to_string(k), p.subsample_convs[k], fn);
  }
  visit_linear("subsample.out", p.subsample_out, fn);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const std::string n = "encoder." + std::to_string(l);
    auto& layer = p.encoder[l];
    visit_norm(n + ".norm_attn", layer.norm_attn, fn);
    visit_attention(n + ".self_attn", layer.self_attn, fn);
    visit_norm(n + ".norm_ff", layer.norm_ff, fn);
    visit_linear(n + ".ff.up", layer.ff.up, fn);
    visit_linear(n + ".ff.down", layer.ff.down, fn);
    visit_linear(n + ".context_proj", layer.context_proj, fn);
  }
  visit_norm("encoder_norm", p.encoder_norm, fn);
  fn(std::string("decoder.embedding"), std::span(p.embedding.data()), p.embedding.rows(),
     p.embedding.cols(), TensorKind::kProjection);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const std::string n = "decoder." + std::to_string(l);
    auto& layer = p.decoder[l];
    visit_norm(n + ".norm_self", layer.norm_self, fn);
    visit_attention(n + ".self_attn", layer.self_attn, fn);
    visit_norm(n + ".norm_src", layer.norm_src, fn);
    visit_attention(n + ".src_attn", layer.src_attn, fn);
    visit_norm(n + ".norm_ff", layer.norm_ff, fn);
    visit_linear(n + ".ff.up", layer.ff.up, fn);
    visit_linear(n + ".ff.down", layer.ff.down, fn);
  }
  visit_norm("decoder_norm", p.decoder_norm, fn);
  visit_linear("decoder.out", p.decoder_out, fn);
  visit_linear("ctc_main", p.ctc_main, fn);
  visit_linear("ctc_aux", p.ctc_aux, fn);
}

// Zero-filled params with every tensor shaped for `config`.
ModelParams allocate_params(const ModelConfig& config);

// Deterministic initialization. Draws come from std::mt19937 seeded with
// `seed`, one 32-bit draw u per projection element in canonical order, mapped
// to float((2 * (u + 0.5) / 2^32 - 1) / sqrt(d_model)). Layer-norm gains are
// 1 and layer-norm biases 0 (no draws consumed).
ModelParams init_params(const ModelConfig& config, std::uint32_t seed);

// Walks every tensor and compares against parameter_layout(p.config).
// Throws bst::Error describing the first mismatch.
void audit_shapes(const ModelParams& p);

std::size_t parameter_count(const ModelConfig& config);

// Weight file: "BSTW1", the ten ModelConfig fields as little-endian int32 in
// declaration order, then each tensor of parameter_layout() as row-major
// little-endian float32.
void save_weights(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_weights(const std::filesystem::path& path);

}  // namespace bst
