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

#include "bst/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "bst/layers.hpp"

namespace bst {

namespace {

void check_token(const ModelParams& params, Token t) {
  if (t < 0 || t >= params.config.vocab_size) {
    throw Error("decoder: token " + std::to_string(t) + " outside vocabulary");
  }
}

Matrix embed(const ModelParams& params, const TokenSeq& tokens, std::size_t first_pos) {
  const std::size_t d = params.config.d_model;
  Matrix x(tokens.size(), d);
  const Matrix pe = positional_encoding(first_pos, tokens.size(), d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    check_token(params, tokens[i]);
    auto e = params.embedding.row(tokens[i]);
    auto dst = x.row(i);
    for (std::size_t c = 0; c < d; ++c) dst[c] = e[c] + pe(i, c);
  }
  return x;
}

// Runs rows `x` (positions first .. first+n-1) through every decoder layer.
// keys/values already hold the cache for positions < first and are extended.
Matrix run_layers(const ModelParams& params, const DecoderMemory& memory, Matrix x,
                  std::vector<Matrix>& keys, std::vector<Matrix>& values) {
  const ModelConfig& c = params.config;
  const std::size_t n = x.rows();
  for (int l = 0; l < c.dec_layers; ++l) {
    const DecoderLayer& layer = params.decoder[l];
    const Matrix xn = layer_norm(layer.norm_self, x);
    const std::size_t first = keys[l].rows();
    keys[l].append_rows(linear(layer.self_attn.key, xn));
    values[l].append_rows(linear(layer.self_attn.value, xn));
    std::vector<KeyRange> causal(n);
    for (std::size_t i = 0; i < n; ++i) causal[i] = KeyRange{0, first + i + 1};
    add_inplace(x, linear(layer.self_attn.output,
                       attention_context(linear(layer.self_attn.query, xn), keys[l], values[l],
                                         c.n_heads, causal)));

    const Matrix sn = layer_norm(layer.norm_src, x);
    std::vector<KeyRange> all(n, KeyRange{0, memory.frames});
    add_inplace(x, linear(layer.src_attn.output,
                       attention_context(linear(layer.src_attn.query, sn), memory.keys[l],
                                         memory.values[l], c.n_heads, all)));

    add_inplace(x, feed_forward(layer.ff, layer_norm(layer.norm_ff, x)));
  }
  return x;
}

std::vector<double> output_distribution(const ModelParams& params, std::span<const double> h) {
  return log_softmax(linear(params.decoder_out, layer_norm(params.decoder_norm, h)));
}

void check_memory(const DecoderMemory& memory) {
  if (memory.frames == 0) throw Error("decoder: no encoded frames to attend to");
}

}  // namespace

DecoderMemory DecoderMemory::build(const ModelParams& params, const Matrix& encoded) {
  if (encoded.rows() == 0) throw Error("decoder: no encoded frames to attend to");
  DecoderMemory m;
  m.frames = encoded.rows();
  for (const DecoderLayer& layer : params.decoder) {
    m.keys.push_back(linear(layer.src_attn.key, encoded));
    m.values.push_back(linear(layer.src_attn.value, encoded));
  }
  return m;
}

DecoderState decoder_start(const ModelParams& params, const DecoderMemory& memory) {
  check_memory(memory);
  DecoderState s;
  s.keys.assign(params.config.dec_layers, Matrix());
  s.values.assign(params.config.dec_layers, Matrix());
  s.memory_frames = memory.frames;
  s.prefix = {kSosEos};
  Matrix h = run_layers(params, memory, embed(params, s.prefix, 0), s.keys, s.values);
  s.log_probs = output_distribution(params, h.row(0));
  return s;
}

DecoderState decoder_advance(const ModelParams& params, const DecoderMemory& memory,
                             const DecoderState& state, Token token) {
  check_memory(memory);
  if (state.memory_frames != memory.frames) {
    throw Error("decoder: cached state built for a different encoder output");
  }
  DecoderState s = state;
  s.prefix.push_back(token);
  Matrix h = run_layers(params, memory, embed(params, {token}, state.prefix.size()), s.keys,
                        s.values);
  s.log_probs = output_distribution(params, h.row(0));
  return s;
}

DecoderState decoder_feed(const ModelParams& params, const DecoderMemory& memory,
                          const TokenSeq& prefix) {
  if (prefix.empty() || prefix.front() != kSosEos) throw Error("decoder: prefix must start with sos");
  DecoderState s = decoder_start(params, memory);
  for (std::size_t i = 1; i < prefix.size(); ++i) s = decoder_advance(params, memory, s, prefix[i]);
  return s;
}

Matrix teacher_forced_log_probs(const ModelParams& params, const Matrix& encoded,
                                const TokenSeq& y) {
  const DecoderMemory memory = DecoderMemory::build(params, encoded);
  TokenSeq input = {kSosEos};
  input.insert(input.end(), y.begin(), y.end() - (y.empty() ? 0 : 1));
  std::vector<Matrix> keys(params.config.dec_layers);
  std::vector<Matrix> values(params.config.dec_layers);
  const Matrix h = run_layers(params, memory, embed(params, input, 0), keys, values);
  Matrix out(h.rows(), params.config.vocab_size);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto lp = output_distribution(params, h.row(i));
    std::copy(lp.begin(), lp.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> decoder_step(const ModelParams& params, const Matrix& encoded,
                                 const TokenSeq& prefix) {
  if (prefix.empty() || prefix.front() != kSosEos) throw Error("decoder: prefix must start with sos");
  const DecoderMemory memory = DecoderMemory::build(params, encoded);
  std::vector<Matrix> keys(params.config.dec_layers);
  std::vector<Matrix> values(params.config.dec_layers);
  const Matrix h = run_layers(params, memory, embed(params, prefix, 0), keys, values);
  return output_distribution(params, h.row(h.rows() - 1));
}

double sequence_logprob(const ModelParams& params, const Matrix& encoded, const TokenSeq& y) {
  if (y.empty() || y.back() != kSosEos) throw Error("sequence_logprob: target must end with eos");
  const Matrix lp = teacher_forced_log_probs(params, encoded, y);
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) total += lp(j, y[j]);
  return total;
}

int default_max_output_length(std::size_t encoded_frames) {
  return static_cast<int>((encoded_frames + 1) / 2) + 10;
}

}  // namespace bst
