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

#include "bst/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "bst/layers.hpp"

namespace bst {

Matrix subsample(const ModelParams& params, const Matrix& features) {
  const ModelConfig& c = params.config;
  if (features.cols() != static_cast<std::size_t>(c.feature_dim)) {
    throw Error("subsample: feature dim " + std::to_string(features.cols()) + " != " +
                std::to_string(c.feature_dim));
  }
  if (features.rows() < static_cast<std::size_t>(c.subsample_factor)) {
    throw Error("subsample: " + std::to_string(features.rows()) +
                " frames is shorter than the receptive field of " +
                std::to_string(c.subsample_factor));
  }
  Matrix x = features;
  for (const Linear& conv : params.subsample_convs) {
    // Kernel 2, stride 2, no padding: stack frame pairs and apply a linear map.
    const std::size_t out_rows = x.rows() / 2;
    Matrix stacked(out_rows, 2 * x.cols());
    for (std::size_t t = 0; t < out_rows; ++t) {
      auto dst = stacked.row(t);
      auto a = x.row(2 * t);
      auto b = x.row(2 * t + 1);
      std::copy(a.begin(), a.end(), dst.begin());
      std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
    }
    x = linear(conv, stacked);
    relu_inplace(x);
  }
  return linear(params.subsample_out, x);
}

BlockSizes BlockSizes::from_block_size(int block_size) {
  const int part = std::max(1, static_cast<int>(std::lround(0.2 * block_size)));
  return BlockSizes{block_size, part, part};
}

void BlockSizes::validate() const {
  if (hop < 1) throw Error("block schedule: hop must be >= 1");
  if (look_ahead < 0) throw Error("block schedule: look-ahead must be >= 0");
  if (hop + look_ahead > block_size) {
    throw Error("block schedule: hop + look-ahead (" + std::to_string(hop + look_ahead) +
                ") exceeds block size " + std::to_string(block_size));
  }
}

BlockWindow unbounded_block_window(std::size_t i, const BlockSizes& s) {
  BlockWindow w;
  w.central_start = i * static_cast<std::size_t>(s.hop);
  w.central_end = w.central_start + static_cast<std::size_t>(s.hop);
  const auto history = static_cast<std::size_t>(s.history());
  w.start = w.central_start > history ? w.central_start - history : 0;
  w.end = w.central_end + static_cast<std::size_t>(s.look_ahead);
  return w;
}

BlockSchedule make_block_schedule(std::size_t total_frames, BlockSizes sizes) {
  sizes.validate();
  if (total_frames == 0) throw Error("block schedule: no frames");
  BlockSchedule s;
  s.sizes = sizes;
  s.total_frames = total_frames;
  const auto hop = static_cast<std::size_t>(sizes.hop);
  const std::size_t n = (total_frames + hop - 1) / hop;
  for (std::size_t i = 0; i < n; ++i) {
    BlockWindow w = unbounded_block_window(i, sizes);
    w.central_end = std::min(w.central_end, total_frames);
    w.end = std::min(w.end, total_frames);
    s.blocks.push_back(w);
  }
  return s;
}

ContextState ContextState::initial(const ModelConfig& config) {
  ContextState s;
  s.vectors.assign(config.enc_layers, std::vector<double>(config.d_model, 0.0));
  return s;
}

std::vector<double> init_context(const ModelParams& params, const Matrix& block_input) {
  if (block_input.rows() == 0) throw Error("init_context: empty block");
  std::vector<double> mean(block_input.cols(), 0.0);
  for (std::size_t r = 0; r < block_input.rows(); ++r) {
    auto row = block_input.row(r);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(block_input.rows());
  return linear(params.encoder.front().context_proj, mean);
}

namespace {

// One pre-norm encoder layer. `slot`, when given, is an extra context
// position: it always attends to itself and the frames; the frames attend to
// it only if `frames_see_slot`.
void encoder_layer(const EncoderLayer& layer, int heads, Matrix& x, std::vector<double>* slot,
                   bool frames_see_slot) {
  const std::size_t n = x.rows();
  const Matrix xn = layer_norm(layer.norm_attn, x);
  Matrix q = linear(layer.self_attn.query, xn);
  Matrix k;
  Matrix v;
  std::vector<KeyRange> ranges;
  if (slot) {
    const auto sn = layer_norm(layer.norm_attn, *slot);
    k.append_row(linear(layer.self_attn.key, sn));
    v.append_row(linear(layer.self_attn.value, sn));
    k.append_rows(linear(layer.self_attn.key, xn));
    v.append_rows(linear(layer.self_attn.value, xn));
    q.append_row(linear(layer.self_attn.query, sn));
    ranges.assign(n, KeyRange{frames_see_slot ? 0u : 1u, n + 1});
    ranges.push_back(KeyRange{0, n + 1});
  } else {
    k = linear(layer.self_attn.key, xn);
    v = linear(layer.self_attn.value, xn);
    ranges.assign(n, KeyRange{0, n});
  }
  const Matrix attended = linear(layer.self_attn.output, attention_context(q, k, v, heads, ranges));
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = x.row(r);
    auto src = attended.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
  add_inplace(x, feed_forward(layer.ff, layer_norm(layer.norm_ff, x)));
  if (slot) {
    auto src = attended.row(n);
    for (std::size_t c = 0; c < slot->size(); ++c) (*slot)[c] += src[c];
    Matrix s(1, slot->size());
    std::copy(slot->begin(), slot->end(), s.row(0).begin());
    const Matrix f = feed_forward(layer.ff, layer_norm(layer.norm_ff, s));
    for (std::size_t c = 0; c < slot->size(); ++c) (*slot)[c] += f(0, c);
  }
}

Matrix with_positions(const Matrix& frames, std::size_t first) {
  Matrix x = frames;
  add_inplace(x, positional_encoding(first, frames.rows(), frames.cols()));
  return x;
}

}  // namespace

EncoderOutput encode_full(const ModelParams& params, const Matrix& frames) {
  const ModelConfig& c = params.config;
  if (frames.rows() == 0) throw Error("encode_full: no frames");
  if (frames.cols() != static_cast<std::size_t>(c.d_model)) throw Error("encode_full: width != d_model");
  Matrix x = with_positions(frames, 0);
  EncoderOutput out;
  for (int l = 0; l < c.enc_layers; ++l) {
    encoder_layer(params.encoder[l], c.n_heads, x, nullptr, false);
    if (l + 1 == c.intermediate_layer) out.tap = x;
  }
  out.top = layer_norm(params.encoder_norm, x);
  return out;
}

BlockOutput encode_block(const ModelParams& params, const BlockSchedule& schedule,
                         std::size_t block_idx, const Matrix& window_frames,
                         const ContextState& context) {
  if (block_idx >= schedule.blocks.size()) {
    throw Error("encode_block: block " + std::to_string(block_idx) + " not in schedule");
  }
  return encode_block(params, schedule.blocks[block_idx], window_frames, context);
}

BlockOutput encode_block(const ModelParams& params, const BlockWindow& w,
                         const Matrix& window_frames, const ContextState& context) {
  const ModelConfig& c = params.config;
  if (window_frames.rows() != w.end - w.start) {
    throw Error("encode_block: window [" + std::to_string(w.start) + ", " +
                std::to_string(w.end) + ") needs " + std::to_string(w.end - w.start) +
                " frames, got " + std::to_string(window_frames.rows()));
  }
  if (window_frames.cols() != static_cast<std::size_t>(c.d_model)) {
    throw Error("encode_block: width != d_model");
  }
  if (context.vectors.size() != static_cast<std::size_t>(c.enc_layers)) {
    throw Error("encode_block: context state has wrong layer count");
  }

  Matrix x = with_positions(window_frames, w.start);
  ContextState next;
  next.has_history = true;
  next.vectors.resize(c.enc_layers);
  next.vectors[0] = init_context(params, x);

  Matrix tap;
  for (int l = 0; l < c.enc_layers; ++l) {
    std::vector<double> slot = context.has_history ? context.vectors[l] : next.vectors[l];
    encoder_layer(params.encoder[l], c.n_heads, x, &slot, context.has_history);
    if (l + 1 < c.enc_layers) next.vectors[l + 1] = linear(params.encoder[l + 1].context_proj, slot);
    if (l + 1 == c.intermediate_layer) tap = x;
  }
  const std::size_t lo = w.central_start - w.start;
  const std::size_t hi = w.central_end - w.start;
  BlockOutput out;
  out.central.top = layer_norm(params.encoder_norm, x.slice_rows(lo, hi));
  out.central.tap = tap.slice_rows(lo, hi);
  out.context = std::move(next);
  return out;
}

void EncodedBlocks::append(const EncoderOutput& block) {
  top.append_rows(block.top);
  tap.append_rows(block.tap);
  ++blocks;
}

EncodedBlocks encode_blocks(const ModelParams& params, const BlockSchedule& schedule,
                            const Matrix& frames) {
  if (frames.rows() != schedule.total_frames) throw Error("encode_blocks: frame count mismatch");
  EncodedBlocks enc;
  ContextState ctx = ContextState::initial(params.config);
  for (std::size_t i = 0; i < schedule.blocks.size(); ++i) {
    const BlockWindow& w = schedule.blocks[i];
    BlockOutput out = encode_block(params, schedule, i, frames.slice_rows(w.start, w.end), ctx);
    enc.append(out.central);
    ctx = std::move(out.context);
  }
  return enc;
}

StreamingEncoder::StreamingEncoder(const ModelParams& params, BlockSizes sizes)
    : params_(params), sizes_(sizes), context_(ContextState::initial(params.config)) {
  sizes_.validate();
}

void StreamingEncoder::accept_features(const Matrix& features) {
  if (ended_) throw Error("StreamingEncoder: features after end of stream");
  if (features.rows() == 0) return;
  feature_frames_ += features.rows();
  pending_features_.append_rows(features);
  const auto factor = static_cast<std::size_t>(params_.config.subsample_factor);
  const std::size_t usable = pending_features_.rows() / factor * factor;
  if (usable == 0) return;
  frames_.append_rows(subsample(params_, pending_features_.slice_rows(0, usable)));
  pending_features_ = pending_features_.slice_rows(usable, pending_features_.rows());
}

void StreamingEncoder::mark_end() { ended_ = true; }

std::size_t StreamingEncoder::total_blocks_if_ended() const {
  const auto hop = static_cast<std::size_t>(sizes_.hop);
  return (frames_.rows() + hop - 1) / hop;
}

bool StreamingEncoder::done() const {
  return ended_ && encoded_.blocks >= total_blocks_if_ended();
}

bool StreamingEncoder::encode_next_block() {
  const std::size_t i = encoded_.blocks;
  const std::size_t available = frames_.rows();
  BlockWindow w;
  if (!ended_) {
    w = unbounded_block_window(i, sizes_);
    // The window must be complete and at least one frame must follow the
    // central range, which proves this block is not the last one.
    if (available < std::max(w.end, w.central_end + 1)) return false;
  } else {
    if (i >= total_blocks_if_ended()) return false;
    w = unbounded_block_window(i, sizes_);
    w.central_end = std::min(w.central_end, available);
    w.end = std::min(w.end, available);
  }
  BlockOutput out = encode_block(params_, w, frames_.slice_rows(w.start, w.end), context_);
  encoded_.append(out.central);
  context_ = std::move(out.context);
  last_window_ = w;
  return true;
}

}  // namespace bst
