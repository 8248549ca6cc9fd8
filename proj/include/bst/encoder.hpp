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

#include <cstddef>
#include <vector>

#include "bst/core.hpp"
#include "bst/params.hpp"

namespace bst {

// Strided convolution front end: one kernel-2/stride-2 conv + ReLU per factor
// of two, then a linear map to d_model. Output frame t depends only on input
// frames [t * factor, (t + 1) * factor), so subsampling a prefix of the input
// gives a prefix of the output.
Matrix subsample(const ModelParams& params, const Matrix& features);

// Frame counts are post-subsampling.
struct BlockSizes {
  int block_size = 40;
  int hop = 8;
  int look_ahead = 8;

  // Hop and look-ahead each 20% of the block (rounded, at least 1).
  static BlockSizes from_block_size(int block_size);
  int history() const { return block_size - hop - look_ahead; }
  void validate() const;
};

struct BlockWindow {
  std::size_t start = 0;  // attention window [start, end)
  std::size_t end = 0;
  std::size_t central_start = 0;  // frames this block outputs
  std::size_t central_end = 0;
};

struct BlockSchedule {
  BlockSizes sizes;
  std::size_t total_frames = 0;
  std::vector<BlockWindow> blocks;
};

// Block i outputs [i*hop, min((i+1)*hop, T)) and attends over
// [max(0, central_start - history), min(T, central_end + look_ahead)).
BlockSchedule make_block_schedule(std::size_t total_frames, BlockSizes sizes);

// Window of block i when the total length is not yet known.
BlockWindow unbounded_block_window(std::size_t block_idx, const BlockSizes& sizes);

// Per layer l, the context embedding layer l attends to in the next block.
// A state without history belongs to block 0: its frames do not attend to
// any context slot.
struct ContextState {
  std::vector<std::vector<double>> vectors;
  bool has_history = false;

  static ContextState initial(const ModelConfig& config);
};

// Mean over the block's input frames, then the layer-0 context projection.
std::vector<double> init_context(const ModelParams& params, const Matrix& block_input);

struct EncoderOutput {
  Matrix top;  // last layer, after the final layer norm
  Matrix tap;  // raw output of layer intermediate_layer (1-based)
};

struct BlockOutput {
  EncoderOutput central;
  ContextState context;
};

// `window_frames` are the subsampled frames of the block window, without
// positional encoding.
BlockOutput encode_block(const ModelParams& params, const BlockSchedule& schedule,
                         std::size_t block_idx, const Matrix& window_frames,
                         const ContextState& context);
BlockOutput encode_block(const ModelParams& params, const BlockWindow& window,
                         const Matrix& window_frames, const ContextState& context);

// Full-context reference encoder over subsampled frames.
EncoderOutput encode_full(const ModelParams& params, const Matrix& frames);

// Concatenated central outputs of blocks 0 .. blocks-1.
struct EncodedBlocks {
  Matrix top;
  Matrix tap;
  std::size_t blocks = 0;

  std::size_t frames() const { return top.rows(); }
  void append(const EncoderOutput& block);
};

// Runs every block of `schedule` in order over the full frame matrix.
EncodedBlocks encode_blocks(const ModelParams& params, const BlockSchedule& schedule,
                            const Matrix& frames);

// Incremental front end + block encoder for one stream. Features arrive in
// arbitrary chunks; a block is encoded as soon as its window is complete and
// it is known not to be the last block, so every block produced before
// mark_end() is non-final.
class StreamingEncoder {
 public:
  StreamingEncoder(const ModelParams& params, BlockSizes sizes);

  void accept_features(const Matrix& features);
  void mark_end();

  // Encodes the next block if it is ready. Returns false otherwise.
  bool encode_next_block();

  bool ended() const { return ended_; }
  // True once mark_end() was called and every block has been encoded.
  bool done() const;
  // True when the most recently encoded block is the last one of the stream.
  bool last_block_encoded() const { return done() && encoded_.blocks > 0; }

  const EncodedBlocks& encoded() const { return encoded_; }
  const Matrix& frames() const { return frames_; }
  std::size_t feature_frames() const { return feature_frames_; }
  // Window of the most recently encoded block.
  const BlockWindow& last_window() const { return last_window_; }

 private:
  std::size_t total_blocks_if_ended() const;

  const ModelParams& params_;
  BlockSizes sizes_;
  Matrix pending_features_;  // fewer than subsample_factor rows
  Matrix frames_;            // subsampled frames received so far
  std::size_t feature_frames_ = 0;
  bool ended_ = false;
  ContextState context_;
  EncodedBlocks encoded_;
  BlockWindow last_window_;
};

}  // namespace bst
