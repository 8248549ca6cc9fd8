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

#include <vector>

#include "bst/core.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"

namespace bst {

// Cross-attention keys and values of every decoder layer, computed once per
// encoder output (they change whenever a new block is appended).
struct DecoderMemory {
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::size_t frames = 0;

  static DecoderMemory build(const ModelParams& params, const Matrix& encoded);
};

// Incremental decoding state for one prefix. keys/values hold the per-layer
// self-attention cache, one row per prefix token. Only valid for the memory
// it was built against.
struct DecoderState {
  TokenSeq prefix;  // starts with sos
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::vector<double> log_probs;  // next-token distribution after `prefix`
  std::size_t memory_frames = 0;
};

// State after feeding sos.
DecoderState decoder_start(const ModelParams& params, const DecoderMemory& memory);
// Feeds one more token, reusing the cache.
DecoderState decoder_advance(const ModelParams& params, const DecoderMemory& memory,
                             const DecoderState& state, Token token);
// Feeds `prefix` (which must start with sos) one token at a time.
DecoderState decoder_feed(const ModelParams& params, const DecoderMemory& memory,
                          const TokenSeq& prefix);

// Next-token log-probabilities given the whole prefix, computed without a
// cache by running every prefix position through the decoder at once.
std::vector<double> decoder_step(const ModelParams& params, const Matrix& encoded,
                                 const TokenSeq& prefix);

// Teacher-forced sum of log p(y_j | sos, y_1 .. y_{j-1}); `y` must end with eos.
double sequence_logprob(const ModelParams& params, const Matrix& encoded, const TokenSeq& y);

// Per-position next-token distributions for the teacher-forced input
// [sos, y_1 .. y_{n-1}]; row j predicts y_{j+1}.
Matrix teacher_forced_log_probs(const ModelParams& params, const Matrix& encoded,
                                const TokenSeq& y);

// Default decoding length cap: ceil(0.5 * frames) + 10.
int default_max_output_length(std::size_t encoded_frames);

}  // namespace bst
