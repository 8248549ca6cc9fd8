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

#include <memory>
#include <vector>

#include "bst/core.hpp"
#include "bst/ctc.hpp"
#include "bst/decoder.hpp"
#include "bst/encoder.hpp"
#include "bst/latency.hpp"
#include "bst/objectives.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"

namespace bst {

struct DecodeConfig {
  Task task = Task::kSt;
  int beam = 10;
  double ctc_weight = 0.3;  // mu
  // Tokens per hypothesis, ranked by attention log-prob, that are rescored
  // with CTC in each round, plus eos. 0 means 2 * beam. Ignored when
  // ctc_weight == 1, where every token is scored.
  int pre_beam = 0;
  // Length cap: ceil(max_length_ratio * encoded frames) + 10, unless
  // max_length > 0 overrides it.
  double max_length_ratio = 0.5;
  int max_length = 0;
  // A candidate equal to any of the hypothesis' last n tokens counts as a
  // repetition.
  int repetition_window = 1;
  BlockSizes blocks;

  // mu = 0.5 for SLU, 0.3 for ST.
  static DecodeConfig for_task(Task task);
  void validate() const;
  int length_cap(std::size_t encoded_frames) const;
  int effective_pre_beam() const { return pre_beam > 0 ? pre_beam : 2 * beam; }
};

struct TokenCommit {
  int block = 0;  // 0-based block index of the round that committed the token
  double source_ms = 0.0;
  double wall_ms = 0.0;
};

struct Hypothesis {
  TokenSeq tokens;  // after the implicit sos; a finished hypothesis omits its eos
  double score_att = 0.0;
  double score_ctc = 0.0;
  double score = 0.0;
  bool finished = false;
  // One entry per token, plus one for eos once finished.
  std::vector<TokenCommit> commits;
  CtcPrefixState ctc;
  std::shared_ptr<const DecoderState> decoder;  // null once finished
};

// mu * ctc + (1 - mu) * att; exactly att at mu = 0 and exactly ctc at mu = 1.
double joint_score(double score_att, double score_ctc, double mu);

// True iff blocks_consumed < total_blocks and the candidate is eos or repeats
// one of the hypothesis' last `repetition_window` tokens.
bool is_unreliable(Token candidate, const TokenSeq& tokens, std::size_t blocks_consumed,
                   std::size_t total_blocks, int repetition_window = 1);

struct WaitEvent {
  int block = 0;           // block index at which the decoder stopped to wait
  std::size_t length = 0;  // length of the best hypothesis at that point
  Token candidate = 0;     // the unreliable top candidate
};

struct DecodeResult {
  TokenSeq tokens;                  // best hypothesis, without eos
  std::vector<Hypothesis> nbest;    // finished hypotheses, best first
  EmissionLog log;                  // tokens of the best hypothesis, then eos
  std::vector<WaitEvent> waits;
  std::size_t blocks = 0;
  std::size_t encoded_frames = 0;
};

// Blockwise synchronous beam search over a feature stream. Blocks are encoded
// as chunks arrive; after each block the beam is rescored over all encoded
// frames and expanded round by round until the best hypothesis' top candidate
// is an end token or a repetition. The last block runs without that rule.
class BlockwiseDecoder {
 public:
  // `clock` and `vocab` (token text for the log; may be null) must outlive
  // the decoder.
  BlockwiseDecoder(const ModelParams& params, const DecodeConfig& config, Clock& clock,
                   const Vocabulary* vocab = nullptr);
  ~BlockwiseDecoder();
  BlockwiseDecoder(const BlockwiseDecoder&) = delete;
  BlockwiseDecoder& operator=(const BlockwiseDecoder&) = delete;

  void accept_chunk(const Matrix& features);
  DecodeResult finish();

  std::size_t blocks_processed() const;
  const std::vector<Hypothesis>& live() const;
  const std::vector<WaitEvent>& waits() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

DecodeResult decode_blockwise(const ModelParams& params, const std::vector<Matrix>& chunks,
                              const DecodeConfig& config, Clock& clock,
                              const Vocabulary* vocab = nullptr);

// Full-context encoder, then joint beam search over every frame with no
// reliability rule. Every commit is attributed to block 0.
DecodeResult decode_offline(const ModelParams& params, const Matrix& features,
                            const DecodeConfig& config, Clock& clock,
                            const Vocabulary* vocab = nullptr);
DecodeResult decode_offline(const ModelParams& params, const Matrix& features,
                            const DecodeConfig& config);

}  // namespace bst
