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

#include <span>
#include <utility>
#include <vector>

#include "bst/core.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"

namespace bst {

// frames x vocab, each row a log_softmax output. Blank is column 0.
using CtcLogProbs = Matrix;

enum class CtcHead { kMain, kAux };

// Per-frame linear projection + log_softmax. The main head reads top-layer
// encodings; the auxiliary head reads the intermediate-layer tap.
CtcLogProbs ctc_head(const ModelParams& params, const Matrix& encoded, CtcHead head);

// -log p(target | lp) by the forward algorithm over the blank-interleaved
// target. Returns +inf when the target cannot be emitted in lp.rows() frames
// (each token needs a frame and each adjacent repeat an extra blank).
double ctc_loss(const CtcLogProbs& lp, const TokenSeq& target);

// Frames needed to emit `target`: its length plus one per adjacent repeat.
std::size_t ctc_min_frames(const TokenSeq& target);

// Forward variables of one prefix over the first frames() rows of a
// CtcLogProbs matrix, in natural-log domain:
//   blank_ending()[t]    = log P(frames 0..t collapse to prefix, frame t blank)
//   nonblank_ending()[t] = log P(frames 0..t collapse to prefix, frame t = last token)
// It also keeps the frame-(frames()-1) column for every shorter prefix, which
// is what lets the state absorb new frames without revisiting old columns.
class CtcPrefixState {
 public:
  const TokenSeq& prefix() const { return prefix_; }
  std::size_t frames() const { return blank_.size(); }
  std::span<const double> blank_ending() const { return blank_; }
  std::span<const double> nonblank_ending() const { return nonblank_; }

  // log of the probability that the collapsed emission starts with prefix().
  double log_prefix_prob() const { return log_prefix_; }
  // log of the probability that the collapsed emission equals prefix().
  double log_complete_prob() const;
  bool dead() const { return log_prefix_ == kNegInf; }

  // Absorbs rows frames() .. lp.rows()-1.
  CtcPrefixState with_frames(const CtcLogProbs& lp) const;
  // State for prefix() + token over the same frames. Valid for any state,
  // including dead ones.
  CtcPrefixState with_token(const CtcLogProbs& lp, Token token) const;

  friend CtcPrefixState ctc_prefix_init(const CtcLogProbs& lp, std::size_t frames_available);

 private:
  TokenSeq prefix_;
  std::vector<double> blank_;
  std::vector<double> nonblank_;
  // Column at the last absorbed frame for prefix lengths 0 .. prefix_.size().
  std::vector<double> last_blank_;
  std::vector<double> last_nonblank_;
  double log_prefix_ = 0.0;
};

// Empty-prefix state over the first `frames_available` rows of lp.
CtcPrefixState ctc_prefix_init(const CtcLogProbs& lp, std::size_t frames_available);

// Extends the state to all rows of lp, then by `token`. Returns the new state
// and log[p_prefix(prefix + token) / p_prefix(prefix)]. Throws if the current
// prefix already has zero probability.
std::pair<CtcPrefixState, double> ctc_prefix_extend(const CtcLogProbs& lp,
                                                    const CtcPrefixState& state, Token token);

// log[p_complete(prefix) / p_prefix(prefix)] over all rows of lp.
double ctc_prefix_eos(const CtcLogProbs& lp, const CtcPrefixState& state);

// Per-frame argmax, merge repeats, drop blanks.
TokenSeq ctc_greedy_collapse(const CtcLogProbs& lp);

// Collapse of an explicit frame-level path.
TokenSeq ctc_collapse(std::span<const Token> path);

// Exhaustive oracles: enumerate all vocab^frames emission paths. Limited to
// frames <= 8 and vocab <= 5. Return linear-domain probabilities.
double brute_force_prefix_prob(const CtcLogProbs& lp, const TokenSeq& prefix);
double brute_force_complete_prob(const CtcLogProbs& lp, const TokenSeq& target);

}  // namespace bst
