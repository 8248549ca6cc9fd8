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

#include "bst/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bst {

DecodeConfig DecodeConfig::for_task(Task task) {
  DecodeConfig c;
  c.task = task;
  c.ctc_weight = task == Task::kSlu ? 0.5 : 0.3;
  return c;
}

void DecodeConfig::validate() const {
  if (beam < 1) throw Error("beam must be at least 1");
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw Error("ctc weight must lie in [0, 1]");
  if (pre_beam < 0) throw Error("pre-beam must be non-negative");
  if (!(max_length_ratio > 0.0)) throw Error("max length ratio must be positive");
  if (max_length < 0) throw Error("max length must be non-negative");
  if (repetition_window < 1) throw Error("repetition window must be at least 1");
  blocks.validate();
}

int DecodeConfig::length_cap(std::size_t encoded_frames) const {
  if (max_length > 0) return max_length;
  return static_cast<int>(std::ceil(max_length_ratio * static_cast<double>(encoded_frames))) + 10;
}

double joint_score(double score_att, double score_ctc, double mu) {
  if (mu == 0.0) return score_att;
  if (mu == 1.0) return score_ctc;
  return mu * score_ctc + (1.0 - mu) * score_att;
}

bool is_unreliable(Token candidate, const TokenSeq& tokens, std::size_t blocks_consumed,
                   std::size_t total_blocks, int repetition_window) {
  if (blocks_consumed > total_blocks) throw Error("is_unreliable: more blocks consumed than exist");
  if (blocks_consumed == total_blocks) return false;
  if (candidate == kSosEos) return true;
  const std::size_t n = std::min(tokens.size(), static_cast<std::size_t>(repetition_window));
  return std::find(tokens.end() - static_cast<std::ptrdiff_t>(n), tokens.end(), candidate) !=
         tokens.end();
}

namespace {

struct Candidate {
  std::size_t parent = 0;
  Token token = 0;
  double att = 0.0;
  double ctc = 0.0;
  double score = 0.0;
  CtcPrefixState ctc_state;  // unused for eos
};

// Beam state shared by the offline and blockwise decoders.
class Search {
 public:
  Search(const ModelParams& params, const DecodeConfig& config, Clock& clock)
      : params_(params), config_(config), clock_(clock) {
    config_.validate();
  }

  // Makes `encoded` the current encoder output and rescores every live
  // hypothesis against it: attention scores are recomputed with the new
  // memory and CTC states absorb the new frames.
  void refresh(const Matrix& encoded) {
    memory_ = DecoderMemory::build(params_, encoded);
    lp_ = ctc_head(params_, encoded, CtcHead::kMain);
    if (!started_) {
      Hypothesis root;
      root.ctc = ctc_prefix_init(lp_, 0);
      live_.push_back(std::move(root));
      started_ = true;
    }
    for (Hypothesis& h : live_) {
      DecoderState s = decoder_start(params_, memory_);
      clock_.on_decoder_step();
      double att = 0.0;
      for (Token t : h.tokens) {
        att += s.log_probs[t];
        s = decoder_advance(params_, memory_, s, t);
        clock_.on_decoder_step();
      }
      h.decoder = std::make_shared<const DecoderState>(std::move(s));
      h.score_att = att;
      h.ctc = h.ctc.with_frames(lp_);
      h.score_ctc = h.ctc.log_prefix_prob();
      h.score = joint_score(h.score_att, h.score_ctc, config_.ctc_weight);
    }
    std::stable_sort(live_.begin(), live_.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  }

  // Rounds with the reliability rule; the caller knows more blocks follow.
  void streaming_rounds(std::size_t blocks_consumed, double source_ms) {
    const int block = static_cast<int>(blocks_consumed) - 1;
    const auto cap = static_cast<std::size_t>(config_.length_cap(memory_.frames));
    while (!live_.empty()) {
      std::vector<Candidate> cands = expand(cap, /*final=*/false);
      auto top = std::find_if(cands.begin(), cands.end(),
                              [](const Candidate& c) { return c.parent == 0; });
      if (top == cands.end()) break;
      if (is_unreliable(top->token, live_[0].tokens, blocks_consumed, blocks_consumed + 1,
                        config_.repetition_window)) {
        waits_.push_back({block, live_[0].tokens.size(), top->token});
        break;
      }
      std::erase_if(cands, [&](const Candidate& c) {
        return is_unreliable(c.token, live_[c.parent].tokens, blocks_consumed,
                             blocks_consumed + 1, config_.repetition_window);
      });
      if (cands.empty()) break;
      promote(cands, block, source_ms);
    }
    if (live_.empty()) throw dead_end(block);
  }

  // Rounds without the reliability rule until no live hypothesis can beat
  // the best finished one. Scores never increase along a hypothesis, so the
  // stop is exact.
  void final_rounds(std::size_t blocks_consumed, double source_ms) {
    const int block = static_cast<int>(blocks_consumed) - 1;
    const auto cap = static_cast<std::size_t>(config_.length_cap(memory_.frames));
    while (!live_.empty()) {
      if (!ended_.empty() && best_ended().score >= live_[0].score) break;
      std::vector<Candidate> cands = expand(cap, /*final=*/true);
      promote(cands, block, source_ms);
    }
    if (ended_.empty()) throw dead_end(block);
  }

  std::vector<Hypothesis> nbest() const {
    std::vector<Hypothesis> out = ended_;
    std::stable_sort(out.begin(), out.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    return out;
  }

  const std::vector<Hypothesis>& live() const { return live_; }
  const std::vector<WaitEvent>& waits() const { return waits_; }
  std::size_t frames() const { return memory_.frames; }

 private:
  const Hypothesis& best_ended() const {
    return *std::max_element(ended_.begin(), ended_.end(),
                             [](const Hypothesis& a, const Hypothesis& b) {
                               return a.score < b.score;
                             });
  }

  Error dead_end(int block) const {
    std::ostringstream msg;
    msg << "beam search: every hypothesis has zero probability (block " << block << ", "
        << memory_.frames << " encoded frames, ctc weight " << config_.ctc_weight << ", beam "
        << config_.beam << ", " << ended_.size() << " finished)";
    return Error(msg.str());
  }

  // Tokens proposed for one hypothesis, ascending by id. eos is always
  // proposed: otherwise a beam whose pre-beam extensions are all impossible
  // under CTC would have nowhere to go.
  std::vector<Token> proposals(const std::vector<double>& lp) const {
    const auto vocab = static_cast<Token>(lp.size());
    std::vector<Token> tokens(vocab - 1);
    std::iota(tokens.begin(), tokens.end(), Token{1});  // everything but blank
    const auto keep = static_cast<std::size_t>(config_.effective_pre_beam());
    if (config_.ctc_weight == 1.0 || keep >= tokens.size()) return tokens;
    std::stable_sort(tokens.begin(), tokens.end(),
                     [&](Token a, Token b) { return lp[a] > lp[b]; });
    tokens.resize(keep);
    if (std::find(tokens.begin(), tokens.end(), kSosEos) == tokens.end()) {
      tokens.push_back(kSosEos);
    }
    std::sort(tokens.begin(), tokens.end());
    return tokens;
  }

  // Every scored child of every live hypothesis, best first; ties keep
  // (hypothesis rank, token id) order.
  std::vector<Candidate> expand(std::size_t cap, bool final) const {
    const double mu = config_.ctc_weight;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live_.size(); ++i) {
      const Hypothesis& h = live_[i];
      const std::vector<double>& lp = h.decoder->log_probs;
      std::vector<Token> tokens;
      if (h.tokens.size() >= cap) {
        if (!final) continue;
        tokens = {kSosEos};
      } else {
        tokens = proposals(lp);
      }
      for (Token t : tokens) {
        Candidate c;
        c.parent = i;
        c.token = t;
        c.att = h.score_att + lp[t];
        if (t == kSosEos) {
          c.ctc = h.ctc.log_complete_prob();
        } else {
          c.ctc_state = h.ctc.with_token(lp_, t);
          c.ctc = c.ctc_state.log_prefix_prob();
        }
        if (mu > 0.0 && c.ctc == kNegInf) continue;
        c.score = joint_score(c.att, c.ctc, mu);
        cands.push_back(std::move(c));
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    return cands;
  }

  // Keeps the best `beam` candidates: eos children finish, the rest form the
  // next live beam.
  void promote(std::vector<Candidate>& cands, int block, double source_ms) {
    if (cands.size() > static_cast<std::size_t>(config_.beam)) cands.resize(config_.beam);
    std::vector<Hypothesis> next;
    std::vector<std::size_t> parents;
    for (Candidate& c : cands) {
      const Hypothesis& parent = live_[c.parent];
      Hypothesis h;
      h.tokens = parent.tokens;
      h.commits = parent.commits;
      h.score_att = c.att;
      h.score_ctc = c.ctc;
      h.score = c.score;
      if (c.token == kSosEos) {
        h.finished = true;
        h.ctc = parent.ctc;
        ended_.push_back(std::move(h));
        ended_index_.push_back(ended_.size() - 1);
      } else {
        h.tokens.push_back(c.token);
        h.ctc = std::move(c.ctc_state);
        next.push_back(std::move(h));
        parents.push_back(c.parent);
      }
    }
    for (std::size_t k = 0; k < next.size(); ++k) {
      next[k].decoder = std::make_shared<const DecoderState>(decoder_advance(
          params_, memory_, *live_[parents[k]].decoder, next[k].tokens.back()));
      clock_.on_decoder_step();
    }
    const TokenCommit commit{block, source_ms, clock_.now_ms()};
    for (Hypothesis& h : next) h.commits.push_back(commit);
    for (std::size_t idx : ended_index_) ended_[idx].commits.push_back(commit);
    ended_index_.clear();
    live_ = std::move(next);
  }

  const ModelParams& params_;
  DecodeConfig config_;
  Clock& clock_;
  DecoderMemory memory_;
  CtcLogProbs lp_;
  bool started_ = false;
  std::vector<Hypothesis> live_;
  std::vector<Hypothesis> ended_;
  std::vector<std::size_t> ended_index_;  // finished in the current round
  std::vector<WaitEvent> waits_;
};

std::string token_text(const Vocabulary* vocab, Token t) {
  return vocab ? vocab->token(t) : std::to_string(t);
}

DecodeResult make_result(const Search& search, std::size_t blocks, double source_total_ms,
                         double source_end_wall_ms, double completion_wall_ms,
                         const Vocabulary* vocab) {
  DecodeResult r;
  r.nbest = search.nbest();
  const Hypothesis& best = r.nbest.front();
  r.tokens = best.tokens;
  r.waits = search.waits();
  r.blocks = blocks;
  r.encoded_frames = search.frames();
  r.log.source_total_ms = source_total_ms;
  r.log.source_end_wall_ms = source_end_wall_ms;
  r.log.completion_wall_ms = completion_wall_ms;
  for (std::size_t i = 0; i < best.commits.size(); ++i) {
    const Token t = i < best.tokens.size() ? best.tokens[i] : kSosEos;
    const TokenCommit& c = best.commits[i];
    r.log.events.push_back(
        {static_cast<int>(i) + 1, token_text(vocab, t), c.block, c.source_ms, c.wall_ms});
  }
  r.log.validate();
  return r;
}

}  // namespace

struct BlockwiseDecoder::Impl {
  Impl(const ModelParams& p, const DecodeConfig& c, Clock& clk, const Vocabulary* v)
      : params(p), config(c), clock(clk), vocab(v), search(p, c, clk), encoder(p, c.blocks) {}

  double consumed_ms() const {
    return static_cast<double>(encoder.feature_frames()) * params.config.frame_ms;
  }

  const ModelParams& params;
  DecodeConfig config;
  Clock& clock;
  const Vocabulary* vocab;
  Search search;
  StreamingEncoder encoder;
  double source_end_wall_ms = 0.0;
  bool finished = false;
};

BlockwiseDecoder::BlockwiseDecoder(const ModelParams& params, const DecodeConfig& config,
                                   Clock& clock, const Vocabulary* vocab)
    : impl_(std::make_unique<Impl>(params, config, clock, vocab)) {}

BlockwiseDecoder::~BlockwiseDecoder() = default;

void BlockwiseDecoder::accept_chunk(const Matrix& features) {
  Impl& s = *impl_;
  if (s.finished) throw Error("BlockwiseDecoder: chunk after finish()");
  s.encoder.accept_features(features);
  s.source_end_wall_ms = s.clock.now_ms();
  // Every block encoded here is known not to be the last one. Its source
  // position is the audio received so far, which is the end of its window
  // rounded up to the chunk that completed it.
  while (s.encoder.encode_next_block()) {
    s.search.refresh(s.encoder.encoded().top);
    s.search.streaming_rounds(s.encoder.encoded().blocks, s.consumed_ms());
  }
}

DecodeResult BlockwiseDecoder::finish() {
  Impl& s = *impl_;
  if (s.finished) throw Error("BlockwiseDecoder: finish() called twice");
  s.finished = true;
  if (s.encoder.feature_frames() == 0) throw Error("decode_blockwise: empty stream");
  s.encoder.mark_end();
  while (s.encoder.encode_next_block()) {
    s.search.refresh(s.encoder.encoded().top);
    if (!s.encoder.done()) s.search.streaming_rounds(s.encoder.encoded().blocks, s.consumed_ms());
  }
  if (s.encoder.encoded().blocks == 0) {
    throw Error("decode_blockwise: stream of " + std::to_string(s.encoder.feature_frames()) +
                " feature frames is too short to subsample");
  }
  s.search.final_rounds(s.encoder.encoded().blocks, s.consumed_ms());
  return make_result(s.search, s.encoder.encoded().blocks, s.consumed_ms(),
                     s.source_end_wall_ms, s.clock.now_ms(), s.vocab);
}

std::size_t BlockwiseDecoder::blocks_processed() const { return impl_->encoder.encoded().blocks; }

const std::vector<Hypothesis>& BlockwiseDecoder::live() const { return impl_->search.live(); }

const std::vector<WaitEvent>& BlockwiseDecoder::waits() const { return impl_->search.waits(); }

DecodeResult decode_blockwise(const ModelParams& params, const std::vector<Matrix>& chunks,
                              const DecodeConfig& config, Clock& clock, const Vocabulary* vocab) {
  if (chunks.empty()) throw Error("decode_blockwise: empty stream");
  BlockwiseDecoder decoder(params, config, clock, vocab);
  for (const Matrix& chunk : chunks) decoder.accept_chunk(chunk);
  return decoder.finish();
}

DecodeResult decode_offline(const ModelParams& params, const Matrix& features,
                            const DecodeConfig& config, Clock& clock, const Vocabulary* vocab) {
  const double source_end = clock.now_ms();
  const EncoderOutput enc = encode_full(params, subsample(params, features));
  Search search(params, config, clock);
  search.refresh(enc.top);
  const double total_ms = static_cast<double>(features.rows()) * params.config.frame_ms;
  search.final_rounds(1, total_ms);
  return make_result(search, 1, total_ms, source_end, clock.now_ms(), vocab);
}

DecodeResult decode_offline(const ModelParams& params, const Matrix& features,
                            const DecodeConfig& config) {
  SimulatedClock clock(0.0);
  return decode_offline(params, features, config, clock);
}

}  // namespace bst
