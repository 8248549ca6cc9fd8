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

#include "bst/ctc.hpp"

#include <algorithm>
#include <cmath>

#include "bst/layers.hpp"

namespace bst {

CtcLogProbs ctc_head(const ModelParams& params, const Matrix& encoded, CtcHead head) {
  if (encoded.rows() == 0) throw Error("ctc_head: no encoded frames");
  const Linear& proj = head == CtcHead::kMain ? params.ctc_main : params.ctc_aux;
  Matrix logits = linear(proj, encoded);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto lp = log_softmax(logits.row(t));
    std::copy(lp.begin(), lp.end(), logits.row(t).begin());
  }
  return logits;
}

std::size_t ctc_min_frames(const TokenSeq& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

namespace {

void check_regular_tokens(const TokenSeq& target, int vocab, const char* who) {
  for (Token t : target) {
    if (t == kBlank || t == kSosEos || t < 0 || t >= vocab) {
      throw Error(std::string(who) + ": target token " + std::to_string(t) +
                  " is blank, sos/eos or outside the vocabulary");
    }
  }
}

}  // namespace

double ctc_loss(const CtcLogProbs& lp, const TokenSeq& target) {
  check_regular_tokens(target, static_cast<int>(lp.cols()), "ctc_loss");
  const std::size_t frames = lp.rows();
  if (ctc_min_frames(target) > frames) return kInf;
  if (frames == 0) return 0.0;  // empty target, empty input

  // Extended label sequence: blank, y1, blank, y2, ..., yL, blank.
  const std::size_t states = 2 * target.size() + 1;
  auto label = [&](std::size_t s) { return s % 2 == 0 ? kBlank : target[s / 2]; };
  std::vector<double> alpha(states, kNegInf);
  std::vector<double> next(states, kNegInf);
  alpha[0] = lp(0, kBlank);
  if (states > 1) alpha[1] = lp(0, label(1));
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = alpha[s];
      if (s >= 1) a = log_add(a, alpha[s - 1]);
      if (s >= 2 && label(s) != kBlank && label(s) != label(s - 2)) a = log_add(a, alpha[s - 2]);
      next[s] = a == kNegInf ? kNegInf : a + lp(t, label(s));
    }
    std::swap(alpha, next);
  }
  double total = alpha[states - 1];
  if (states > 1) total = log_add(total, alpha[states - 2]);
  return -total;
}

double CtcPrefixState::log_complete_prob() const {
  if (frames() == 0) return prefix_.empty() ? 0.0 : kNegInf;
  return log_add(blank_.back(), nonblank_.back());
}

namespace {

// Probability mass that may be followed by a *new* emission of `token` after
// a prefix whose forward variables at some frame are (blank, nonblank).
// A repeat of the prefix's last token needs a blank in between.
double launch_mass(double blank, double nonblank, bool repeats_last) {
  return repeats_last ? blank : log_add(blank, nonblank);
}

double plus(double a, double b) { return a == kNegInf ? kNegInf : a + b; }

}  // namespace

CtcPrefixState ctc_prefix_init(const CtcLogProbs& lp, std::size_t frames_available) {
  if (frames_available > lp.rows()) throw Error("ctc_prefix_init: more frames than rows");
  CtcPrefixState s;
  s.last_blank_ = {kNegInf};
  s.last_nonblank_ = {kNegInf};
  s.log_prefix_ = 0.0;
  if (frames_available == 0) return s;
  return s.with_frames(lp.slice_rows(0, frames_available));
}

CtcPrefixState CtcPrefixState::with_frames(const CtcLogProbs& lp) const {
  if (lp.rows() < frames()) throw Error("CtcPrefixState: log-prob matrix lost frames");
  CtcPrefixState s = *this;
  const std::size_t len = prefix_.size();
  std::vector<double> col_b(len + 1);
  std::vector<double> col_n(len + 1);
  for (std::size_t t = frames(); t < lp.rows(); ++t) {
    const double blank = lp(t, kBlank);
    if (t == 0) {
      col_b[0] = blank;
      col_n[0] = kNegInf;
      for (std::size_t k = 1; k <= len; ++k) {
        col_b[k] = kNegInf;
        col_n[k] = k == 1 ? lp(0, prefix_[0]) : kNegInf;
      }
      s.log_prefix_ = len == 0 ? 0.0 : (len == 1 ? lp(0, prefix_[0]) : kNegInf);
    } else {
      const auto& pb = s.last_blank_;
      const auto& pn = s.last_nonblank_;
      col_b[0] = plus(pb[0], blank);
      col_n[0] = kNegInf;
      for (std::size_t k = 1; k <= len; ++k) {
        const Token tok = prefix_[k - 1];
        const bool repeat = k >= 2 && prefix_[k - 2] == tok;
        const double phi = launch_mass(pb[k - 1], pn[k - 1], repeat);
        col_n[k] = plus(log_add(pn[k], phi), lp(t, tok));
        col_b[k] = plus(log_add(pn[k], pb[k]), blank);
        if (k == len) s.log_prefix_ = log_add(s.log_prefix_, plus(phi, lp(t, tok)));
      }
    }
    s.last_blank_ = col_b;
    s.last_nonblank_ = col_n;
    s.blank_.push_back(col_b[len]);
    s.nonblank_.push_back(col_n[len]);
  }
  return s;
}

CtcPrefixState CtcPrefixState::with_token(const CtcLogProbs& lp, Token token) const {
  if (token == kBlank || token == kSosEos || token < 0 ||
      static_cast<std::size_t>(token) >= lp.cols()) {
    throw Error("CtcPrefixState: cannot extend by token " + std::to_string(token));
  }
  if (lp.rows() < frames()) throw Error("CtcPrefixState: log-prob matrix lost frames");
  const std::size_t frames_n = frames();
  const bool repeat = !prefix_.empty() && prefix_.back() == token;
  CtcPrefixState s;
  s.prefix_ = prefix_;
  s.prefix_.push_back(token);
  s.blank_.resize(frames_n);
  s.nonblank_.resize(frames_n);
  s.log_prefix_ = kNegInf;
  for (std::size_t t = 0; t < frames_n; ++t) {
    if (t == 0) {
      s.nonblank_[0] = prefix_.empty() ? lp(0, token) : kNegInf;
      s.blank_[0] = kNegInf;
      s.log_prefix_ = s.nonblank_[0];
    } else {
      const double phi = launch_mass(blank_[t - 1], nonblank_[t - 1], repeat);
      s.nonblank_[t] = plus(log_add(s.nonblank_[t - 1], phi), lp(t, token));
      s.blank_[t] = plus(log_add(s.nonblank_[t - 1], s.blank_[t - 1]), lp(t, kBlank));
      s.log_prefix_ = log_add(s.log_prefix_, plus(phi, lp(t, token)));
    }
  }
  s.last_blank_ = last_blank_;
  s.last_nonblank_ = last_nonblank_;
  s.last_blank_.push_back(frames_n ? s.blank_.back() : kNegInf);
  s.last_nonblank_.push_back(frames_n ? s.nonblank_.back() : kNegInf);
  return s;
}

std::pair<CtcPrefixState, double> ctc_prefix_extend(const CtcLogProbs& lp,
                                                    const CtcPrefixState& state, Token token) {
  const CtcPrefixState current = state.with_frames(lp);
  if (current.dead()) {
    throw Error("ctc_prefix_extend: prefix has zero probability; prune it instead of extending");
  }
  CtcPrefixState next = current.with_token(lp, token);
  const double cond = next.dead() ? kNegInf : next.log_prefix_prob() - current.log_prefix_prob();
  return {std::move(next), cond};
}

double ctc_prefix_eos(const CtcLogProbs& lp, const CtcPrefixState& state) {
  const CtcPrefixState current = state.with_frames(lp);
  if (current.dead()) throw Error("ctc_prefix_eos: prefix has zero probability");
  const double complete = current.log_complete_prob();
  return complete == kNegInf ? kNegInf : complete - current.log_prefix_prob();
}

TokenSeq ctc_collapse(std::span<const Token> path) {
  TokenSeq out;
  Token prev = kBlank;
  for (Token t : path) {
    if (t != kBlank && t != prev) out.push_back(t);
    prev = t;
  }
  return out;
}

TokenSeq ctc_greedy_collapse(const CtcLogProbs& lp) {
  TokenSeq path;
  path.reserve(lp.rows());
  for (std::size_t t = 0; t < lp.rows(); ++t) {
    auto row = lp.row(t);
    path.push_back(static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return ctc_collapse(path);
}

namespace {

template <class Accept>
double enumerate_paths(const CtcLogProbs& lp, Accept&& accept) {
  const std::size_t frames = lp.rows();
  const std::size_t vocab = lp.cols();
  if (frames > 8 || vocab > 5) {
    throw Error("brute-force CTC oracle limited to 8 frames and 5 symbols, got " +
                std::to_string(frames) + " x " + std::to_string(vocab));
  }
  std::vector<Token> path(frames, 0);
  double total = 0.0;
  while (true) {
    double logp = 0.0;
    for (std::size_t t = 0; t < frames; ++t) logp += lp(t, path[t]);
    if (accept(ctc_collapse(path))) total += std::exp(logp);
    // Odometer increment over vocab^frames.
    std::size_t t = 0;
    while (t < frames && ++path[t] == static_cast<Token>(vocab)) path[t++] = 0;
    if (t == frames) break;
  }
  return total;
}

}  // namespace

double brute_force_prefix_prob(const CtcLogProbs& lp, const TokenSeq& prefix) {
  return enumerate_paths(lp, [&](const TokenSeq& c) {
    return c.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), c.begin());
  });
}

double brute_force_complete_prob(const CtcLogProbs& lp, const TokenSeq& target) {
  return enumerate_paths(lp, [&](const TokenSeq& c) { return c == target; });
}

}  // namespace bst
