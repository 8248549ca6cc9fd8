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

#include <string>

#include "bst/core.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"

namespace bst {

enum class Task { kSlu, kSt };

Task parse_task(const std::string& name);
std::string task_name(Task task);

struct ObjectiveConfig {
  double lambda = 0.3;           // SLU: weight of the two CTC losses
  double beta = 0.3;             // ST: CTC weight inside the translation loss
  double gamma = 0.3;            // ST: weight of the auxiliary (source-language) CTC loss
  double label_smoothing = 0.1;

  void validate() const;
};

// Targets for one utterance, without sos/eos.
//   main: decoder and main CTC head (SLU: intent + transcript, ST: translation)
//   aux:  intermediate-layer CTC head (SLU: transcript, ST: source transcript)
struct SupervisionPair {
  TokenSeq main;
  TokenSeq aux;
};

TokenSeq build_slu_target(const Vocabulary& vocab, const std::string& intent,
                          const TokenSeq& transcript);

// Label-smoothed teacher-forced cross entropy, averaged over the positions of
// `target` (which ends with eos). The smoothed distribution puts 1 - eps on
// the gold token plus eps spread uniformly over the whole vocabulary.
double cross_entropy_loss(const ModelParams& params, const Matrix& encoded,
                          const TokenSeq& target, double label_smoothing);

// lambda * (ctc + ctc_aux) + (1 - lambda) * ce
double slu_loss(double ctc, double ctc_aux, double ce, double lambda);
// (1 - gamma) * ((1 - beta) * ce + beta * ctc) + gamma * ctc_aux
double st_loss(double ce, double ctc, double ctc_aux, double beta, double gamma);

struct ObjectiveTerms {
  double ce = 0.0;
  double ctc = 0.0;      // summed over the utterance
  double ctc_aux = 0.0;  // summed over the utterance
  double total = 0.0;
  // Effective weight of each term in `total`; total == sum(weight * term).
  double ce_weight = 0.0;
  double ctc_weight = 0.0;
  double ctc_aux_weight = 0.0;
  bool infeasible = false;  // a CTC target cannot be emitted in the available frames
};

// Runs the full-context encoder on raw features and evaluates every term.
// Terms with zero weight never poison the total, even when infinite.
ObjectiveTerms evaluate_objective(const ModelParams& params, const Matrix& features,
                                  const SupervisionPair& supervision,
                                  const ObjectiveConfig& config, Task task);

}  // namespace bst
