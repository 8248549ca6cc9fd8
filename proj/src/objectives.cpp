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

#include "bst/objectives.hpp"

#include <cmath>

#include "bst/ctc.hpp"
#include "bst/decoder.hpp"
#include "bst/encoder.hpp"

namespace bst {

Task parse_task(const std::string& name) {
  if (name == "slu") return Task::kSlu;
  if (name == "st") return Task::kSt;
  throw Error("unknown task '" + name + "' (expected slu or st)");
}

std::string task_name(Task task) { return task == Task::kSlu ? "slu" : "st"; }

void ObjectiveConfig::validate() const {
  auto unit = [](double w, const char* name) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
  };
  unit(lambda, "lambda");
  unit(beta, "beta");
  unit(gamma, "gamma");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw Error("label smoothing must lie in [0, 1)");
  }
}

TokenSeq build_slu_target(const Vocabulary& vocab, const std::string& intent,
                          const TokenSeq& transcript) {
  if (!vocab.contains(intent)) throw Error("intent '" + intent + "' is not in the vocabulary");
  TokenSeq out = {vocab.index(intent)};
  out.insert(out.end(), transcript.begin(), transcript.end());
  return out;
}

double cross_entropy_loss(const ModelParams& params, const Matrix& encoded,
                          const TokenSeq& target, double label_smoothing) {
  if (target.empty() || target.back() != kSosEos) {
    throw Error("cross_entropy_loss: target must end with eos");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing <= 1.0)) {
    throw Error("cross_entropy_loss: label smoothing must lie in [0, 1]");
  }
  const Matrix lp = teacher_forced_log_probs(params, encoded, target);
  const double vocab = static_cast<double>(lp.cols());
  double total = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    double uniform = 0.0;
    for (double v : lp.row(j)) uniform += v;
    double position = 0.0;
    if (label_smoothing < 1.0) position -= (1.0 - label_smoothing) * lp(j, target[j]);
    if (label_smoothing > 0.0) position -= label_smoothing * uniform / vocab;
    total += position;
  }
  return total / static_cast<double>(target.size());
}

double slu_loss(double ctc, double ctc_aux, double ce, double lambda) {
  return lambda * (ctc + ctc_aux) + (1.0 - lambda) * ce;
}

double st_loss(double ce, double ctc, double ctc_aux, double beta, double gamma) {
  return (1.0 - gamma) * ((1.0 - beta) * ce + beta * ctc) + gamma * ctc_aux;
}

namespace {

double weighted(double weight, double term) { return weight == 0.0 ? 0.0 : weight * term; }

}  // namespace

ObjectiveTerms evaluate_objective(const ModelParams& params, const Matrix& features,
                                  const SupervisionPair& supervision,
                                  const ObjectiveConfig& config, Task task) {
  config.validate();
  for (Token t : supervision.main) {
    if (t == kBlank || t == kSosEos) throw Error("main target contains a reserved token");
  }
  const EncoderOutput enc = encode_full(params, subsample(params, features));

  TokenSeq decoder_target = supervision.main;
  decoder_target.push_back(kSosEos);

  ObjectiveTerms terms;
  terms.ce = cross_entropy_loss(params, enc.top, decoder_target, config.label_smoothing);
  terms.ctc = ctc_loss(ctc_head(params, enc.top, CtcHead::kMain), supervision.main);
  terms.ctc_aux = ctc_loss(ctc_head(params, enc.tap, CtcHead::kAux), supervision.aux);

  if (task == Task::kSlu) {
    terms.ctc_weight = config.lambda;
    terms.ctc_aux_weight = config.lambda;
    terms.ce_weight = 1.0 - config.lambda;
  } else {
    terms.ce_weight = (1.0 - config.gamma) * (1.0 - config.beta);
    terms.ctc_weight = (1.0 - config.gamma) * config.beta;
    terms.ctc_aux_weight = config.gamma;
  }
  const bool finite = std::isfinite(terms.ctc) && std::isfinite(terms.ctc_aux);
  if (finite) {
    // The closed forms are used directly so the endpoint identities are exact.
    terms.total = task == Task::kSlu
                      ? slu_loss(terms.ctc, terms.ctc_aux, terms.ce, config.lambda)
                      : st_loss(terms.ce, terms.ctc, terms.ctc_aux, config.beta, config.gamma);
  } else {
    terms.total = weighted(terms.ce_weight, terms.ce) + weighted(terms.ctc_weight, terms.ctc) +
                  weighted(terms.ctc_aux_weight, terms.ctc_aux);
  }
  terms.infeasible = !finite;
  return terms;
}

}  // namespace bst
