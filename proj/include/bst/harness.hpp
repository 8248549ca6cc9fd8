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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "bst/beam_search.hpp"
#include "bst/config.hpp"
#include "bst/latency.hpp"
#include "bst/objectives.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"

namespace bst {

namespace fs = std::filesystem;

// Feature file: first line "T D", then T lines of D decimal numbers.
// Errors name the source and the 1-based line.
Matrix parse_features(std::istream& in, const std::string& source = "<stream>");
Matrix read_features(const fs::path& path);
void write_features(const Matrix& features, std::ostream& out);
void save_features(const Matrix& features, const fs::path& path);

// Consecutive slices of chunk_ms / frame_ms rows; the last may be shorter.
std::vector<Matrix> chunk_stream(const Matrix& features, int chunk_ms, int frame_ms);

// TSV: utterance id, feature path, main target, aux target[, intent].
// Targets are space-separated token strings. Relative feature paths are
// resolved against the manifest's directory.
struct ManifestEntry {
  std::string id;
  fs::path features;
  std::vector<std::string> main;
  std::vector<std::string> aux;
  std::string intent;  // empty if the column is absent
};

std::vector<ManifestEntry> read_manifest(const fs::path& path);

// SLU: an intent column is prepended to the main target. Without one the
// main column is taken as already intent-prepended. ST ignores the column.
SupervisionPair make_supervision(const ManifestEntry& entry, const Vocabulary& vocab, Task task);

enum class ClockKind { kWall, kSimulated };

ClockKind parse_clock(const std::string& name);
std::unique_ptr<Clock> make_clock(ClockKind kind, double sim_step_ms);

struct RunConfig {
  fs::path features;  // a single feature file, or
  fs::path manifest;  // a manifest of utterances
  fs::path vocab;
  fs::path weights;   // optional; otherwise weights come from (model, seed)
  fs::path output_dir = ".";
  int chunk_ms = 640;
  std::uint32_t seed = 0;
  ModelConfig model;
  DecodeConfig decode;
  ObjectiveConfig objective;
  ClockKind clock = ClockKind::kWall;
  double sim_step_ms = 1.0;
  int jobs = 1;  // utterances decoded concurrently

  void validate() const;
};

// Loads the vocabulary and either imports the weights or initializes them
// from (config.model with the vocabulary's size, config.seed).
struct Model {
  Vocabulary vocab;
  ModelParams params;
};
Model load_model(const RunConfig& config);

struct Utterance {
  std::string id;
  Matrix features;
  ManifestEntry entry;  // empty targets when read from a bare feature file
};
std::vector<Utterance> load_utterances(const RunConfig& config);

// Streams one utterance chunk by chunk. The clock is told each chunk's
// arrival time, min(k * chunk_ms, duration) for chunk k counted from 1.
DecodeResult run_stream(const Model& model, const Matrix& features, const RunConfig& config,
                        Clock& clock);

// Writes content to path through a temporary file and a rename.
void write_file_atomic(const fs::path& path, const std::string& content);

// Subcommands. Each returns the process exit code; errors propagate as
// exceptions and are reported by the caller.
//   run-stream:     <out>/emissions/<id>.tsv, <out>/hyp.txt, <out>/report.json
//   run-offline:    <out>/hyp.txt, <out>/report.json
//   eval-objective: <out>/objective.tsv
int cmd_run_stream(const RunConfig& config);
int cmd_run_offline(const RunConfig& config);
int cmd_eval_objective(const RunConfig& config);
// Prints a latency report for an existing emission log as JSON.
int cmd_eval_latency(const fs::path& log, int wait_events, std::ostream& out);
// First token of each hypothesis line against the first token of each
// reference line. Prints the accuracy in percent.
double intent_accuracy(const fs::path& hypotheses, const fs::path& references);
int cmd_intent_eval(const fs::path& hypotheses, const fs::path& references, std::ostream& out);
// Writes seeded weights (and nothing else) for the configured model.
int cmd_export_weights(const RunConfig& config, const fs::path& out);
// Validates an external weight file against the vocabulary and writes a
// canonical copy to `out` when given.
int cmd_import_weights(const fs::path& weights, const fs::path& vocab, const fs::path& out,
                       std::ostream& log);

}  // namespace bst
