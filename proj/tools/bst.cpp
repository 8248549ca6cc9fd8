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

// bst: command-line front end for the blockwise streaming engine.

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "bst/harness.hpp"
#include "json.hpp"

namespace {

using bst::fs::path;

struct Options {
  bst::RunConfig run;
  std::string task = "st";
  double ctc_weight = -1.0;  // < 0: task default
  int block_size = 40;
  int hop = 0;               // 0: 20% of the block
  int look_ahead = 0;        // 0: 20% of the block
  std::string clock = "wall";
  std::string config_file;
  // Subcommand-specific.
  std::string out;
  std::string log;
  int wait_events = 0;
  std::string hyp;
  std::string ref;
};

// Keys of the JSON config file are the long flag names without dashes.
void apply_json(const nlohmann::json& j, Options& o) {
  if (!j.is_object()) throw bst::Error("config file must hold a JSON object");
  bst::RunConfig& r = o.run;
  const std::map<std::string, std::function<void(const nlohmann::json&)>> setters = {
      {"features", [&](const auto& v) { r.features = v.template get<std::string>(); }},
      {"manifest", [&](const auto& v) { r.manifest = v.template get<std::string>(); }},
      {"vocab", [&](const auto& v) { r.vocab = v.template get<std::string>(); }},
      {"weights", [&](const auto& v) { r.weights = v.template get<std::string>(); }},
      {"output-dir", [&](const auto& v) { r.output_dir = v.template get<std::string>(); }},
      {"chunk-ms", [&](const auto& v) { r.chunk_ms = v.template get<int>(); }},
      {"seed", [&](const auto& v) { r.seed = v.template get<std::uint32_t>(); }},
      {"task", [&](const auto& v) { o.task = v.template get<std::string>(); }},
      {"beam", [&](const auto& v) { r.decode.beam = v.template get<int>(); }},
      {"ctc-weight", [&](const auto& v) { o.ctc_weight = v.template get<double>(); }},
      {"pre-beam", [&](const auto& v) { r.decode.pre_beam = v.template get<int>(); }},
      {"max-length", [&](const auto& v) { r.decode.max_length = v.template get<int>(); }},
      {"max-length-ratio",
       [&](const auto& v) { r.decode.max_length_ratio = v.template get<double>(); }},
      {"repetition-window",
       [&](const auto& v) { r.decode.repetition_window = v.template get<int>(); }},
      {"block-size", [&](const auto& v) { o.block_size = v.template get<int>(); }},
      {"hop", [&](const auto& v) { o.hop = v.template get<int>(); }},
      {"look-ahead", [&](const auto& v) { o.look_ahead = v.template get<int>(); }},
      {"lambda", [&](const auto& v) { r.objective.lambda = v.template get<double>(); }},
      {"beta", [&](const auto& v) { r.objective.beta = v.template get<double>(); }},
      {"gamma", [&](const auto& v) { r.objective.gamma = v.template get<double>(); }},
      {"label-smoothing",
       [&](const auto& v) { r.objective.label_smoothing = v.template get<double>(); }},
      {"d-model", [&](const auto& v) { r.model.d_model = v.template get<int>(); }},
      {"n-heads", [&](const auto& v) { r.model.n_heads = v.template get<int>(); }},
      {"ff-dim", [&](const auto& v) { r.model.ff_dim = v.template get<int>(); }},
      {"enc-layers", [&](const auto& v) { r.model.enc_layers = v.template get<int>(); }},
      {"dec-layers", [&](const auto& v) { r.model.dec_layers = v.template get<int>(); }},
      {"intermediate-layer",
       [&](const auto& v) { r.model.intermediate_layer = v.template get<int>(); }},
      {"feature-dim", [&](const auto& v) { r.model.feature_dim = v.template get<int>(); }},
      {"subsample-factor",
       [&](const auto& v) { r.model.subsample_factor = v.template get<int>(); }},
      {"frame-ms", [&](const auto& v) { r.model.frame_ms = v.template get<int>(); }},
      {"clock", [&](const auto& v) { o.clock = v.template get<std::string>(); }},
      {"sim-step-ms", [&](const auto& v) { r.sim_step_ms = v.template get<double>(); }},
      {"jobs", [&](const auto& v) { r.jobs = v.template get<int>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw bst::Error("config file: unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw bst::Error("config file: key '" + key + "': " + e.what());
    }
  }
}

// The config file is read before flag parsing so that flags override it.
void load_config_from_argv(int argc, char** argv, Options& o) {
  std::string file;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) file = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) file = a.substr(9);
  }
  if (file.empty()) return;
  std::ifstream in(file);
  if (!in) throw bst::Error("cannot open config file: " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw bst::Error("config file " + file + ": " + e.what());
  }
  apply_json(j, o);
}

void finalize(Options& o) {
  bst::RunConfig& r = o.run;
  const bst::Task task = bst::parse_task(o.task);
  const bst::DecodeConfig defaults = bst::DecodeConfig::for_task(task);
  r.decode.task = task;
  r.decode.ctc_weight = o.ctc_weight >= 0.0 ? o.ctc_weight : defaults.ctc_weight;
  r.decode.blocks = bst::BlockSizes::from_block_size(o.block_size);
  if (o.hop > 0) r.decode.blocks.hop = o.hop;
  if (o.look_ahead > 0) r.decode.blocks.look_ahead = o.look_ahead;
  r.clock = bst::parse_clock(o.clock);
}

void add_io_options(CLI::App* app, Options& o) {
  auto& r = o.run;
  app->add_option("--features", r.features, "Feature file (\"T D\" header, T rows)");
  app->add_option("--manifest", r.manifest, "Utterance manifest (TSV)");
  app->add_option("--vocab", r.vocab, "Vocabulary file, one token per line");
  app->add_option("--weights", r.weights, "BSTW1 weight file; seeded init when absent");
  app->add_option("--output-dir", r.output_dir, "Directory for outputs");
  app->add_option("--config", o.config_file, "JSON config; flags override its values");
}

void add_model_options(CLI::App* app, Options& o) {
  auto& m = o.run.model;
  app->add_option("--seed", o.run.seed, "Weight init seed");
  app->add_option("--d-model", m.d_model);
  app->add_option("--n-heads", m.n_heads);
  app->add_option("--ff-dim", m.ff_dim);
  app->add_option("--enc-layers", m.enc_layers);
  app->add_option("--dec-layers", m.dec_layers);
  app->add_option("--intermediate-layer", m.intermediate_layer, "1-based encoder tap");
  app->add_option("--feature-dim", m.feature_dim);
  app->add_option("--subsample-factor", m.subsample_factor);
  app->add_option("--frame-ms", m.frame_ms, "Duration of one feature frame");
}

void add_decode_options(CLI::App* app, Options& o) {
  auto& d = o.run.decode;
  app->add_option("--task", o.task, "slu or st")->check(CLI::IsMember({"slu", "st"}));
  app->add_option("--beam", d.beam);
  app->add_option("--ctc-weight", o.ctc_weight, "CTC weight mu (default 0.5 slu, 0.3 st)");
  app->add_option("--pre-beam", d.pre_beam, "Attention pre-beam per hypothesis (0: 2*beam)");
  app->add_option("--max-length", d.max_length, "Output length cap (0: ratio rule)");
  app->add_option("--max-length-ratio", d.max_length_ratio);
  app->add_option("--repetition-window", d.repetition_window);
  app->add_option("--block-size", o.block_size, "Frames per block after subsampling");
  app->add_option("--hop", o.hop, "Central frames per block (0: 20% of the block)");
  app->add_option("--look-ahead", o.look_ahead, "Look-ahead frames (0: 20% of the block)");
  app->add_option("--chunk-ms", o.run.chunk_ms, "Simulated chunk duration");
  app->add_option("--clock", o.clock, "wall or simulated")
      ->check(CLI::IsMember({"wall", "simulated"}));
  app->add_option("--sim-step-ms", o.run.sim_step_ms,
                  "Simulated cost of one decoder step");
  app->add_option("--jobs", o.run.jobs, "Utterances decoded in parallel");
}

void add_objective_options(CLI::App* app, Options& o) {
  auto& c = o.run.objective;
  app->add_option("--lambda", c.lambda, "SLU CTC weight");
  app->add_option("--beta", c.beta, "ST CTC weight");
  app->add_option("--gamma", c.gamma, "ST auxiliary CTC weight");
  app->add_option("--label-smoothing", c.label_smoothing);
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  try {
    load_config_from_argv(argc, argv, o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Blockwise streaming transformer: decoding, objectives and latency"};
  app.require_subcommand(1);

  auto* stream = app.add_subcommand("run-stream", "Blockwise streaming decode with latency log");
  auto* offline = app.add_subcommand("run-offline", "Full-context joint beam search");
  auto* objective = app.add_subcommand("eval-objective", "Per-utterance loss terms");
  for (auto* sub : {stream, offline, objective}) {
    add_io_options(sub, o);
    add_model_options(sub, o);
    add_decode_options(sub, o);
  }
  add_objective_options(objective, o);

  auto* latency = app.add_subcommand("eval-latency", "AL and EP of an emission log");
  latency->add_option("--log", o.log, "Emission log TSV")->required();
  latency->add_option("--wait-events", o.wait_events, "Wait events to report");

  auto* intent = app.add_subcommand("intent-eval", "Intent accuracy from first tokens");
  intent->add_option("--hyp", o.hyp, "Hypothesis file")->required();
  intent->add_option("--ref", o.ref, "Reference file")->required();

  auto* exporter = app.add_subcommand("export-weights", "Write seeded weights as BSTW1");
  add_io_options(exporter, o);
  add_model_options(exporter, o);
  exporter->add_option("--out", o.out, "Output weight file")->required();

  auto* importer = app.add_subcommand("import-weights", "Validate an external BSTW1 file");
  importer->add_option("--weights", o.run.weights, "Weight file")->required();
  importer->add_option("--vocab", o.run.vocab, "Vocabulary to check against");
  importer->add_option("--out", o.out, "Canonical copy to write");

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(o);
    if (stream->parsed()) return bst::cmd_run_stream(o.run);
    if (offline->parsed()) return bst::cmd_run_offline(o.run);
    if (objective->parsed()) return bst::cmd_eval_objective(o.run);
    if (latency->parsed()) return bst::cmd_eval_latency(o.log, o.wait_events, std::cout);
    if (intent->parsed()) return bst::cmd_intent_eval(o.hyp, o.ref, std::cout);
    if (exporter->parsed()) return bst::cmd_export_weights(o.run, o.out);
    if (importer->parsed()) return bst::cmd_import_weights(o.run.weights, o.run.vocab, o.out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
