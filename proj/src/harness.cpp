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

#include "bst/harness.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <thread>
#include <iostream>
#include <sstream>

#include "bst/encoder.hpp"
#include "json.hpp"

namespace bst {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(std::string("cannot open ") + what + ": " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path, const char* what) {
  std::istringstream in(read_text(path, what));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Matrix parse_features(std::istream& in, const std::string& source) {
  auto fail = [&](int line, const std::string& msg) {
    return Error(source + ":" + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing \"T D\" header");
  const auto header = words(line);
  long long rows = 0;
  long long cols = 0;
  try {
    if (header.size() != 2) throw Error("");
    std::size_t used = 0;
    rows = std::stoll(header[0], &used);
    if (used != header[0].size()) throw Error("");
    cols = std::stoll(header[1], &used);
    if (used != header[1].size()) throw Error("");
  } catch (const std::exception&) {
    throw fail(1, "header must be \"T D\" with two integers, got \"" + line + "\"");
  }
  if (rows <= 0) throw fail(1, "feature file has no frames");
  if (cols <= 0) throw fail(1, "feature dimension must be positive");
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (long long r = 0; r < rows; ++r) {
    const int line_no = static_cast<int>(r) + 2;
    if (!std::getline(in, line)) {
      throw fail(line_no, "expected " + std::to_string(rows) + " frames, file ends early");
    }
    const auto fields = words(line);
    if (fields.size() != static_cast<std::size_t>(cols)) {
      throw fail(line_no, "expected " + std::to_string(cols) + " values, got " +
                              std::to_string(fields.size()));
    }
    for (long long c = 0; c < cols; ++c) {
      try {
        m(r, c) = parse_double(fields[c]);
      } catch (const Error& e) {
        throw fail(line_no, e.what());
      }
    }
  }
  while (std::getline(in, line)) {
    if (!words(line).empty()) throw fail(static_cast<int>(rows) + 2, "unexpected extra line");
  }
  return m;
}

Matrix read_features(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file: " + path.string());
  return parse_features(in, path.string());
}

void write_features(const Matrix& features, std::ostream& out) {
  out << features.rows() << ' ' << features.cols() << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(features(r, c));
    }
    out << '\n';
  }
}

void save_features(const Matrix& features, const fs::path& path) {
  std::ostringstream out;
  write_features(features, out);
  write_file_atomic(path, out.str());
}

std::vector<Matrix> chunk_stream(const Matrix& features, int chunk_ms, int frame_ms) {
  if (frame_ms <= 0) throw Error("frame_ms must be positive");
  if (chunk_ms <= 0 || chunk_ms % frame_ms != 0) {
    throw Error("chunk_ms must be a positive multiple of frame_ms (" + std::to_string(frame_ms) +
                ")");
  }
  const auto per_chunk = static_cast<std::size_t>(chunk_ms / frame_ms);
  std::vector<Matrix> chunks;
  for (std::size_t start = 0; start < features.rows(); start += per_chunk) {
    chunks.push_back(features.slice_rows(start, std::min(features.rows(), start + per_chunk)));
  }
  return chunks;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto lines = read_lines(path, "manifest");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 4 && cols.size() != 5) {
      throw Error(path.string() + ":" + std::to_string(i + 1) + ": expected 4 or 5 columns, got " +
                  std::to_string(cols.size()));
    }
    ManifestEntry e;
    e.id = cols[0];
    if (e.id.empty()) throw Error(path.string() + ":" + std::to_string(i + 1) + ": empty id");
    e.features = cols[1];
    if (e.features.is_relative()) e.features = path.parent_path() / e.features;
    e.main = words(cols[2]);
    e.aux = words(cols[3]);
    if (cols.size() == 5) e.intent = cols[4];
    entries.push_back(std::move(e));
  }
  return entries;
}

SupervisionPair make_supervision(const ManifestEntry& entry, const Vocabulary& vocab, Task task) {
  SupervisionPair pair;
  for (const auto& w : entry.main) pair.main.push_back(vocab.index(w));
  for (const auto& w : entry.aux) pair.aux.push_back(vocab.index(w));
  if (task == Task::kSlu && !entry.intent.empty()) {
    pair.main = build_slu_target(vocab, entry.intent, pair.main);
  }
  return pair;
}

ClockKind parse_clock(const std::string& name) {
  if (name == "wall") return ClockKind::kWall;
  if (name == "simulated") return ClockKind::kSimulated;
  throw Error("unknown clock '" + name + "' (expected wall or simulated)");
}

std::unique_ptr<Clock> make_clock(ClockKind kind, double sim_step_ms) {
  if (kind == ClockKind::kSimulated) return std::make_unique<SimulatedClock>(sim_step_ms);
  return std::make_unique<SteadyClock>();
}

void RunConfig::validate() const {
  if (chunk_ms <= 0 || chunk_ms % model.frame_ms != 0) {
    throw Error("chunk_ms must be a positive multiple of frame_ms (" +
                std::to_string(model.frame_ms) + ")");
  }
  if (!(sim_step_ms >= 0.0)) throw Error("sim_step_ms must be non-negative");
  if (jobs < 1) throw Error("jobs must be at least 1");
  decode.validate();
  objective.validate();
}

Model load_model(const RunConfig& config) {
  if (config.vocab.empty()) throw Error("no vocabulary given");
  Vocabulary vocab = load_vocab(config.vocab);
  ModelParams params;
  if (!config.weights.empty()) {
    params = load_weights(config.weights);
  } else {
    ModelConfig mc = config.model;
    mc.vocab_size = static_cast<int>(vocab.size());
    params = init_params(mc, config.seed);
  }
  if (params.config.vocab_size != static_cast<int>(vocab.size())) {
    throw Error("weights expect " + std::to_string(params.config.vocab_size) +
                " tokens but " + config.vocab.string() + " has " + std::to_string(vocab.size()));
  }
  return {std::move(vocab), std::move(params)};
}

std::vector<Utterance> load_utterances(const RunConfig& config) {
  std::vector<Utterance> out;
  if (!config.manifest.empty()) {
    for (auto& e : read_manifest(config.manifest)) {
      Utterance u;
      u.id = e.id;
      u.features = read_features(e.features);
      u.entry = std::move(e);
      out.push_back(std::move(u));
    }
    if (out.empty()) throw Error("manifest has no utterances: " + config.manifest.string());
  } else if (!config.features.empty()) {
    Utterance u;
    u.id = config.features.stem().string();
    u.features = read_features(config.features);
    u.entry.id = u.id;
    u.entry.features = config.features;
    out.push_back(std::move(u));
  } else {
    throw Error("no input: give --features or --manifest");
  }
  return out;
}

DecodeResult run_stream(const Model& model, const Matrix& features, const RunConfig& config,
                        Clock& clock) {
  const int frame_ms = model.params.config.frame_ms;
  const auto chunks = chunk_stream(features, config.chunk_ms, frame_ms);
  const double duration = static_cast<double>(features.rows()) * frame_ms;
  BlockwiseDecoder decoder(model.params, config.decode, clock, &model.vocab);
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    clock.wait_until(std::min(static_cast<double>(k + 1) * config.chunk_ms, duration));
    decoder.accept_chunk(chunks[k]);
  }
  return decoder.finish();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::string hypothesis_text(const Vocabulary& vocab, const TokenSeq& tokens) {
  return vocab.decode(tokens);
}

json decode_config_json(const RunConfig& c) {
  return json{{"task", task_name(c.decode.task)},
              {"beam", c.decode.beam},
              {"ctc_weight", c.decode.ctc_weight},
              {"pre_beam", c.decode.effective_pre_beam()},
              {"max_length", c.decode.max_length},
              {"max_length_ratio", c.decode.max_length_ratio},
              {"repetition_window", c.decode.repetition_window},
              {"block_size", c.decode.blocks.block_size},
              {"hop", c.decode.blocks.hop},
              {"look_ahead", c.decode.blocks.look_ahead},
              {"chunk_ms", c.chunk_ms},
              {"seed", c.seed},
              {"clock", c.clock == ClockKind::kWall ? "wall" : "simulated"}};
}

// Runs f(0..n-1) on up to `jobs` threads. The failure with the lowest index
// is rethrown, so errors do not depend on scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

int cmd_run_stream(const RunConfig& config) {
  config.validate();
  const Model model = load_model(config);
  const auto utterances = load_utterances(config);
  json report;
  report["config"] = decode_config_json(config);
  report["utterances"] = json::array();
  std::string hyps;
  std::vector<double> al;
  std::vector<double> ep;
  std::vector<DecodeResult> results(utterances.size());
  parallel_for(utterances.size(), config.jobs, [&](std::size_t i) {
    const Utterance& u = utterances[i];
    auto clock = make_clock(config.clock, config.sim_step_ms);
    results[i] = run_stream(model, u.features, config, *clock);
    std::ostringstream log;
    write_emission_log(results[i].log, log);
    write_file_atomic(config.output_dir / "emissions" / (u.id + ".tsv"), log.str());
  });
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    const DecodeResult& r = results[i];
    const LatencyReport lat = make_latency_report(r.log, static_cast<int>(r.waits.size()));
    al.push_back(lat.average_lagging_ms);
    ep.push_back(lat.endpoint_ms);
    const std::string text = hypothesis_text(model.vocab, r.tokens);
    hyps += text + "\n";
    report["utterances"].push_back(json{{"id", u.id},
                                        {"hypothesis", text},
                                        {"tokens", lat.tokens},
                                        {"blocks", r.blocks},
                                        {"average_lagging_ms", lat.average_lagging_ms},
                                        {"endpoint_ms", lat.endpoint_ms},
                                        {"endpoint_clamped", lat.endpoint_clamped},
                                        {"wait_events", lat.wait_events},
                                        {"tokens_before_source_end", lat.tokens_before_source_end},
                                        {"score", r.nbest.front().score}});
  }
  report["mean"] = json{{"average_lagging_ms", mean(al)}, {"endpoint_ms", mean(ep)}};
  write_file_atomic(config.output_dir / "hyp.txt", hyps);
  write_file_atomic(config.output_dir / "report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_run_offline(const RunConfig& config) {
  config.validate();
  const Model model = load_model(config);
  const auto utterances = load_utterances(config);
  json report;
  report["config"] = decode_config_json(config);
  report["utterances"] = json::array();
  std::string hyps;
  std::vector<DecodeResult> results(utterances.size());
  parallel_for(utterances.size(), config.jobs, [&](std::size_t i) {
    auto clock = make_clock(config.clock, config.sim_step_ms);
    results[i] = decode_offline(model.params, utterances[i].features, config.decode, *clock,
                                &model.vocab);
  });
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    const DecodeResult& r = results[i];
    const std::string text = hypothesis_text(model.vocab, r.tokens);
    hyps += text + "\n";
    json nbest = json::array();
    for (const Hypothesis& h : r.nbest) {
      nbest.push_back(json{{"hypothesis", hypothesis_text(model.vocab, h.tokens)},
                           {"score", h.score},
                           {"score_att", h.score_att},
                           {"score_ctc", h.score_ctc}});
    }
    report["utterances"].push_back(
        json{{"id", u.id}, {"hypothesis", text}, {"tokens", r.tokens.size()}, {"nbest", nbest}});
  }
  write_file_atomic(config.output_dir / "hyp.txt", hyps);
  write_file_atomic(config.output_dir / "report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_eval_objective(const RunConfig& config) {
  config.validate();
  if (config.manifest.empty()) throw Error("eval-objective needs --manifest");
  const Model model = load_model(config);
  const auto utterances = load_utterances(config);
  std::string out = "id\tce\tctc\tctc_aux\ttotal\tinfeasible\n";
  std::vector<double> ce, ctc, aux, total;
  for (const Utterance& u : utterances) {
    const SupervisionPair pair = make_supervision(u.entry, model.vocab, config.decode.task);
    const ObjectiveTerms t =
        evaluate_objective(model.params, u.features, pair, config.objective, config.decode.task);
    if (t.infeasible) {
      std::cerr << "warning: " << u.id << ": a CTC target does not fit in the encoded frames\n";
    }
    out += u.id + "\t" + format_double(t.ce) + "\t" + format_double(t.ctc) + "\t" +
           format_double(t.ctc_aux) + "\t" + format_double(t.total) + "\t" +
           (t.infeasible ? "1" : "0") + "\n";
    ce.push_back(t.ce);
    ctc.push_back(t.ctc);
    aux.push_back(t.ctc_aux);
    total.push_back(t.total);
  }
  out += "mean\t" + format_double(mean(ce)) + "\t" + format_double(mean(ctc)) + "\t" +
         format_double(mean(aux)) + "\t" + format_double(mean(total)) + "\t-\n";
  write_file_atomic(config.output_dir / "objective.tsv", out);
  return 0;
}

int cmd_eval_latency(const fs::path& log_path, int wait_events, std::ostream& out) {
  const EmissionLog log = load_emission_log(log_path);
  const LatencyReport r = make_latency_report(log, wait_events);
  const json j{{"average_lagging_ms", r.average_lagging_ms},
               {"endpoint_ms", r.endpoint_ms},
               {"endpoint_clamped", r.endpoint_clamped},
               {"wait_events", r.wait_events},
               {"tokens", r.tokens},
               {"tokens_before_source_end", r.tokens_before_source_end}};
  out << j.dump(2) << '\n';
  return 0;
}

double intent_accuracy(const fs::path& hypotheses, const fs::path& references) {
  auto hyp = read_lines(hypotheses, "hypothesis file");
  auto ref = read_lines(references, "reference file");
  if (hyp.size() != ref.size()) {
    throw Error("intent-eval: " + std::to_string(hyp.size()) + " hypothesis lines but " +
                std::to_string(ref.size()) + " reference lines");
  }
  if (hyp.empty()) throw Error("intent-eval: no lines to compare");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    const auto h = words(hyp[i]);
    const auto r = words(ref[i]);
    const std::string hi = h.empty() ? "" : h.front();
    const std::string ri = r.empty() ? "" : r.front();
    if (hi == ri) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(hyp.size());
}

int cmd_intent_eval(const fs::path& hypotheses, const fs::path& references, std::ostream& out) {
  out << format_double(intent_accuracy(hypotheses, references)) << '\n';
  return 0;
}

int cmd_export_weights(const RunConfig& config, const fs::path& out) {
  const Model model = load_model(config);
  save_weights(model.params, out);
  return 0;
}

int cmd_import_weights(const fs::path& weights, const fs::path& vocab_path, const fs::path& out,
                       std::ostream& log) {
  const ModelParams params = load_weights(weights);
  audit_shapes(params);
  if (!vocab_path.empty()) {
    const Vocabulary vocab = load_vocab(vocab_path);
    if (params.config.vocab_size != static_cast<int>(vocab.size())) {
      throw Error(weights.string() + " expects " + std::to_string(params.config.vocab_size) +
                  " tokens but " + vocab_path.string() + " has " + std::to_string(vocab.size()));
    }
  }
  const ModelConfig& c = params.config;
  log << "d_model " << c.d_model << ", heads " << c.n_heads << ", ff " << c.ff_dim
      << ", encoder layers " << c.enc_layers << ", decoder layers " << c.dec_layers << ", tap "
      << c.intermediate_layer << ", features " << c.feature_dim << ", subsample "
      << c.subsample_factor << ", vocab " << c.vocab_size << ", frame " << c.frame_ms << " ms, "
      << parameter_count(c) << " parameters\n";
  if (!out.empty()) save_weights(params, out);
  return 0;
}

}  // namespace bst
