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

// End-to-end runs of the bst binary.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "bst/harness.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace bst;
using bst::testing::random_matrix;
using bst::testing::read_text;
using bst::testing::scratch_dir;
using bst::testing::tiny_vocab;
using bst::testing::write_text;

namespace {

const std::string kTinyModel =
    " --d-model 8 --n-heads 2 --ff-dim 16 --enc-layers 3 --dec-layers 2"
    " --intermediate-layer 2 --feature-dim 6 --seed 7";
const std::string kDecode = " --block-size 8 --hop 2 --look-ahead 2 --chunk-ms 80 --beam 3";

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run bst_cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd =
      std::string(BST_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_text(out);
  r.err = read_text(err);
  return r;
}

// Vocabulary, three feature files and a manifest.
fs::path make_inputs(const std::string& name) {
  const fs::path dir = scratch_dir(name);
  save_vocab(tiny_vocab(7), dir / "vocab.txt");
  std::mt19937 rng(11);
  std::string manifest;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "utt" + std::to_string(i);
    save_features(random_matrix(rng, 90 + 40 * i, 6), dir / (id + ".feat"));
    manifest += id + "\t" + id + ".feat\ta b c\tb c\td\n";
  }
  write_text(dir / "manifest.tsv", manifest);
  return dir;
}

std::string model_args(const fs::path& dir) {
  return "--vocab " + (dir / "vocab.txt").string() + kTinyModel;
}

std::string common(const fs::path& dir) { return model_args(dir) + kDecode; }

}  // namespace

TEST_CASE("run-stream is deterministic under the simulated clock") {
  const fs::path dir = make_inputs("cli_det");
  const std::string base = "run-stream " + common(dir) + " --clock simulated --manifest " +
                           (dir / "manifest.tsv").string();
  REQUIRE(bst_cli(dir, base + " --output-dir " + (dir / "a").string()).status == 0);
  REQUIRE(bst_cli(dir, base + " --output-dir " + (dir / "b").string() + " --jobs 3").status == 0);
  for (const char* f : {"hyp.txt", "report.json", "emissions/utt0.tsv", "emissions/utt1.tsv",
                        "emissions/utt2.tsv"}) {
    const std::string a = read_text(dir / "a" / f);
    CHECK_FALSE(a.empty());
    CHECK(a == read_text(dir / "b" / f));
  }
  const auto report = nlohmann::json::parse(read_text(dir / "a" / "report.json"));
  CHECK(report["utterances"].size() == 3);
  for (const auto& u : report["utterances"]) {
    CHECK(u.contains("average_lagging_ms"));
    CHECK(u.contains("endpoint_ms"));
    CHECK(u.contains("wait_events"));
    CHECK(u["tokens"].get<int>() >= 1);
  }
}

TEST_CASE("ctc weight 0 and 0.3 both give well-formed logs") {
  const fs::path dir = make_inputs("cli_mu");
  const std::string base = "run-stream " + common(dir) + " --clock simulated --features " +
                           (dir / "utt1.feat").string();
  for (const char* mu : {"0", "0.3"}) {
    const fs::path out = dir / (std::string("mu") + mu);
    const Run r = bst_cli(dir, base + " --ctc-weight " + mu + " --output-dir " + out.string());
    REQUIRE(r.status == 0);
    const EmissionLog log = load_emission_log(out / "emissions" / "utt1.tsv");
    CHECK_NOTHROW(log.validate());
    CHECK(log.events.back().token == "<sos/eos>");
    CHECK(log.source_total_ms == 1300.0);
    const auto report = nlohmann::json::parse(read_text(out / "report.json"));
    CHECK(report["config"]["ctc_weight"].get<double>() == std::stod(mu));
  }
}

TEST_CASE("errors exit nonzero and name the culprit") {
  const fs::path dir = make_inputs("cli_err");
  Run r = bst_cli(dir, "run-stream --vocab " + (dir / "nope.txt").string() + kTinyModel + kDecode +
                           " --features " + (dir / "utt0.feat").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("nope.txt") != std::string::npos);

  write_text(dir / "empty.tsv", "");
  r = bst_cli(dir, "eval-objective " + common(dir) + " --manifest " +
                       (dir / "empty.tsv").string() + " --output-dir " + dir.string());
  CHECK(r.status != 0);
  CHECK(r.err.find("empty.tsv") != std::string::npos);

  r = bst_cli(dir, "run-stream " + common(dir) + " --features " + (dir / "utt0.feat").string() +
                       " --chunk-ms 85");
  CHECK(r.status != 0);

  write_text(dir / "bad.json", "{\"beam\": 2, \"no-such-key\": 1}");
  r = bst_cli(dir, "run-stream --config " + (dir / "bad.json").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("no-such-key") != std::string::npos);
}

TEST_CASE("eval-objective weight endpoints") {
  const fs::path dir = make_inputs("cli_obj");
  auto rows = [&](const std::string& extra) {
    const fs::path out = dir / "obj";
    const Run r = bst_cli(dir, "eval-objective " + common(dir) + " --manifest " +
                                   (dir / "manifest.tsv").string() + " --output-dir " +
                                   out.string() + extra);
    REQUIRE(r.status == 0);
    std::istringstream in(read_text(out / "objective.tsv"));
    std::vector<std::vector<std::string>> table;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cols;
      std::istringstream ls(line);
      for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
      table.push_back(cols);
    }
    return table;
  };
  auto t = rows(" --task slu --lambda 0");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == std::vector<std::string>{"id", "ce", "ctc", "ctc_aux", "total", "infeasible"});
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i][4] == t[i][1]);
  t = rows(" --task st --gamma 1");
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i][4] == t[i][3]);
}

TEST_CASE("intent-eval and eval-latency") {
  const fs::path dir = scratch_dir("cli_misc");
  write_text(dir / "ref", "play a\nstop b\nplay\ngo a b\n");
  write_text(dir / "hyp", "play b b\nstop\nplay a\nstop a b\n");
  Run r = bst_cli(dir, "intent-eval --hyp " + (dir / "hyp").string() + " --ref " +
                           (dir / "ref").string());
  CHECK(r.status == 0);
  CHECK(r.out == "75\n");

  write_text(dir / "log.tsv",
             "#source_total_ms=1000\tsource_end_wall_ms=1000\tcompletion_wall_ms=1350\n"
             "1\ta\t0\t250\t300\n2\tb\t1\t500\t600\n3\tc\t2\t750\t900\n4\td\t3\t1000\t1350\n");
  r = bst_cli(dir, "eval-latency --log " + (dir / "log.tsv").string() + " --wait-events 2");
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["average_lagging_ms"].get<double>() == 250.0);
  CHECK(j["endpoint_ms"].get<double>() == 350.0);
  CHECK(j["wait_events"].get<int>() == 2);
}

TEST_CASE("weights export and import") {
  const fs::path dir = make_inputs("cli_weights");
  Run r = bst_cli(dir, "export-weights " + model_args(dir) + " --out " + (dir / "w.bin").string());
  REQUIRE(r.status == 0);
  r = bst_cli(dir, "import-weights --weights " + (dir / "w.bin").string() + " --vocab " +
                       (dir / "vocab.txt").string() + " --out " + (dir / "copy.bin").string());
  REQUIRE(r.status == 0);
  CHECK(r.out.find("vocab 7") != std::string::npos);
  CHECK(read_text(dir / "w.bin") == read_text(dir / "copy.bin"));

  // Decoding from the exported file equals decoding from the seed.
  const std::string base = "run-offline " + common(dir) + " --clock simulated --manifest " +
                           (dir / "manifest.tsv").string();
  REQUIRE(bst_cli(dir, base + " --output-dir " + (dir / "seeded").string()).status == 0);
  REQUIRE(bst_cli(dir, base + " --weights " + (dir / "w.bin").string() + " --output-dir " +
                           (dir / "loaded").string())
              .status == 0);
  CHECK(read_text(dir / "seeded" / "report.json") == read_text(dir / "loaded" / "report.json"));

  save_vocab(tiny_vocab(5), dir / "small.txt");
  r = bst_cli(dir, "import-weights --weights " + (dir / "w.bin").string() + " --vocab " +
                       (dir / "small.txt").string());
  CHECK(r.status != 0);
  write_text(dir / "junk.bin", "not weights");
  r = bst_cli(dir, "import-weights --weights " + (dir / "junk.bin").string());
  CHECK(r.status != 0);
}

TEST_CASE("flags override the JSON config") {
  const fs::path dir = make_inputs("cli_json");
  write_text(dir / "cfg.json",
             "{\"beam\": 2, \"ctc-weight\": 0.5, \"clock\": \"simulated\", \"task\": \"slu\"}");
  const std::string base = "run-stream " + common(dir) + " --config " +
                           (dir / "cfg.json").string() + " --features " +
                           (dir / "utt0.feat").string();
  REQUIRE(bst_cli(dir, base + " --output-dir " + (dir / "a").string()).status == 0);
  auto j = nlohmann::json::parse(read_text(dir / "a" / "report.json"));
  // --beam 3 from the command line wins over the file.
  CHECK(j["config"]["beam"].get<int>() == 3);
  CHECK(j["config"]["ctc_weight"].get<double>() == 0.5);
  CHECK(j["config"]["task"] == "slu");
  CHECK(j["config"]["clock"] == "simulated");
  REQUIRE(bst_cli(dir, base + " --ctc-weight 0.2 --output-dir " + (dir / "b").string()).status ==
          0);
  j = nlohmann::json::parse(read_text(dir / "b" / "report.json"));
  CHECK(j["config"]["ctc_weight"].get<double>() == 0.2);
}
