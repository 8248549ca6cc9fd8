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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>

#include "bst/config.hpp"
#include "bst/core.hpp"
#include "bst/params.hpp"
#include "bst/vocabulary.hpp"
#include "test_util.hpp"

using namespace bst;
using bst::testing::tiny_config;

TEST_CASE("logsumexp") {
  const std::vector<double> zeros = {0.0, 0.0};
  CHECK(logsumexp(zeros) == doctest::Approx(0.693147).epsilon(1e-6));
  const std::vector<double> with_inf = {kNegInf, -3.25};
  CHECK(logsumexp(with_inf) == -3.25);
  const std::vector<double> small = {-1000.0, -1000.0};
  CHECK(logsumexp(small) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(logsumexp(std::vector<double>{}), Error);
  const std::vector<double> all_inf = {kNegInf, kNegInf};
  CHECK(logsumexp(all_inf) == kNegInf);
}

TEST_CASE("log_softmax") {
  auto a = log_softmax(std::vector<double>{0.0, 0.0});
  CHECK(a[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  auto b = log_softmax(std::vector<double>{1.0, 1.0, 1.0});
  for (double v : b) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));
  // Closed form for [5, 0].
  auto c = log_softmax(std::vector<double>{5.0, 0.0});
  const double z = std::log1p(std::exp(-5.0));
  CHECK(std::abs(c[0] - (-z)) < 1e-12);
  CHECK(std::abs(c[1] - (-5.0 - z)) < 1e-12);
}

TEST_CASE("log_softmax normalizes random vectors") {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0.0, 30.0);
  std::uniform_int_distribution<int> len(1, 40);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(len(rng));
    for (double& x : v) x = n(rng);
    CHECK(std::abs(logsumexp(log_softmax(v))) < 1e-9);
  }
}

TEST_CASE("matrix basics") {
  Matrix m(2, 3);
  m(1, 2) = 4.5;
  CHECK(m.row(1)[2] == 4.5);
  Matrix n = m.slice_rows(1, 2);
  CHECK(n.rows() == 1);
  CHECK(n(0, 2) == 4.5);
  m.append_rows(n);
  CHECK(m.rows() == 3);
  CHECK(m(2, 2) == 4.5);
  CHECK_THROWS_AS(m.append_rows(Matrix(1, 2)), Error);
  CHECK(max_abs_diff(m, m) == 0.0);
}

TEST_CASE("vocabulary file") {
  const auto dir = bst::testing::scratch_dir("vocab");
  bst::testing::write_text(dir / "v.txt", "<blank>\n<sos/eos>\n<unk>\na\nb\n");
  const Vocabulary v = load_vocab(dir / "v.txt");
  CHECK(v.size() == 5);
  CHECK(v.index("a") == 3);
  CHECK(v.index_or_unk("zzz") == kUnk);
  CHECK_THROWS_AS(v.index("zzz"), Error);
  CHECK(v.decode({3, 4}) == "a b");

  bst::testing::write_text(dir / "dup.txt", "<blank>\n<sos/eos>\n<unk>\na\na\n");
  CHECK_THROWS_AS(load_vocab(dir / "dup.txt"), Error);
  bst::testing::write_text(dir / "empty.txt", "");
  CHECK_THROWS_AS(load_vocab(dir / "empty.txt"), Error);
  bst::testing::write_text(dir / "swapped.txt", "<sos/eos>\n<blank>\n<unk>\na\n");
  CHECK_THROWS_AS(load_vocab(dir / "swapped.txt"), Error);
  CHECK_THROWS_AS(load_vocab(dir / "missing.txt"), Error);

  save_vocab(v, dir / "out.txt");
  CHECK(load_vocab(dir / "out.txt").tokens() == v.tokens());
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.intermediate_layer = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.intermediate_layer = c.enc_layers + 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.subsample_factor = 6;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  CHECK(c.num_subsample_convs() == 2);
}

namespace {

bool same_bytes(const ModelParams& a, const ModelParams& b) {
  std::vector<double> x, y;
  visit_tensors(a, [&](const std::string&, std::span<const double> d, std::size_t, std::size_t,
                       TensorKind) { x.insert(x.end(), d.begin(), d.end()); });
  visit_tensors(b, [&](const std::string&, std::span<const double> d, std::size_t, std::size_t,
                       TensorKind) { y.insert(y.end(), d.begin(), d.end()); });
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("init_params is a pure function of config and seed") {
  const ModelConfig c = tiny_config();
  const ModelParams a = init_params(c, 7);
  const ModelParams b = init_params(c, 7);
  CHECK(same_bytes(a, b));
  CHECK(a == b);
  const ModelParams other = init_params(c, 8);
  CHECK_FALSE(same_bytes(a, other));
}

TEST_CASE("init_params value ranges") {
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 3);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  std::size_t gains = 0;
  visit_tensors(p, [&](const std::string& name, std::span<const double> d, std::size_t,
                       std::size_t, TensorKind kind) {
    for (double v : d) {
      if (kind == TensorKind::kNormGain) {
        CHECK(v == 1.0);
        ++gains;
      } else if (kind == TensorKind::kNormBias) {
        CHECK(v == 0.0);
      } else {
        INFO(name);
        CHECK(std::abs(v) <= bound);
        CHECK(static_cast<double>(static_cast<float>(v)) == v);
      }
    }
  });
  CHECK(gains > 0);
}

TEST_CASE("shape audit and layout") {
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 1);
  CHECK_NOTHROW(audit_shapes(p));
  std::size_t total = 0;
  for (const auto& t : parameter_layout(c)) total += t.rows * t.cols;
  CHECK(total == parameter_count(c));
  ModelParams broken = p;
  broken.encoder[1].ff.up.bias.pop_back();
  CHECK_THROWS_AS(audit_shapes(broken), Error);
}

TEST_CASE("weight file round trip") {
  const auto dir = bst::testing::scratch_dir("weights");
  const ModelParams p = init_params(tiny_config(), 5);
  save_weights(p, dir / "w.bin");
  const ModelParams q = load_weights(dir / "w.bin");
  CHECK(q.config == p.config);
  CHECK(same_bytes(p, q));

  // Header: magic then ten little-endian int32 config fields.
  const std::string bytes = bst::testing::read_text(dir / "w.bin");
  CHECK(bytes.substr(0, 5) == "BSTW1");
  std::int32_t d_model = 0;
  std::memcpy(&d_model, bytes.data() + 5, 4);
  CHECK(d_model == 8);
  CHECK(bytes.size() == 5 + 40 + 4 * parameter_count(p.config));

  bst::testing::write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_weights(dir / "short.bin"), Error);
  bst::testing::write_text(dir / "long.bin", bytes + "x");
  CHECK_THROWS_AS(load_weights(dir / "long.bin"), Error);
  bst::testing::write_text(dir / "magic.bin", "BSTW2" + bytes.substr(5));
  CHECK_THROWS_AS(load_weights(dir / "magic.bin"), Error);

  ModelParams bad = p;
  bad.ctc_main.bias[0] = 0.1;  // not a float32 value
  CHECK_THROWS_AS(save_weights(bad, dir / "bad.bin"), Error);
}
