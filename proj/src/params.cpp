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

#include "bst/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace bst {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("invalid model config: " + what);
  };
  require(d_model > 0, "d_model must be positive");
  require(n_heads > 0, "n_heads must be positive");
  require(d_model % n_heads == 0, "n_heads must divide d_model");
  require(ff_dim > 0, "ff_dim must be positive");
  require(enc_layers > 0, "enc_layers must be positive");
  require(dec_layers > 0, "dec_layers must be positive");
  require(intermediate_layer >= 1 && intermediate_layer <= enc_layers,
          "intermediate_layer must lie in [1, enc_layers]");
  require(feature_dim > 0, "feature_dim must be positive");
  require(subsample_factor > 0 && std::has_single_bit(static_cast<unsigned>(subsample_factor)),
          "subsample_factor must be a positive power of two");
  require(vocab_size > 3, "vocab_size must exceed the three reserved tokens");
  require(frame_ms > 0, "frame_ms must be positive");
}

int ModelConfig::num_subsample_convs() const {
  return std::countr_zero(static_cast<unsigned>(subsample_factor));
}

namespace {

void add_linear(std::vector<TensorShape>& out, const std::string& name, std::size_t out_dim,
                std::size_t in_dim) {
  out.push_back({name + ".weight", out_dim, in_dim, TensorKind::kProjection});
  out.push_back({name + ".bias", 1, out_dim, TensorKind::kProjection});
}

void add_norm(std::vector<TensorShape>& out, const std::string& name, std::size_t dim) {
  out.push_back({name + ".gain", 1, dim, TensorKind::kNormGain});
  out.push_back({name + ".bias", 1, dim, TensorKind::kNormBias});
}

void add_attention(std::vector<TensorShape>& out, const std::string& name, std::size_t d) {
  for (const char* p : {".query", ".key", ".value", ".output"}) add_linear(out, name + p, d, d);
}

Linear make_linear(std::size_t out_dim, std::size_t in_dim) {
  return Linear{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
}

LayerNorm make_norm(std::size_t dim) {
  return LayerNorm{std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
}

Attention make_attention(std::size_t d) {
  return Attention{make_linear(d, d), make_linear(d, d), make_linear(d, d), make_linear(d, d)};
}

}  // namespace

std::vector<TensorShape> parameter_layout(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t ff = c.ff_dim;
  const std::size_t v = c.vocab_size;
  std::vector<TensorShape> out;
  std::size_t in = c.feature_dim;
  for (int k = 0; k < c.num_subsample_convs(); ++k) {
    add_linear(out, "subsample.conv" + std::to_string(k), d, 2 * in);
    in = d;
  }
  add_linear(out, "subsample.out", d, in);
  for (int l = 0; l < c.enc_layers; ++l) {
    const std::string n = "encoder." + std::to_string(l);
    add_norm(out, n + ".norm_attn", d);
    add_attention(out, n + ".self_attn", d);
    add_norm(out, n + ".norm_ff", d);
    add_linear(out, n + ".ff.up", ff, d);
    add_linear(out, n + ".ff.down", d, ff);
    add_linear(out, n + ".context_proj", d, d);
  }
  add_norm(out, "encoder_norm", d);
  out.push_back({"decoder.embedding", v, d, TensorKind::kProjection});
  for (int l = 0; l < c.dec_layers; ++l) {
    const std::string n = "decoder." + std::to_string(l);
    add_norm(out, n + ".norm_self", d);
    add_attention(out, n + ".self_attn", d);
    add_norm(out, n + ".norm_src", d);
    add_attention(out, n + ".src_attn", d);
    add_norm(out, n + ".norm_ff", d);
    add_linear(out, n + ".ff.up", ff, d);
    add_linear(out, n + ".ff.down", d, ff);
  }
  add_norm(out, "decoder_norm", d);
  add_linear(out, "decoder.out", v, d);
  add_linear(out, "ctc_main", v, d);
  add_linear(out, "ctc_aux", v, d);
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& t : parameter_layout(config)) n += t.rows * t.cols;
  return n;
}

ModelParams allocate_params(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  const std::size_t ff = c.ff_dim;
  const std::size_t v = c.vocab_size;
  ModelParams p;
  p.config = c;
  std::size_t in = c.feature_dim;
  for (int k = 0; k < c.num_subsample_convs(); ++k) {
    p.subsample_convs.push_back(make_linear(d, 2 * in));
    in = d;
  }
  p.subsample_out = make_linear(d, in);
  for (int l = 0; l < c.enc_layers; ++l) {
    p.encoder.push_back(EncoderLayer{make_norm(d), make_attention(d), make_norm(d),
                                     FeedForward{make_linear(ff, d), make_linear(d, ff)},
                                     make_linear(d, d)});
  }
  p.encoder_norm = make_norm(d);
  p.embedding = Matrix(v, d);
  for (int l = 0; l < c.dec_layers; ++l) {
    p.decoder.push_back(DecoderLayer{make_norm(d), make_attention(d), make_norm(d),
                                     make_attention(d), make_norm(d),
                                     FeedForward{make_linear(ff, d), make_linear(d, ff)}});
  }
  p.decoder_norm = make_norm(d);
  p.decoder_out = make_linear(v, d);
  p.ctc_main = make_linear(v, d);
  p.ctc_aux = make_linear(v, d);
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint32_t seed) {
  ModelParams p = allocate_params(config);
  std::mt19937 gen(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  visit_tensors(p, [&](const std::string&, std::span<double> data, std::size_t, std::size_t,
                       TensorKind kind) {
    for (double& x : data) {
      switch (kind) {
        case TensorKind::kProjection: {
          const double u = (static_cast<double>(gen()) + 0.5) / 4294967296.0;
          x = static_cast<double>(static_cast<float>((2.0 * u - 1.0) * bound));
          break;
        }
        case TensorKind::kNormGain: x = 1.0; break;
        case TensorKind::kNormBias: x = 0.0; break;
      }
    }
  });
  return p;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config == other.config)) return false;
  std::vector<std::span<const double>> mine;
  visit_tensors(*this, [&](const std::string&, std::span<const double> data, std::size_t,
                           std::size_t, TensorKind) { mine.push_back(data); });
  std::size_t i = 0;
  bool equal = true;
  visit_tensors(other, [&](const std::string&, std::span<const double> data, std::size_t,
                           std::size_t, TensorKind) {
    if (i >= mine.size() || mine[i].size() != data.size() ||
        std::memcmp(mine[i].data(), data.data(), data.size() * sizeof(double)) != 0) {
      equal = false;
    }
    ++i;
  });
  return equal && i == mine.size();
}

void audit_shapes(const ModelParams& p) {
  const auto layout = parameter_layout(p.config);
  std::size_t i = 0;
  visit_tensors(p, [&](const std::string& name, std::span<const double> data, std::size_t rows,
                       std::size_t cols, TensorKind kind) {
    if (i >= layout.size()) throw Error("shape audit: unexpected tensor " + name);
    const auto& want = layout[i++];
    if (want.name != name || want.rows != rows || want.cols != cols || want.kind != kind ||
        data.size() != rows * cols) {
      throw Error("shape audit: " + name + " is " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", expected " + want.name + " " +
                  std::to_string(want.rows) + "x" + std::to_string(want.cols));
    }
  });
  if (i != layout.size()) throw Error("shape audit: missing tensors after " + std::to_string(i));
}

namespace {

constexpr char kMagic[5] = {'B', 'S', 'T', 'W', '1'};

static_assert(std::endian::native == std::endian::little,
              "weight I/O assumes a little-endian host");

void write_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::int32_t read_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("weight file truncated in header");
  return v;
}

}  // namespace

void save_weights(const ModelParams& p, const std::filesystem::path& path) {
  audit_shapes(p);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write weight file: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const ModelConfig& c = p.config;
  for (int v : {c.d_model, c.n_heads, c.ff_dim, c.enc_layers, c.dec_layers, c.intermediate_layer,
                c.feature_dim, c.subsample_factor, c.vocab_size, c.frame_ms}) {
    write_i32(out, v);
  }
  visit_tensors(p, [&](const std::string& name, std::span<const double> data, std::size_t,
                       std::size_t, TensorKind) {
    for (double x : data) {
      const float f = static_cast<float>(x);
      if (static_cast<double>(f) != x && std::isfinite(x)) {
        throw Error("save_weights: " + name + " holds a value not representable as float32");
      }
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  });
  out.close();
  if (!out) throw Error("error writing weight file: " + path.string());
  std::filesystem::rename(tmp, path);
}

ModelParams load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error("not a BSTW1 weight file: " + path.string());
  }
  ModelConfig c;
  for (int* field : {&c.d_model, &c.n_heads, &c.ff_dim, &c.enc_layers, &c.dec_layers,
                     &c.intermediate_layer, &c.feature_dim, &c.subsample_factor, &c.vocab_size,
                     &c.frame_ms}) {
    *field = read_i32(in);
  }
  ModelParams p = allocate_params(c);
  visit_tensors(p, [&](const std::string& name, std::span<double> data, std::size_t,
                       std::size_t, TensorKind) {
    std::vector<float> buf(data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw Error("weight file truncated in tensor " + name);
    for (std::size_t i = 0; i < buf.size(); ++i) data[i] = buf[i];
  });
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error("weight file has trailing bytes: " + path.string());
  }
  return p;
}

}  // namespace bst
