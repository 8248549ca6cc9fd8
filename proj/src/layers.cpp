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

#include "bst/layers.hpp"

#include <algorithm>
#include <cmath>

namespace bst {

namespace {
constexpr double kNormEps = 1e-12;
}

std::vector<double> linear(const Linear& lin, std::span<const double> x) {
  const std::size_t out_dim = lin.weight.rows();
  if (x.size() != lin.weight.cols()) {
    throw Error("linear: input width " + std::to_string(x.size()) + " != " +
                std::to_string(lin.weight.cols()));
  }
  std::vector<double> y(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) y[o] = dot(lin.weight.row(o), x) + lin.bias[o];
  return y;
}

Matrix linear(const Linear& lin, const Matrix& x) {
  if (x.cols() != lin.weight.cols()) {
    throw Error("linear: input width " + std::to_string(x.cols()) + " != " +
                std::to_string(lin.weight.cols()));
  }
  Matrix y(x.rows(), lin.weight.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = dot(lin.weight.row(o), in) + lin.bias[o];
  }
  return y;
}

std::vector<double> layer_norm(const LayerNorm& norm, std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + kNormEps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = (x[i] - mean) * inv * norm.gain[i] + norm.bias[i];
  }
  return y;
}

Matrix layer_norm(const LayerNorm& norm, const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = layer_norm(norm, x.row(r));
    std::copy(row.begin(), row.end(), y.row(r).begin());
  }
  return y;
}

void relu_inplace(Matrix& x) {
  for (double& v : x.data()) v = std::max(v, 0.0);
}

Matrix feed_forward(const FeedForward& ff, const Matrix& x) {
  Matrix h = linear(ff.up, x);
  relu_inplace(h);
  return linear(ff.down, h);
}

void add_inplace(Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw Error("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < x.data().size(); ++i) x.data()[i] += y.data()[i];
}

Matrix positional_encoding(std::size_t first, std::size_t rows, std::size_t dim) {
  Matrix pe(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(r, i) = std::sin(pos * freq);
      if (i + 1 < dim) pe(r, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Matrix attention_context(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                         std::span<const KeyRange> ranges) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (ranges.size() != q.rows()) throw Error("attention: one key range per query required");
  Matrix ctx(q.rows(), d);
  std::vector<double> scores;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const KeyRange range = ranges[i];
    if (range.begin >= range.end || range.end > k.rows()) {
      throw Error("attention: invalid key range for query " + std::to_string(i));
    }
    scores.resize(range.end - range.begin);
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      auto qi = q.row(i).subspan(off, dh);
      for (std::size_t j = range.begin; j < range.end; ++j) {
        scores[j - range.begin] = dot(qi, k.row(j).subspan(off, dh)) * scale;
      }
      const double m = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - m);
        z += s;
      }
      auto out = ctx.row(i).subspan(off, dh);
      for (std::size_t j = range.begin; j < range.end; ++j) {
        const double w = scores[j - range.begin] / z;
        auto vj = v.row(j).subspan(off, dh);
        for (std::size_t c = 0; c < dh; ++c) out[c] += w * vj[c];
      }
    }
  }
  return ctx;
}

}  // namespace bst
