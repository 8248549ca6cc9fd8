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

#include <span>
#include <vector>

#include "bst/core.hpp"
#include "bst/params.hpp"

namespace bst {

Matrix linear(const Linear& lin, const Matrix& x);
std::vector<double> linear(const Linear& lin, std::span<const double> x);

Matrix layer_norm(const LayerNorm& norm, const Matrix& x);
std::vector<double> layer_norm(const LayerNorm& norm, std::span<const double> x);

void relu_inplace(Matrix& x);

// x + ff(x) is left to the caller; this is down(relu(up(x))).
Matrix feed_forward(const FeedForward& ff, const Matrix& x);

void add_inplace(Matrix& x, const Matrix& y);

// Sinusoidal encoding for absolute positions first .. first + rows - 1.
Matrix positional_encoding(std::size_t first, std::size_t rows, std::size_t dim);

// Half-open range of key rows visible to one query row.
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Scaled dot-product attention over already-projected queries, keys and
// values, split into `heads` heads. Returns the concatenated head contexts
// (before the output projection). Keys outside a query's range are never read.
Matrix attention_context(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                         std::span<const KeyRange> ranges);

}  // namespace bst
