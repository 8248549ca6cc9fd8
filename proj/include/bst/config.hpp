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

namespace bst {

// Network hyper-parameters. Every parameter shape is a function of these
// fields alone.
struct ModelConfig {
  int d_model = 256;
  int n_heads = 4;
  int ff_dim = 2048;
  int enc_layers = 12;
  int dec_layers = 6;
  int intermediate_layer = 8;  // 1-based tap for the auxiliary CTC head
  int feature_dim = 80;
  int subsample_factor = 4;    // power of two; one stride-2 conv per factor of 2
  int vocab_size = 0;
  int frame_ms = 10;           // duration of one pre-subsampling feature frame

  // Throws bst::Error naming the first violated invariant.
  void validate() const;

  int num_subsample_convs() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace bst
