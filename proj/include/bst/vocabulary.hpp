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

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bst {

using Token = int;
using TokenSeq = std::vector<Token>;

inline constexpr Token kBlank = 0;
inline constexpr Token kSosEos = 1;  // shared start and stop symbol
inline constexpr Token kUnk = 2;

inline constexpr std::string_view kBlankSymbol = "<blank>";
inline constexpr std::string_view kSosEosSymbol = "<sos/eos>";
inline constexpr std::string_view kUnkSymbol = "<unk>";

class Vocabulary {
 public:
  // Lines 0-2 must be exactly <blank>, <sos/eos>, <unk>.
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(Token id) const;
  bool contains(std::string_view token) const;
  // Throws if the token is unknown.
  Token index(std::string_view token) const;
  // Unknown tokens map to <unk>.
  Token index_or_unk(std::string_view token) const;

  TokenSeq encode(const std::vector<std::string>& tokens) const;
  std::string decode(const TokenSeq& ids) const;  // space separated

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Token> index_;
};

Vocabulary load_vocab(const std::filesystem::path& path);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace bst
