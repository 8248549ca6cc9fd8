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

#include "bst/vocabulary.hpp"

#include <fstream>

#include "bst/core.hpp"

namespace bst {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const std::string_view reserved[] = {kBlankSymbol, kSosEosSymbol, kUnkSymbol};
  if (tokens_.size() < 3) {
    throw Error("vocabulary: reserved tokens missing (need <blank>, <sos/eos>, <unk>)");
  }
  for (int i = 0; i < 3; ++i) {
    if (tokens_[i] != reserved[i]) {
      throw Error("vocabulary: line " + std::to_string(i) + " must be " +
                  std::string(reserved[i]) + ", got '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw Error("vocabulary: empty token at line " + std::to_string(i));
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<Token>(i));
    if (!inserted) {
      throw Error("vocabulary: duplicate token '" + tokens_[i] + "' at lines " +
                  std::to_string(it->second) + " and " + std::to_string(i));
    }
  }
}

const std::string& Vocabulary::token(Token id) const {
  if (id < 0 || id >= size()) throw Error("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

Token Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw Error("vocabulary: unknown token '" + std::string(token) + "'");
  return it->second;
}

Token Vocabulary::index_or_unk(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenSeq ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index_or_unk(t));
  return ids;
}

std::string Vocabulary::decode(const TokenSeq& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // A trailing empty line is a newline at EOF, not a token.
  if (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return Vocabulary(std::move(tokens));
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file: " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

}  // namespace bst
