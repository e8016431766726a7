#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "chargenet/errors.hpp"

namespace chargenet {

using TokenId = std::size_t;
using TokenIds = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

class Vocabulary {
 public:
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : tokens_{kPadToken, kUnkToken} {
    index_.emplace(kPadToken, kPadId);
    index_.emplace(kUnkToken, kUnkId);
  }

  /// Rebuilds a vocabulary from its id-ordered token list (ids 0 and 1 must
  /// be the reserved entries).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken)
      throw FormatError("vocabulary: reserved entries missing");
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      if (!v.index_.emplace(tokens[i], i).second) throw FormatError("vocabulary: duplicate token " + tokens[i]);
      v.tokens_.push_back(tokens[i]);
    }
    return v;
  }

  TokenId add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  TokenId lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw std::out_of_range("vocabulary: id out of range");
    return tokens_[id];
  }

  TokenIds encode(const std::vector<std::string>& tokens) const {
    TokenIds ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

  std::vector<std::string> decode(const TokenIds& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId id : ids) out.push_back(token(id));
    return out;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Tokens with count >= min_count get ids from 2 upward in descending
/// frequency, ties broken lexicographically. Everything else maps to UNK.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& doc : corpus)
    for (const auto& tok : doc) {
      ++counts[tok];
      ++total;
    }
  if (total == 0) throw IngestionError("build_vocab: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_count && tok != Vocabulary::kPadToken && tok != Vocabulary::kUnkToken)
      kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

}  // namespace chargenet
