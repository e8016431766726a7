#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "chargenet/data/tokenize.hpp"
#include "chargenet/data/vocabulary.hpp"
#include "chargenet/numeric/random.hpp"
#include "chargenet/numeric/tensor.hpp"

namespace chargenet {

/// |V| x d word vectors. Row 0 (PAD) is zero and never updated.
struct EmbeddingTable {
  Tensor weights;
  bool trainable = true;

  std::size_t vocab_size() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }
};

inline constexpr double kEmbeddingInitRange = 0.1;

/// Uniform(-0.1, 0.1) rows from `rng`, PAD row zeroed.
inline EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  EmbeddingTable t;
  t.weights = Tensor(Shape{vocab_size, dim});
  for (std::size_t i = 0; i < vocab_size; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      t.weights.at(i, j) = i == kPadId ? 0.0 : rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  t.weights.requires_grad = true;
  return t;
}

/// Builds a table over `vocab` from (word, vector) rows. Every row must
/// have the same width; vocabulary words without a row are initialized as
/// in random_embeddings().
inline EmbeddingTable embeddings_from_rows(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                                           const Vocabulary& vocab, Rng& rng) {
  if (rows.empty()) throw FormatError("no embedding rows");
  const std::size_t dim = rows.front().second.size();
  if (dim == 0) throw FormatError("embedding rows have no values");
  std::unordered_map<std::string, const std::vector<double>*> found;
  for (const auto& [word, vec] : rows) {
    if (vec.size() != dim)
      throw FormatError("embedding for '" + word + "' has dimension " + std::to_string(vec.size()) + ", expected " +
                        std::to_string(dim));
    found.emplace(word, &vec);
  }
  EmbeddingTable t = random_embeddings(vocab.size(), dim, rng);
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    auto it = found.find(vocab.token(id));
    if (it == found.end()) continue;
    std::copy(it->second->begin(), it->second->end(), t.weights.row(id).begin());
  }
  return t;
}

/// Reads "word f1 ... fd" lines; see embeddings_from_rows().
inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open embeddings file: " + path);
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = tokenize(line);
    if (fields.empty()) continue;
    if (fields.size() < 2)
      throw FormatError(path + ":" + std::to_string(lineno) + ": embedding row has no values");
    std::vector<double> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(fields[i], &used));
        if (used != fields[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad number '" + fields[i] + "'");
      }
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim)
      throw FormatError(path + ":" + std::to_string(lineno) + ": dimension " + std::to_string(vec.size()) +
                        " differs from " + std::to_string(dim));
    if (vocab.contains(fields[0])) rows.emplace_back(std::move(fields[0]), std::move(vec));
  }
  if (dim == 0) throw FormatError(path + ": no embedding rows");
  if (rows.empty()) return random_embeddings(vocab.size(), dim, rng);
  return embeddings_from_rows(rows, vocab, rng);
}

}  // namespace chargenet
