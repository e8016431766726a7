#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/data/tokenize.hpp"
#include "chargenet/data/vocabulary.hpp"

namespace chargenet {

inline constexpr std::size_t kDefaultMaxFactLen = 500;
inline constexpr std::size_t kDefaultMaxDefLen = 110;

using LabelVector = std::vector<std::uint8_t>;
using LabelMap = std::unordered_map<std::string, std::size_t>;

struct FactExample {
  TokenIds tokens;
  LabelVector labels;  // multi-hot over C charges
};

struct ChargeDefinition {
  std::size_t charge_id = 0;
  std::string name;
  TokenIds tokens;
};

struct ChargeSet {
  std::vector<ChargeDefinition> definitions;
  LabelMap label_map;

  std::size_t size() const { return definitions.size(); }
  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (const auto& d : definitions) n.push_back(d.name);
    return n;
  }
};

/// One case as read from disk, before vocabulary lookup.
struct FactRecord {
  std::vector<std::string> tokens;
  std::vector<std::string> accusations;
  std::size_t line = 0;
};

struct DefinitionRecord {
  std::string name;
  std::vector<std::string> tokens;
};

struct DatasetLoad {
  std::vector<FactExample> examples;
  std::size_t skipped_records = 0;  // no known charge, or empty fact
  std::size_t unknown_labels = 0;   // accusation names absent from the label map
};

namespace detail {

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open file: " + path);
  return in;
}

inline nlohmann::json parse_line(const std::string& path, std::size_t lineno, const std::string& line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

inline bool blank(const std::string& line) { return line.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace detail

/// Reads `{"fact": str, "meta": {"accusation": [str, ...]}}` lines.
inline std::vector<FactRecord> read_fact_records(const std::string& path) {
  auto in = detail::open_or_throw(path);
  std::vector<FactRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    const auto j = detail::parse_line(path, lineno, line);
    const auto where = path + ":" + std::to_string(lineno) + ": ";
    if (!j.is_object() || !j.contains("fact") || !j["fact"].is_string())
      throw FormatError(where + "missing string field 'fact'");
    if (!j.contains("meta") || !j["meta"].is_object() || !j["meta"].contains("accusation") ||
        !j["meta"]["accusation"].is_array())
      throw FormatError(where + "missing array field 'meta.accusation'");
    FactRecord r;
    r.line = lineno;
    r.tokens = tokenize(j["fact"].get<std::string>());
    for (const auto& a : j["meta"]["accusation"]) {
      if (!a.is_string()) throw FormatError(where + "accusation entries must be strings");
      r.accusations.push_back(a.get<std::string>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Reads `{"name": str, "definition": str}` lines.
inline std::vector<DefinitionRecord> read_definition_records(const std::string& path) {
  auto in = detail::open_or_throw(path);
  std::vector<DefinitionRecord> out;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    const auto j = detail::parse_line(path, lineno, line);
    const auto where = path + ":" + std::to_string(lineno) + ": ";
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string() || !j.contains("definition") ||
        !j["definition"].is_string())
      throw FormatError(where + "expected string fields 'name' and 'definition'");
    DefinitionRecord r;
    r.name = j["name"].get<std::string>();
    r.tokens = tokenize(j["definition"].get<std::string>());
    if (r.tokens.empty()) throw FormatError(where + "empty definition for charge '" + r.name + "'");
    if (!seen.emplace(r.name, lineno).second) throw FormatError(where + "duplicate charge name '" + r.name + "'");
    out.push_back(std::move(r));
  }
  return out;
}

/// Maps records onto vocabulary ids and multi-hot labels. Facts are
/// truncated to `max_fact_len`; unknown charge names are counted and
/// dropped, and records left with no label (or no tokens) are skipped.
inline DatasetLoad encode_dataset(const std::vector<FactRecord>& records, const Vocabulary& vocab,
                                  const LabelMap& label_map, std::size_t num_charges,
                                  std::size_t max_fact_len = kDefaultMaxFactLen) {
  DatasetLoad out;
  for (const auto& r : records) {
    FactExample ex;
    ex.labels.assign(num_charges, 0);
    bool any = false;
    for (const auto& a : r.accusations) {
      auto it = label_map.find(a);
      if (it == label_map.end()) {
        ++out.unknown_labels;
        continue;
      }
      ex.labels[it->second] = 1;
      any = true;
    }
    const std::size_t n = std::min(r.tokens.size(), max_fact_len);
    if (!any || n == 0) {
      ++out.skipped_records;
      continue;
    }
    ex.tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ex.tokens.push_back(vocab.lookup(r.tokens[i]));
    out.examples.push_back(std::move(ex));
  }
  return out;
}

inline DatasetLoad load_dataset(const std::string& path, const Vocabulary& vocab, const LabelMap& label_map,
                                std::size_t num_charges, std::size_t max_fact_len = kDefaultMaxFactLen) {
  return encode_dataset(read_fact_records(path), vocab, label_map, num_charges, max_fact_len);
}

/// Charge ids follow record order; definitions are truncated to `max_def_len`.
inline ChargeSet encode_charge_definitions(const std::vector<DefinitionRecord>& records, const Vocabulary& vocab,
                                           std::size_t max_def_len = kDefaultMaxDefLen) {
  ChargeSet out;
  for (const auto& r : records) {
    if (r.tokens.empty()) throw FormatError("empty definition for charge '" + r.name + "'");
    if (!out.label_map.emplace(r.name, out.definitions.size()).second)
      throw FormatError("duplicate charge name '" + r.name + "'");
    ChargeDefinition d;
    d.charge_id = out.definitions.size();
    d.name = r.name;
    const std::size_t n = std::min(r.tokens.size(), max_def_len);
    for (std::size_t i = 0; i < n; ++i) d.tokens.push_back(vocab.lookup(r.tokens[i]));
    out.definitions.push_back(std::move(d));
  }
  return out;
}

inline ChargeSet load_charge_definitions(const std::string& path, const Vocabulary& vocab,
                                         std::size_t max_def_len = kDefaultMaxDefLen) {
  return encode_charge_definitions(read_definition_records(path), vocab, max_def_len);
}

/// Vocabulary over the fact corpus (with `min_count`), extended with every
/// definition token so charge definitions never collapse to UNK.
inline Vocabulary build_vocab_for(const std::vector<FactRecord>& facts, const std::vector<DefinitionRecord>& defs,
                                  std::size_t min_count) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(facts.size());
  for (const auto& f : facts) corpus.push_back(f.tokens);
  Vocabulary v = build_vocab(corpus, min_count);
  for (const auto& d : defs)
    for (const auto& t : d.tokens)
      if (t != Vocabulary::kPadToken && t != Vocabulary::kUnkToken) v.add(t);
  return v;
}

}  // namespace chargenet
