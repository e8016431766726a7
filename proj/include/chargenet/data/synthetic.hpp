#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/data/dataset.hpp"
#include "chargenet/data/embeddings.hpp"
#include "chargenet/numeric/random.hpp"

namespace chargenet {

/// Generator parameters for a separable charge-prediction corpus.
///
/// Class i owns 2-4 signature terms that appear in its definition. Each term
/// has several paraphrase surface forms; facts are noise words with a few
/// paraphrases of their class's terms mixed in. Paraphrase -> term -> class
/// is many-to-one, so the label is recoverable from the paraphrases alone.
struct SyntheticSpec {
  std::size_t num_classes = 5;
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 20;
  std::set<std::size_t> rare_classes;
  std::size_t rare_train_count = 5;  // capped at 10
  std::uint64_t seed = 7;

  std::size_t noise_vocab = 60;
  std::size_t shared_legal_words = 12;
  std::size_t forms_per_term = 3;
  std::size_t min_fact_noise = 6;
  std::size_t max_fact_noise = 12;
  std::size_t min_paraphrases = 2;
  std::size_t max_paraphrases = 4;
  // Surface forms of rare-class terms withheld from training facts.
  std::size_t rare_unseen_forms = 0;

  // When > 0, also emits word vectors of this width in which each
  // paraphrase lies near its term (a stand-in for pre-trained vectors).
  std::size_t embedding_dim = 0;
  double paraphrase_noise = 0.5;
};

struct SyntheticText {
  std::string fact;
  std::vector<std::string> accusations;
};

struct SyntheticDefinition {
  std::string name;
  std::string definition;
};

struct SyntheticCorpus {
  std::vector<SyntheticText> train;
  std::vector<SyntheticText> test;
  std::vector<SyntheticDefinition> definitions;
  std::map<std::string, std::string> paraphrase_to_term;
  std::map<std::string, std::size_t> term_to_class;
  std::vector<std::size_t> train_support;
  std::vector<std::pair<std::string, std::vector<double>>> embeddings;
};

inline std::string synthetic_charge_name(std::size_t c) { return "charge_" + std::to_string(c); }

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
  if (spec.train_per_class < 1) throw ConfigError("train_per_class must be >= 1");
  if (spec.forms_per_term < 1) throw ConfigError("forms_per_term must be >= 1");
  if (spec.min_paraphrases < 1 || spec.max_paraphrases < spec.min_paraphrases)
    throw ConfigError("bad paraphrase count range");
  if (spec.max_fact_noise < spec.min_fact_noise) throw ConfigError("bad noise length range");
  if (spec.rare_unseen_forms >= spec.forms_per_term)
    throw ConfigError("rare_unseen_forms must leave at least one training surface form");
  for (std::size_t r : spec.rare_classes)
    if (r >= spec.num_classes) throw ConfigError("rare class id out of range");

  Rng rng(spec.seed);
  SyntheticCorpus out;
  const std::size_t C = spec.num_classes;

  std::vector<std::string> noise(spec.noise_vocab), legal(spec.shared_legal_words);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = "w" + std::to_string(i);
  for (std::size_t i = 0; i < legal.size(); ++i) legal[i] = "law" + std::to_string(i);

  // terms[c][k] and forms[c][k][s]
  std::vector<std::vector<std::string>> terms(C);
  std::vector<std::vector<std::vector<std::string>>> forms(C);
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t nterms = 2 + rng.below(3);
    for (std::size_t k = 0; k < nterms; ++k) {
      const std::string term = "term" + std::to_string(c) + "_" + std::to_string(k);
      terms[c].push_back(term);
      out.term_to_class[term] = c;
      std::vector<std::string> f;
      for (std::size_t s = 0; s < spec.forms_per_term; ++s) {
        f.push_back("para" + std::to_string(c) + "_" + std::to_string(k) + "_" + std::to_string(s));
        out.paraphrase_to_term[f.back()] = term;
      }
      forms[c].push_back(std::move(f));
    }
  }

  for (std::size_t c = 0; c < C; ++c) {
    std::vector<std::string> words = terms[c];
    const std::size_t nlegal = legal.empty() ? 0 : 3 + rng.below(3);
    for (std::size_t i = 0; i < nlegal; ++i) words.push_back(legal[rng.below(legal.size())]);
    rng.shuffle(words);
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    out.definitions.push_back({synthetic_charge_name(c), std::move(text)});
  }

  auto make_fact = [&](std::size_t c, bool training) {
    const bool rare = spec.rare_classes.count(c) != 0;
    const std::size_t usable = training && rare ? spec.forms_per_term - spec.rare_unseen_forms : spec.forms_per_term;
    std::vector<std::string> words;
    const std::size_t nnoise = spec.min_fact_noise + rng.below(spec.max_fact_noise - spec.min_fact_noise + 1);
    for (std::size_t i = 0; i < nnoise; ++i) words.push_back(noise.empty() ? "w" : noise[rng.below(noise.size())]);
    const std::size_t npara = spec.min_paraphrases + rng.below(spec.max_paraphrases - spec.min_paraphrases + 1);
    for (std::size_t i = 0; i < npara; ++i) {
      const auto& term_forms = forms[c][rng.below(forms[c].size())];
      const auto& w = term_forms[rng.below(usable)];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), w);
    }
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    return SyntheticText{std::move(text), {synthetic_charge_name(c)}};
  };

  out.train_support.assign(C, 0);
  const std::size_t rare_n = std::min<std::size_t>({spec.rare_train_count, 10, spec.train_per_class});
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t n = spec.rare_classes.count(c) ? std::max<std::size_t>(rare_n, 1) : spec.train_per_class;
    out.train_support[c] = n;
    for (std::size_t i = 0; i < n; ++i) out.train.push_back(make_fact(c, true));
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < spec.test_per_class; ++i) out.test.push_back(make_fact(c, false));
  rng.shuffle(out.train);
  rng.shuffle(out.test);

  if (spec.embedding_dim > 0) {
    const std::size_t d = spec.embedding_dim;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    auto gaussian = [&] {
      std::vector<double> v(d);
      for (double& x : v) x = rng.normal() * s;
      return v;
    };
    for (const auto& w : noise) out.embeddings.emplace_back(w, gaussian());
    for (const auto& w : legal) out.embeddings.emplace_back(w, gaussian());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < terms[c].size(); ++k) {
        const auto base = gaussian();
        out.embeddings.emplace_back(terms[c][k], base);
        for (const auto& f : forms[c][k]) {
          auto v = gaussian();
          for (std::size_t j = 0; j < d; ++j) v[j] = base[j] + spec.paraphrase_noise * v[j];
          out.embeddings.emplace_back(f, std::move(v));
        }
      }
  }
  return out;
}

inline void write_synthetic_texts(const std::string& path, const std::vector<SyntheticText>& texts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  for (const auto& t : texts) {
    nlohmann::json j;
    j["fact"] = t.fact;
    j["meta"]["accusation"] = t.accusations;
    out << j.dump() << '\n';
  }
}

inline void write_synthetic_definitions(const std::string& path, const std::vector<SyntheticDefinition>& defs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  for (const auto& d : defs) {
    nlohmann::json j;
    j["name"] = d.name;
    j["definition"] = d.definition;
    out << j.dump() << '\n';
  }
}

inline void write_embeddings(const std::string& path,
                             const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  char buf[32];
  for (const auto& [word, vec] : rows) {
    out << word;
    for (double v : vec) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

/// A synthetic corpus mapped onto a vocabulary, ready for training.
struct EncodedCorpus {
  Vocabulary vocab;
  ChargeSet charges;
  std::vector<FactExample> train;
  std::vector<FactExample> test;
  std::vector<std::size_t> train_support;
  std::optional<EmbeddingTable> embeddings;  // set when the corpus carries word vectors
};

inline std::vector<FactRecord> to_records(const std::vector<SyntheticText>& texts) {
  std::vector<FactRecord> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({tokenize(texts[i].fact), texts[i].accusations, i + 1});
  return out;
}

inline std::vector<DefinitionRecord> to_records(const std::vector<SyntheticDefinition>& defs) {
  std::vector<DefinitionRecord> out;
  for (const auto& d : defs) out.push_back({d.name, tokenize(d.definition)});
  return out;
}

/// Same pipeline as loading the written files: vocabulary from the training
/// facts plus definitions, then id mapping and truncation.
inline EncodedCorpus encode_corpus(const SyntheticCorpus& corpus, std::size_t min_count,
                                   std::size_t max_fact_len = kDefaultMaxFactLen,
                                   std::size_t max_def_len = kDefaultMaxDefLen, std::uint64_t embedding_seed = 0) {
  const auto train_records = to_records(corpus.train);
  const auto def_records = to_records(corpus.definitions);
  EncodedCorpus out;
  out.vocab = build_vocab_for(train_records, def_records, min_count);
  out.charges = encode_charge_definitions(def_records, out.vocab, max_def_len);
  const std::size_t C = out.charges.size();
  out.train = encode_dataset(train_records, out.vocab, out.charges.label_map, C, max_fact_len).examples;
  out.test = encode_dataset(to_records(corpus.test), out.vocab, out.charges.label_map, C, max_fact_len).examples;
  out.train_support = corpus.train_support;
  if (!corpus.embeddings.empty()) {
    Rng rng(embedding_seed);
    out.embeddings = embeddings_from_rows(corpus.embeddings, out.vocab, rng);
  }
  return out;
}

}  // namespace chargenet
