#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/chargenet.hpp"

namespace chargenet::cli {

/// Bad command-line input: missing files, inconsistent arguments. Exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared helpers

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw UsageError(what + " file not found: " + path);
}

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("output directory is required");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw UsageError("cannot create output directory: " + dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Model settings given on the command line; each one overrides the config file.
struct ModelOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::optional<double> threshold;
  std::optional<std::string> loss_variant;
  std::optional<std::string> ablation;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> d_emb;
  std::optional<std::size_t> d_h;
  std::optional<std::size_t> min_count;
};

inline ModelConfig resolve_model_config(const ModelOverrides& o) {
  ModelConfig c;
  if (!o.config_path.empty()) {
    require_file(o.config_path, "config");
    std::ifstream in(o.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + o.config_path + ": " + e.what());
    }
    apply_json(c, j);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.iterations) c.iterations = *o.iterations;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.loss_variant) c.loss_variant = parse_loss_variant(*o.loss_variant);
  if (o.ablation) c.flags = ablation_variant(*o.ablation);
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.d_emb) c.d_emb = *o.d_emb;
  if (o.d_h) c.d_h = *o.d_h;
  if (o.min_count) c.min_count = *o.min_count;
  return c;
}

/// Training inputs mapped onto a freshly built vocabulary.
struct PreparedTraining {
  Vocabulary vocab;
  ChargeSet charges;
  DatasetLoad train;
  std::vector<std::size_t> train_support;
  std::optional<EmbeddingTable> embeddings;
};

inline PreparedTraining prepare_training(const std::string& train_path, const std::string& defs_path,
                                         const std::string& embeddings_path, ModelConfig& config) {
  require_file(train_path, "training data");
  require_file(defs_path, "charge definitions");
  if (!embeddings_path.empty()) require_file(embeddings_path, "embeddings");
  const auto facts = read_fact_records(train_path);
  const auto defs = read_definition_records(defs_path);
  if (facts.empty()) throw IngestionError("training file has no records: " + train_path);
  if (defs.empty()) throw IngestionError("definitions file has no records: " + defs_path);

  PreparedTraining p;
  p.vocab = build_vocab_for(facts, defs, config.min_count);
  p.charges = encode_charge_definitions(defs, p.vocab, config.max_def_len);
  config.num_charges = p.charges.size();
  p.train = encode_dataset(facts, p.vocab, p.charges.label_map, config.num_charges, config.max_fact_len);
  if (p.train.examples.empty()) throw IngestionError("no training example has a known charge: " + train_path);
  p.train_support.assign(config.num_charges, 0);
  for (const auto& ex : p.train.examples)
    for (std::size_t c = 0; c < config.num_charges; ++c) p.train_support[c] += ex.labels[c];
  if (!embeddings_path.empty()) {
    Rng rng(config.seed ^ 0xE5B5EDULL);
    p.embeddings = load_embeddings(embeddings_path, p.vocab, rng);
    config.d_emb = p.embeddings->dim();
  }
  config.validate();
  return p;
}

inline DatasetLoad load_eval_set(const std::string& path, const Checkpoint& ck) {
  require_file(path, "evaluation data");
  const auto records = read_fact_records(path);
  if (records.empty()) throw IngestionError("evaluation file has no records: " + path);
  DatasetLoad d = encode_dataset(records, ck.vocab, ck.charges.label_map, ck.config.num_charges, ck.config.max_fact_len);
  if (d.examples.empty()) throw IngestionError("no evaluation example has a charge known to the model: " + path);
  return d;
}

/// Definitions passed next to a checkpoint must name the same charges in the same order.
inline void check_label_map(const std::string& defs_path, const Checkpoint& ck) {
  if (defs_path.empty()) return;
  require_file(defs_path, "charge definitions");
  const auto defs = read_definition_records(defs_path);
  std::vector<std::string> names;
  for (const auto& d : defs) names.push_back(d.name);
  if (names != ck.charges.names())
    throw UsageError("label map mismatch: " + defs_path + " does not list the checkpoint's charges in order");
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string train_path, defs_path, embeddings_path, out_dir;
  ModelOverrides model;
};

struct TrainOutcome {
  std::filesystem::path checkpoint, metrics_log, config;
  std::vector<EpochLog> log;
};

inline TrainOutcome cmd_train(const TrainOptions& o, std::ostream& log = std::cout) {
  ModelConfig config = resolve_model_config(o.model);
  PreparedTraining data = prepare_training(o.train_path, o.defs_path, o.embeddings_path, config);
  const auto out = prepare_out_dir(o.out_dir);

  TrainOutcome result{out / "checkpoint.bin", out / "metrics.jsonl", out / "config.json", {}};
  nlohmann::json resolved;
  resolved["command"] = "train";
  resolved["model"] = to_json(config);
  resolved["seed"] = config.seed;
  resolved["paths"] = {{"train", o.train_path}, {"defs", o.defs_path}, {"embeddings", o.embeddings_path}};
  resolved["data"] = {{"examples", data.train.examples.size()},
                      {"skipped_records", data.train.skipped_records},
                      {"unknown_labels", data.train.unknown_labels},
                      {"vocab_size", data.vocab.size()},
                      {"train_support", data.train_support}};
  write_json(result.config, resolved);

  std::ofstream metrics(result.metrics_log, std::ios::binary | std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + result.metrics_log.string());
  Rng init(config.seed);
  ModelParams params = ModelParams::initialize(config, data.vocab.size(), init, data.embeddings);
  TrainResult trained = train(data.train.examples, data.charges, std::move(params), config, [&](const EpochLog& e) {
    metrics << to_json(e).dump() << '\n';
    metrics.flush();
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu  lr %.6g  loss %.6f  train_acc %.4f\n", e.epoch, e.learning_rate,
                  e.mean_loss, e.train_exact_match);
    log << buf;
  });
  result.log = trained.log;

  Checkpoint ck{config, data.vocab, data.charges, data.train_support, std::move(trained.params)};
  save_checkpoint(result.checkpoint.string(), ck);
  log << "wrote " << result.checkpoint.string() << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint, test_path, defs_path, out_dir;
  std::optional<double> threshold;
  std::size_t support_threshold = 100;
  bool per_label_accuracy = false;
  bool exclude_zero_support = false;
};

inline MetricsReport cmd_eval(const EvalOptions& o, std::ostream& log = std::cout) {
  require_file(o.checkpoint, "checkpoint");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  if (o.threshold) ck.config.threshold = *o.threshold;
  ck.config.validate();
  check_label_map(o.defs_path, ck);
  const DatasetLoad test = load_eval_set(o.test_path, ck);
  const auto out = prepare_out_dir(o.out_dir);

  const Evaluation ev = evaluate(test.examples, ck.charges, ck.params, ck.config);
  MetricsOptions mo;
  mo.accuracy = o.per_label_accuracy ? AccuracyMode::kPerLabel : AccuracyMode::kExactMatch;
  mo.exclude_zero_support = o.exclude_zero_support;
  const MetricsReport report = finalize(ev.counts, mo);
  const auto names = ck.charges.names();

  nlohmann::json j = to_json(report, names);
  j["accuracy_mode"] = o.per_label_accuracy ? "per_label" : "exact_match";
  j["exclude_zero_support"] = o.exclude_zero_support;
  j["threshold"] = ck.config.threshold;
  j["seed"] = ck.config.seed;
  j["model"] = to_json(ck.config);
  j["checkpoint"] = o.checkpoint;
  j["test"] = o.test_path;
  j["skipped_records"] = test.skipped_records;
  j["unknown_labels"] = test.unknown_labels;
  write_json(out / "report.json", j);
  const std::string table = to_text_table(report, names);
  write_text(out / "report.txt", table);
  write_text(out / "per_class.csv", to_csv(per_class_table(report, ck.train_support, o.support_threshold, names)));
  log << table;
  return report;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string checkpoint, input_path, out_dir;
  std::optional<double> threshold;
};

/// Reads `{"fact": str, ...}` lines; other fields are ignored.
inline std::vector<std::string> read_fact_texts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open file: " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("fact") || !j["fact"].is_string())
      throw FormatError(path + ":" + std::to_string(lineno) + ": missing string field 'fact'");
    out.push_back(j["fact"].get<std::string>());
  }
  return out;
}

inline TokenIds encode_fact_text(const std::string& text, const Checkpoint& ck) {
  auto tokens = tokenize(text);
  if (tokens.empty()) throw ContractError("fact is empty after tokenization");
  if (tokens.size() > ck.config.max_fact_len) tokens.resize(ck.config.max_fact_len);
  return ck.vocab.encode(tokens);
}

inline std::size_t cmd_predict(const PredictOptions& o, std::ostream& log = std::cout) {
  require_file(o.checkpoint, "checkpoint");
  require_file(o.input_path, "input");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  if (o.threshold) ck.config.threshold = *o.threshold;
  ck.config.validate();
  const auto texts = read_fact_texts(o.input_path);
  const auto out = prepare_out_dir(o.out_dir);
  const auto names = ck.charges.names();
  const DefinitionCache cache = DefinitionCache::build(ck.params, definition_tokens(ck.charges));

  std::ostringstream lines;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    nlohmann::json row;
    row["index"] = i;
    auto tokens = tokenize(texts[i]);
    if (tokens.empty()) {
      row["error"] = "empty fact";
      lines << row.dump() << '\n';
      continue;
    }
    const ForwardTrace t = forward(encode_fact_text(texts[i], ck), cache, ck.params, ck.config);
    const LabelVector pred = predict(t.probs.data, ck.config.threshold);
    nlohmann::json probs = nlohmann::json::object();
    std::vector<std::string> charges;
    for (std::size_t c = 0; c < names.size(); ++c) {
      probs[names[c]] = t.probs[c];
      if (pred[c]) charges.push_back(names[c]);
    }
    row["probabilities"] = probs;
    row["charges"] = charges;
    lines << row.dump() << '\n';
  }
  write_text(out / "predictions.jsonl", lines.str());
  write_json(out / "config.json", {{"command", "predict"},
                                   {"checkpoint", o.checkpoint},
                                   {"input", o.input_path},
                                   {"threshold", ck.config.threshold},
                                   {"seed", ck.config.seed},
                                   {"model", to_json(ck.config)}});
  log << "wrote " << (out / "predictions.jsonl").string() << " (" << texts.size() << " facts)\n";
  return texts.size();
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
  std::string train_path, test_path, defs_path, embeddings_path, out_dir;
  std::vector<std::string> variants;  // empty: every variant
  std::size_t support_threshold = 100;
  ModelOverrides model;
};

struct AblationRow {
  std::string variant;
  MetricsReport report;
  double rare_mf1 = 0.0;
  std::size_t rare_classes = 0;
};

inline nlohmann::json to_json(const AblationRow& r, std::uint64_t seed) {
  return {{"variant", r.variant}, {"seed", seed},       {"acc", r.report.acc},          {"mp", r.report.mp},
          {"mr", r.report.mr},    {"mf1", r.report.mf1}, {"rare_mf1", r.rare_mf1}, {"rare_classes", r.rare_classes}};
}

inline std::string ablation_table(const std::vector<nlohmann::json>& rows) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-10s %6s %8s %8s %8s %8s %9s\n", "variant", "seed", "Acc", "MP", "MR", "MF1",
                "rare MF1");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %6llu %8.4f %8.4f %8.4f %8.4f %9.4f\n",
                  r.at("variant").get<std::string>().c_str(),
                  static_cast<unsigned long long>(r.at("seed").get<std::uint64_t>()), r.at("acc").get<double>(),
                  r.at("mp").get<double>(), r.at("mr").get<double>(), r.at("mf1").get<double>(),
                  r.at("rare_mf1").get<double>());
    os << buf;
  }
  return os.str();
}

/// Trains and evaluates each variant, appends one row per variant to
/// ablation.jsonl and re-renders ablation.txt from every row on file.
inline std::vector<AblationRow> cmd_ablate(const AblateOptions& o, std::ostream& log = std::cout) {
  require_file(o.test_path, "test data");
  std::vector<std::string> variants = o.variants.empty() ? ablation_variant_names() : o.variants;
  for (const auto& v : variants) ablation_variant(v);  // reject unknown names before any work
  const ModelConfig base = resolve_model_config(o.model);
  ModelConfig probe = base;
  PreparedTraining data = prepare_training(o.train_path, o.defs_path, o.embeddings_path, probe);
  Checkpoint shell{probe, data.vocab, data.charges, data.train_support, {}};
  const DatasetLoad test = load_eval_set(o.test_path, shell);
  const auto out = prepare_out_dir(o.out_dir);

  std::vector<std::size_t> rare;
  for (std::size_t c = 0; c < data.train_support.size(); ++c)
    if (data.train_support[c] < o.support_threshold) rare.push_back(c);

  std::vector<AblationRow> rows;
  std::ofstream jsonl(out / "ablation.jsonl", std::ios::binary | std::ios::app);
  if (!jsonl) throw std::runtime_error("cannot write " + (out / "ablation.jsonl").string());
  for (const auto& v : variants) {
    ModelConfig config = probe;
    config.flags = ablation_variant(v);
    Rng init(config.seed);
    ModelParams params = ModelParams::initialize(config, data.vocab.size(), init, data.embeddings);
    TrainResult trained = train(data.train.examples, data.charges, std::move(params), config);
    const Evaluation ev = evaluate(test.examples, data.charges, trained.params, config);
    AblationRow row{v, finalize(ev.counts), 0.0, rare.size()};
    row.rare_mf1 = macro_f1_over(row.report, rare);
    jsonl << to_json(row, config.seed).dump() << '\n';
    jsonl.flush();
    log << ablation_table({to_json(row, config.seed)});
    rows.push_back(std::move(row));
  }
  jsonl.close();

  std::vector<nlohmann::json> all;
  std::ifstream in(out / "ablation.jsonl");
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) all.push_back(nlohmann::json::parse(line));
  write_text(out / "ablation.txt", ablation_table(all));
  nlohmann::json resolved{{"command", "ablate"}, {"model", to_json(probe)}, {"seed", probe.seed},
                          {"variants", variants}, {"rare_classes", rare},     {"support_threshold", o.support_threshold}};
  write_json(out / "config.json", resolved);
  return rows;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectOptions {
  std::string checkpoint, fact, input_path, out_dir;
  std::size_t index = 0;
};

inline std::string shade(double v) {
  static const char kRamp[] = " .:-=+*#%@";
  const int i = std::clamp(static_cast<int>(v * 10.0), 0, 9);
  return std::string(1, kRamp[i]);
}

inline std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s.substr(0, w) : s + std::string(w - s.size(), ' ');
}

struct AttentionDump {
  nlohmann::json json;
  std::string heatmap;
};

/// Sentence-level charge attention per hop and the word-level map between
/// the fact and the highest-scoring charge's definition.
inline AttentionDump attention_dump(const std::string& text, Checkpoint& ck) {
  const TokenIds ids = encode_fact_text(text, ck);
  const auto fact_tokens = tokenize(text);
  const ForwardTrace t = forward(ids, ck.charges, ck.params, ck.config);
  const auto names = ck.charges.names();
  const std::size_t C = names.size();
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(t.probs.data.begin(), t.probs.data.end()) - t.probs.data.begin());

  AttentionDump d;
  auto& j = d.json;
  j["tokens"] = std::vector<std::string>(fact_tokens.begin(), fact_tokens.begin() + static_cast<std::ptrdiff_t>(ids.size()));
  j["charges"] = names;
  j["probabilities"] = t.probs.data;
  j["fact_attention"] = t.alpha.data;
  j["argmax_charge"] = names[best];
  j["sentence_attention"] = nlohmann::json::array();
  for (std::size_t s = 0; s < t.charge_attention.size(); ++s)
    j["sentence_attention"].push_back({{"iteration", s + 1}, {"weights", t.charge_attention[s].data}});
  const auto def_tokens = ck.vocab.decode(ck.charges.definitions[best].tokens);
  j["definition_tokens"] = def_tokens;
  nlohmann::json beta = nlohmann::json::array();
  if (!t.beta.empty()) {
    const Tensor& b = t.beta[best];
    for (std::size_t k = 0; k < b.rows(); ++k) beta.push_back(std::vector<double>(b.row(k).begin(), b.row(k).end()));
  }
  j["word_attention"] = beta;
  j["seed"] = ck.config.seed;

  std::ostringstream os;
  char buf[64];
  os << "sentence-level attention g(t)\n";
  std::size_t w = 8;
  for (const auto& n : names) w = std::max(w, n.size() + 1);
  os << pad_right("", 6);
  for (const auto& n : names) os << pad_right(n, w);
  os << '\n';
  if (t.charge_attention.empty()) os << "  (disabled in this model)\n";
  for (std::size_t s = 0; s < t.charge_attention.size(); ++s) {
    os << pad_right("t=" + std::to_string(s + 1), 6);
    for (std::size_t c = 0; c < C; ++c) {
      std::snprintf(buf, sizeof buf, "%.4f", t.charge_attention[s][c]);
      os << pad_right(buf, w);
    }
    os << '\n';
  }
  os << "\nword-level attention, fact tokens x definition of " << names[best] << "\n";
  if (t.beta.empty()) {
    os << "  (disabled in this model)\n";
  } else {
    std::size_t tw = 4;
    for (std::size_t k = 0; k < ids.size(); ++k) tw = std::max(tw, fact_tokens[k].size() + 1);
    os << "columns:";
    for (std::size_t jdx = 0; jdx < def_tokens.size(); ++jdx) os << ' ' << jdx % 10 << '=' << def_tokens[jdx];
    os << "\nshading: ' ' < 0.1 ... '@' >= 0.9\n" << pad_right("", tw);
    for (std::size_t jdx = 0; jdx < def_tokens.size(); ++jdx) os << jdx % 10;
    os << '\n';
    const Tensor& b = t.beta[best];
    for (std::size_t k = 0; k < b.rows(); ++k) {
      os << pad_right(fact_tokens[k], tw);
      for (std::size_t jdx = 0; jdx < b.cols(); ++jdx) os << shade(b.at(k, jdx));
      os << '\n';
    }
  }
  d.heatmap = os.str();
  return d;
}

inline AttentionDump cmd_inspect(const InspectOptions& o, std::ostream& log = std::cout) {
  require_file(o.checkpoint, "checkpoint");
  if (o.fact.empty() == o.input_path.empty()) throw UsageError("give exactly one of --fact or --input");
  std::string text = o.fact;
  if (!o.input_path.empty()) {
    require_file(o.input_path, "input");
    const auto texts = read_fact_texts(o.input_path);
    if (o.index >= texts.size())
      throw UsageError("--index " + std::to_string(o.index) + " out of range for " + std::to_string(texts.size()) +
                       " facts in " + o.input_path);
    text = texts[o.index];
  }
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const AttentionDump d = attention_dump(text, ck);
  const auto out = prepare_out_dir(o.out_dir);
  write_json(out / "attention.json", d.json);
  write_text(out / "heatmap.txt", d.heatmap);
  log << d.heatmap;
  return d;
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenSyntheticOptions {
  SyntheticSpec spec;
  std::string out_dir;
};

inline SyntheticCorpus cmd_gen_synthetic(const GenSyntheticOptions& o, std::ostream& log = std::cout) {
  const SyntheticCorpus corpus = generate_synthetic_corpus(o.spec);
  const auto out = prepare_out_dir(o.out_dir);
  write_synthetic_texts((out / "train.jsonl").string(), corpus.train);
  write_synthetic_texts((out / "test.jsonl").string(), corpus.test);
  write_synthetic_definitions((out / "definitions.jsonl").string(), corpus.definitions);
  std::vector<std::string> files{"train.jsonl", "test.jsonl", "definitions.jsonl"};
  if (!corpus.embeddings.empty()) {
    write_embeddings((out / "embeddings.txt").string(), corpus.embeddings);
    files.push_back("embeddings.txt");
  }
  const auto& s = o.spec;
  nlohmann::json support = nlohmann::json::object();
  for (std::size_t c = 0; c < corpus.train_support.size(); ++c) support[synthetic_charge_name(c)] = corpus.train_support[c];
  nlohmann::json manifest{
      {"seed", s.seed},
      {"num_classes", s.num_classes},
      {"train_per_class", s.train_per_class},
      {"test_per_class", s.test_per_class},
      {"rare_classes", std::vector<std::size_t>(s.rare_classes.begin(), s.rare_classes.end())},
      {"rare_train_count", std::min<std::size_t>(s.rare_train_count, 10)},
      {"rare_unseen_forms", s.rare_unseen_forms},
      {"forms_per_term", s.forms_per_term},
      {"noise_vocab", s.noise_vocab},
      {"embedding_dim", s.embedding_dim},
      {"train_support", support},
      {"train_examples", corpus.train.size()},
      {"test_examples", corpus.test.size()},
      {"files", files}};
  write_json(out / "manifest.json", manifest);
  log << "wrote " << corpus.train.size() << " train, " << corpus.test.size() << " test facts and "
      << corpus.definitions.size() << " definitions to " << out.string() << "\n";
  return corpus;
}

}  // namespace chargenet::cli
