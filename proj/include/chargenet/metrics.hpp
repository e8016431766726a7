#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/data/dataset.hpp"
#include "chargenet/errors.hpp"

namespace chargenet {

/// Per-class tp/fp/fn plus exact-match and per-label agreement counters.
/// Counts from independent shards combine with merge().
struct ConfusionCounts {
  std::vector<std::size_t> tp, fp, fn;
  std::size_t examples = 0;
  std::size_t exact_matches = 0;
  std::size_t label_agreements = 0;

  explicit ConfusionCounts(std::size_t num_classes = 0) : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {}

  std::size_t num_classes() const { return tp.size(); }

  void merge(const ConfusionCounts& o) {
    if (o.num_classes() != num_classes()) throw DimensionError("merge: class counts differ");
    for (std::size_t c = 0; c < tp.size(); ++c) {
      tp[c] += o.tp[c];
      fp[c] += o.fp[c];
      fn[c] += o.fn[c];
    }
    examples += o.examples;
    exact_matches += o.exact_matches;
    label_agreements += o.label_agreements;
  }
};

inline void accumulate(const LabelVector& pred, const LabelVector& gold, ConfusionCounts& counts) {
  if (pred.size() != gold.size() || pred.size() != counts.num_classes())
    throw ContractError("accumulate: prediction/gold/count lengths differ (" + std::to_string(pred.size()) + ", " +
                        std::to_string(gold.size()) + ", " + std::to_string(counts.num_classes()) + ")");
  bool exact = true;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const bool p = pred[c] != 0, g = gold[c] != 0;
    if (p && g) ++counts.tp[c];
    else if (p) ++counts.fp[c];
    else if (g) ++counts.fn[c];
    if (p == g) ++counts.label_agreements;
    else exact = false;
  }
  ++counts.examples;
  if (exact) ++counts.exact_matches;
}

enum class AccuracyMode { kExactMatch, kPerLabel };

struct MetricsOptions {
  AccuracyMode accuracy = AccuracyMode::kExactMatch;
  bool exclude_zero_support = false;  // drop classes with tp + fn == 0 from the macro means
};

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;  // gold occurrences in the evaluated set
};

struct MetricsReport {
  double acc = 0.0, mp = 0.0, mr = 0.0, mf1 = 0.0;
  std::size_t examples = 0;
  std::vector<ClassMetrics> per_class;
};

namespace detail {
inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

/// Per-class P/R/F1 with 0/0 := 0, unweighted macro means over classes, and
/// accuracy as the exact-match ratio (or per-label agreement).
inline MetricsReport finalize(const ConfusionCounts& counts, const MetricsOptions& options = {}) {
  if (counts.examples == 0) throw ContractError("finalize: no evaluated examples");
  MetricsReport r;
  r.examples = counts.examples;
  const std::size_t C = counts.num_classes();
  std::size_t included = 0;
  for (std::size_t c = 0; c < C; ++c) {
    ClassMetrics m;
    m.precision = detail::ratio(counts.tp[c], counts.tp[c] + counts.fp[c]);
    m.recall = detail::ratio(counts.tp[c], counts.tp[c] + counts.fn[c]);
    m.f1 = (m.precision + m.recall) == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.support = counts.tp[c] + counts.fn[c];
    r.per_class.push_back(m);
    if (options.exclude_zero_support && m.support == 0) continue;
    r.mp += m.precision;
    r.mr += m.recall;
    r.mf1 += m.f1;
    ++included;
  }
  if (included > 0) {
    r.mp /= static_cast<double>(included);
    r.mr /= static_cast<double>(included);
    r.mf1 /= static_cast<double>(included);
  }
  r.acc = options.accuracy == AccuracyMode::kExactMatch
              ? detail::ratio(counts.exact_matches, counts.examples)
              : detail::ratio(counts.label_agreements, counts.examples * C);
  return r;
}

struct ClassRow {
  std::size_t class_id = 0;
  std::string name;
  std::size_t train_support = 0;
  double f1 = 0.0;
};

/// Classes whose training support is strictly below `support_threshold`,
/// sorted by support then class id.
inline std::vector<ClassRow> per_class_table(const MetricsReport& report, const std::vector<std::size_t>& train_support,
                                             std::size_t support_threshold, const std::vector<std::string>& names = {}) {
  if (train_support.size() != report.per_class.size()) throw DimensionError("per_class_table: support length mismatch");
  std::vector<ClassRow> rows;
  for (std::size_t c = 0; c < train_support.size(); ++c) {
    if (train_support[c] >= support_threshold) continue;
    rows.push_back({c, c < names.size() ? names[c] : std::to_string(c), train_support[c], report.per_class[c].f1});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ClassRow& a, const ClassRow& b) { return a.train_support < b.train_support; });
  return rows;
}

/// Macro F1 restricted to `classes`.
inline double macro_f1_over(const MetricsReport& report, const std::vector<std::size_t>& classes) {
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t c : classes) s += report.per_class.at(c).f1;
  return s / static_cast<double>(classes.size());
}

struct VarianceResult {
  double value = 0.0;
  std::vector<std::size_t> classes;  // classes that entered the average
  std::vector<std::size_t> skipped;  // selected but with fewer than 2 samples
};

/// Average intra-class variance: for each of the `top_k` most frequent
/// classes, the population variance of every dimension averaged over
/// dimensions; then the mean over those classes. Classes with fewer than
/// two samples are skipped and reported.
inline VarianceResult intra_class_variance(const std::map<std::size_t, std::vector<std::vector<double>>>& groups,
                                           std::size_t top_k) {
  std::vector<std::pair<std::size_t, std::size_t>> by_size;  // (class, count)
  for (const auto& [c, v] : groups) by_size.emplace_back(c, v.size());
  std::stable_sort(by_size.begin(), by_size.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top_k < by_size.size()) by_size.resize(top_k);

  VarianceResult r;
  double total = 0.0;
  for (const auto& [c, n] : by_size) {
    const auto& samples = groups.at(c);
    if (n < 2) {
      r.skipped.push_back(c);
      continue;
    }
    const std::size_t d = samples.front().size();
    if (d == 0) throw DimensionError("intra_class_variance: empty representation");
    double class_var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (const auto& s : samples) {
        if (s.size() != d) throw DimensionError("intra_class_variance: ragged representations");
        mean += s[j];
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const auto& s : samples) var += (s[j] - mean) * (s[j] - mean);
      class_var += var / static_cast<double>(n);
    }
    total += class_var / static_cast<double>(d);
    r.classes.push_back(c);
  }
  if (!r.classes.empty()) r.value = total / static_cast<double>(r.classes.size());
  return r;
}

// ---------------------------------------------------------------------------
// Report rendering

inline nlohmann::json to_json(const MetricsReport& r, const std::vector<std::string>& names = {}) {
  nlohmann::json j;
  j["acc"] = r.acc;
  j["mp"] = r.mp;
  j["mr"] = r.mr;
  j["mf1"] = r.mf1;
  j["examples"] = r.examples;
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    pc.push_back({{"class", c},
                  {"name", c < names.size() ? names[c] : std::to_string(c)},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1},
                  {"support", m.support}});
  }
  return j;
}

inline std::string to_text_table(const MetricsReport& r, const std::vector<std::string>& names = {}) {
  std::size_t w = 5;
  for (const auto& n : names) w = std::max(w, n.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "Acc %.4f  MP %.4f  MR %.4f  MF1 %.4f  (n = %zu)\n\n", r.acc, r.mp, r.mr, r.mf1,
                r.examples);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %8s\n", static_cast<int>(w), "class", "precision", "recall", "f1",
                "support");
  os << buf;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %8zu\n", static_cast<int>(w), name.c_str(), m.precision,
                  m.recall, m.f1, m.support);
    os << buf;
  }
  return os.str();
}

inline std::string to_csv(const std::vector<ClassRow>& rows) {
  std::ostringstream os;
  os << "class,name,train_support,f1\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.f1);
    os << r.class_id << ',' << r.name << ',' << r.train_support << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace chargenet
