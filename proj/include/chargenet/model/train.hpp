#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/metrics.hpp"
#include "chargenet/model/loss.hpp"
#include "chargenet/model/network.hpp"
#include "chargenet/numeric/adam.hpp"

namespace chargenet {

struct EpochLog {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;         // summed over examples
  double mean_loss = 0.0;
  double train_exact_match = 0.0;  // predictions made during the epoch, before each update
  double mean_grad_norm = 0.0;     // pre-clipping
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"learning_rate", e.learning_rate},
          {"loss", e.loss},
          {"mean_loss", e.mean_loss},
          {"train_exact_match", e.train_exact_match},
          {"mean_grad_norm", e.mean_grad_norm}};
}

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;
/// Sees the raw gradients of each batch (after backward, before clipping).
using BatchCallback = std::function<void(std::size_t epoch, ModelParams&)>;

/// Seeded minibatch training with Adam. Each batch is one tape: the
/// definitions are encoded once on it and shared by all of the batch's
/// examples, so they are re-encoded after every parameter update.
inline TrainResult train(const std::vector<FactExample>& train_set, const ChargeSet& charges, ModelParams params,
                         const ModelConfig& config, const EpochCallback& on_epoch = {},
                         const BatchCallback& on_batch = {}) {
  config.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (charges.size() != config.num_charges)
    throw ConfigError("train: " + std::to_string(charges.size()) + " charge definitions for C = " +
                      std::to_string(config.num_charges));
  for (const auto& ex : train_set)
    if (ex.labels.size() != config.num_charges) throw DimensionError("train: label vector length differs from C");

  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<Tensor*> registered = params.trainable();
  AdamState adam(registered, config.learning_rate);
  const std::vector<TokenIds> defs = definition_tokens(charges);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    adam.learning_rate =
        scheduled_learning_rate(config.learning_rate, epoch, config.lr_halve_every, config.lr_halve_offset);
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = adam.learning_rate;
    std::size_t correct = 0, batches = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      params.zero_grad();
      Tape tape;
      const BoundModel model = bind(tape, params, true);
      std::optional<EncodedDefinitions> enc;
      if (config.flags.needs_definitions()) enc = encode_definitions(model, defs);

      std::vector<Var> losses;
      for (std::size_t q = start; q < end; ++q) {
        const FactExample& ex = train_set[order[q]];
        const ForwardGraph g = forward_graph(model, enc ? &*enc : nullptr, ex.tokens, config);
        if (predict(g.probs.value().data, config.threshold) == ex.labels) ++correct;
        losses.push_back(multilabel_loss(g.probs, ex.labels, config.loss_variant));
      }
      const Var batch_loss = sum(stack_rows(losses));
      const double value = batch_loss.value()[0];
      if (!std::isfinite(value))
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      log.loss += value;
      tape.backward(batch_loss);
      if (on_batch) on_batch(epoch, params);
      log.mean_grad_norm += clip_grad_norm(registered, config.clip_norm);
      adam_step(registered, adam);
      ++batches;
    }
    log.mean_loss = log.loss / static_cast<double>(train_set.size());
    log.train_exact_match = static_cast<double>(correct) / static_cast<double>(train_set.size());
    log.mean_grad_norm /= static_cast<double>(std::max<std::size_t>(batches, 1));
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.params = std::move(params);
  return result;
}

struct Evaluation {
  std::vector<std::vector<double>> probabilities;
  std::vector<LabelVector> predictions;
  ConfusionCounts counts;
};

/// Runs inference over `examples` with frozen parameters.
inline Evaluation evaluate(const std::vector<FactExample>& examples, const ChargeSet& charges, ModelParams& params,
                           const ModelConfig& config) {
  config.validate();
  const DefinitionCache cache = DefinitionCache::build(params, definition_tokens(charges));
  Evaluation out;
  out.counts = ConfusionCounts(config.num_charges);
  for (const auto& ex : examples) {
    Tape tape;
    const BoundModel model = bind(tape, params, false);
    std::optional<EncodedDefinitions> enc;
    if (config.flags.needs_definitions()) enc = cache.materialize(tape);
    const ForwardGraph g = forward_graph(model, enc ? &*enc : nullptr, ex.tokens, config);
    out.probabilities.push_back(g.probs.value().data);
    out.predictions.push_back(predict(out.probabilities.back(), config.threshold));
    accumulate(out.predictions.back(), ex.labels, out.counts);
  }
  return out;
}

/// Representation stages used by the intra-class variance diagnostic:
/// Fc, [Fc; Fs] and the final representation F.
struct StageVariances {
  VarianceResult fc, fc_fs, final_rep;
};

/// Groups single-label examples by class and measures the average
/// intra-class variance of each stage over the `top_k` largest classes.
inline StageVariances representation_variances(const std::vector<FactExample>& examples, const ChargeSet& charges,
                                               ModelParams& params, const ModelConfig& config, std::size_t top_k = 5) {
  const DefinitionCache cache = DefinitionCache::build(params, definition_tokens(charges));
  std::map<std::size_t, std::vector<std::vector<double>>> fc, fc_fs, fin;
  for (const auto& ex : examples) {
    const auto positives = std::count(ex.labels.begin(), ex.labels.end(), std::uint8_t{1});
    if (positives != 1) continue;
    const std::size_t c = static_cast<std::size_t>(std::find(ex.labels.begin(), ex.labels.end(), 1) - ex.labels.begin());
    const ForwardTrace t = forward(ex.tokens, cache, params, config);
    fc[c].push_back(t.fc.data);
    std::vector<double> joined = t.fc.data;
    joined.insert(joined.end(), t.fs.data.begin(), t.fs.data.end());
    fc_fs[c].push_back(std::move(joined));
    fin[c].push_back(t.final_rep.data);
  }
  return {intra_class_variance(fc, top_k), intra_class_variance(fc_fs, top_k), intra_class_variance(fin, top_k)};
}

}  // namespace chargenet
