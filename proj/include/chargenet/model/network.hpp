#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "chargenet/data/dataset.hpp"
#include "chargenet/data/embeddings.hpp"
#include "chargenet/encoders.hpp"
#include "chargenet/interaction.hpp"
#include "chargenet/model/config.hpp"

namespace chargenet {

/// Every trainable tensor of the network. Components disabled by the
/// ablation flags are still allocated (and registered with the optimizer)
/// but never reached by the forward pass, so their gradients stay zero.
struct ModelParams {
  EmbeddingTable embedding;
  GruCell fact_gru;
  SelfAttentionPool fact_attention;
  ConvDefEncoder definition_encoder;
  EpisodicAttention charge_attention;
  GruCell aggregator_gru;
  DenseLayer fc_s;
  DenseLayer fc_w;
  DenseLayer fc_final;
  DenseLayer classifier;

  ModelParams() = default;
  ModelParams(const ModelParams&) = default;
  ModelParams& operator=(const ModelParams&) = default;

  /// Seeded initialization. When `embedding` is given it is used as is;
  /// otherwise rows are drawn uniform(-0.1, 0.1).
  static ModelParams initialize(const ModelConfig& config, std::size_t vocab_size, Rng& rng,
                                std::optional<EmbeddingTable> embedding = std::nullopt) {
    config.validate();
    ModelParams p;
    if (embedding) {
      if (embedding->vocab_size() != vocab_size || embedding->dim() != config.d_emb)
        throw DimensionError("embedding table " + shape_str(embedding->weights.shape) + " does not match vocab " +
                             std::to_string(vocab_size) + " x d_emb " + std::to_string(config.d_emb));
      p.embedding = std::move(*embedding);
      p.embedding.weights.requires_grad = p.embedding.trainable;
    } else {
      p.embedding = random_embeddings(vocab_size, config.d_emb, rng);
    }
    const std::size_t d = config.d_h;
    p.fact_gru = GruCell(config.d_emb, d, rng);
    p.fact_attention = SelfAttentionPool(d, config.attn_width(), rng);
    p.definition_encoder = ConvDefEncoder(config.d_emb, d, config.conv_window, rng);
    p.charge_attention = EpisodicAttention(d, config.episodic_width(), rng);
    p.aggregator_gru = GruCell(d, d, rng);
    p.fc_s = DenseLayer(3 * d, d, rng);
    p.fc_w = DenseLayer(2 * d, d, rng);
    p.fc_final = DenseLayer(config.flags.final_blocks() * d, d, rng);
    p.classifier = DenseLayer(d, config.num_charges, rng);
    // Logit of a 1/C label prior.
    if (config.prior_output_bias && config.num_charges > 1)
      std::fill(p.classifier.b.data.begin(), p.classifier.b.data.end(),
                -std::log(static_cast<double>(config.num_charges - 1)));
    return p;
  }

  /// Stable name -> tensor listing; the order defines optimizer and
  /// checkpoint layout.
  NamedTensors named() {
    NamedTensors out;
    out.emplace_back("embedding", &embedding.weights);
    fact_gru.collect("fact_gru", out);
    fact_attention.collect("fact_attention", out);
    definition_encoder.collect("definition_encoder", out);
    charge_attention.collect("charge_attention", out);
    aggregator_gru.collect("aggregator_gru", out);
    fc_s.collect("fc_s", out);
    fc_w.collect("fc_w", out);
    fc_final.collect("fc_final", out);
    classifier.collect("classifier", out);
    return out;
  }

  std::vector<Tensor*> trainable() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named())
      if (t->requires_grad) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
  }
};

/// Parameters recorded on one tape.
struct BoundModel {
  const Tensor* embedding_table = nullptr;
  std::optional<Var> embedding;  // absent in inference mode
  GruCell::Bound fact_gru;
  SelfAttentionPool::Bound fact_attention;
  ConvDefEncoder::Bound definition_encoder;
  EpisodicAttention::Bound charge_attention;
  GruCell::Bound aggregator_gru;
  DenseLayer::Bound fc_s, fc_w, fc_final, classifier;
  Tape* tape = nullptr;

  /// Embedded rows for `ids`. In inference mode the lookup happens off-tape.
  Var embed(const TokenIds& ids) const {
    if (embedding) return gather_rows(*embedding, ids);
    const std::size_t d = embedding_table->cols();
    Tensor out(Shape{ids.size(), d});
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (ids[q] >= embedding_table->rows()) throw DimensionError("token id out of vocabulary range");
      std::copy(embedding_table->row(ids[q]).begin(), embedding_table->row(ids[q]).end(), out.data.begin() + q * d);
    }
    return tape->constant(std::move(out));
  }
};

/// Binds `params` onto `tape`. With `trainable` false every parameter is
/// recorded as a constant and no gradients flow.
inline BoundModel bind(Tape& tape, ModelParams& params, bool trainable = true) {
  auto as_constant = [&](Tensor& t) { return tape.constant(Tensor(t.shape, t.data)); };
  auto gru = [&](GruCell& g) -> GruCell::Bound {
    if (trainable) return g.bind(tape);
    return {as_constant(g.w_z), as_constant(g.u_z), as_constant(g.b_z), as_constant(g.w_r), as_constant(g.u_r),
            as_constant(g.b_r), as_constant(g.w_n), as_constant(g.u_n), as_constant(g.b_n)};
  };
  auto dense = [&](DenseLayer& l) -> DenseLayer::Bound {
    if (trainable) return l.bind(tape);
    return {as_constant(l.w), as_constant(l.b)};
  };
  BoundModel b;
  b.tape = &tape;
  b.embedding_table = &params.embedding.weights;
  if (trainable) b.embedding = tape.param(params.embedding.weights);
  b.fact_gru = gru(params.fact_gru);
  b.fact_attention = trainable ? params.fact_attention.bind(tape)
                               : SelfAttentionPool::Bound{as_constant(params.fact_attention.w1),
                                                          as_constant(params.fact_attention.w2)};
  b.definition_encoder = trainable ? params.definition_encoder.bind(tape)
                                   : ConvDefEncoder::Bound{as_constant(params.definition_encoder.kernel),
                                                           as_constant(params.definition_encoder.bias),
                                                           params.definition_encoder.window};
  b.charge_attention = trainable ? params.charge_attention.bind(tape)
                                 : EpisodicAttention::Bound{as_constant(params.charge_attention.w1),
                                                            as_constant(params.charge_attention.w2)};
  b.aggregator_gru = gru(params.aggregator_gru);
  b.fc_s = dense(params.fc_s);
  b.fc_w = dense(params.fc_w);
  b.fc_final = dense(params.fc_final);
  b.classifier = dense(params.classifier);
  return b;
}

inline std::vector<TokenIds> definition_tokens(const ChargeSet& charges) {
  std::vector<TokenIds> out;
  for (const auto& d : charges.definitions) out.push_back(d.tokens);
  return out;
}

inline EncodedDefinitions encode_definitions(const BoundModel& model, const std::vector<TokenIds>& defs) {
  if (defs.empty()) throw ContractError("encode_all_definitions: no definitions");
  EncodedDefinitions out;
  std::vector<Var> rows;
  for (const auto& ids : defs) {
    if (ids.empty()) throw ContractError("encode_definition: empty definition");
    out.per_charge.push_back(encode_definition(model.definition_encoder, model.embed(ids), token_mask(ids)));
    rows.push_back(out.per_charge.back().summary);
  }
  out.summaries = stack_rows(rows);
  return out;
}

/// Frozen definition encodings for inference; copied onto each example's
/// tape as constants.
struct DefinitionCache {
  std::vector<Tensor> positions;
  std::vector<Mask> masks;
  Tensor summaries;

  static DefinitionCache build(ModelParams& params, const std::vector<TokenIds>& defs) {
    Tape tape;
    const BoundModel m = bind(tape, params, false);
    const EncodedDefinitions enc = encode_definitions(m, defs);
    DefinitionCache c;
    for (const auto& d : enc.per_charge) {
      c.positions.push_back(d.positions.value());
      c.masks.push_back(d.mask);
    }
    c.summaries = enc.summaries.value();
    return c;
  }

  EncodedDefinitions materialize(Tape& tape) const {
    EncodedDefinitions out;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      DefinitionEncoding d;
      d.positions = tape.constant(positions[i]);
      d.summary = tape.constant(Tensor::vector(std::vector<double>(summaries.row(i).begin(), summaries.row(i).end())));
      d.mask = masks[i];
      out.per_charge.push_back(std::move(d));
    }
    out.summaries = tape.constant(summaries);
    return out;
  }
};

/// Tape handles for one example's forward pass.
struct ForwardGraph {
  FactEncoding fact;
  std::optional<MemoryTrace> memory;
  std::optional<Var> charge_weights;  // g(T), or the uniform 1/C vector
  std::optional<WordAlignment> alignment;
  std::optional<TokenRepresentation> token;
  std::optional<Var> fs;
  std::optional<Var> fw;
  Var final_input;
  Var final_rep;
  Var logits;
  Var probs;
};

/// Runs the fact encoder, the enabled auxiliary branches and the output
/// layer. `defs` may be null only when no branch needs definitions.
inline ForwardGraph forward_graph(const BoundModel& model, const EncodedDefinitions* defs, const TokenIds& tokens,
                                  const ModelConfig& config) {
  config.validate();
  if (tokens.empty()) throw ContractError("forward: empty fact");
  const AblationFlags& f = config.flags;
  Tape& tape = *model.tape;
  const Mask mask = token_mask(tokens);

  ForwardGraph g;
  g.fact = encode_fact(model.fact_gru, model.fact_attention, model.embed(tokens), mask);

  if (f.needs_definitions()) {
    if (defs == nullptr) throw ContractError("forward: definitions required by the enabled branches");
    if (defs->size() != config.num_charges)
      throw ContractError("forward: " + std::to_string(defs->size()) + " definitions for C = " +
                          std::to_string(config.num_charges));
  }
  if (f.needs_memory()) {
    g.memory = identify_charges(model.charge_attention, g.fact.fc, defs->summaries, config.iterations);
  }
  if (f.use_fs) g.fs = charge_related_representation(model.fc_s, g.fact.fc, *g.memory);
  if (f.use_fw) {
    if (f.use_gi) {
      g.charge_weights = g.memory->attention.back();
    } else {
      const std::size_t C = defs->size();
      g.charge_weights = tape.constant(Tensor::vector(std::vector<double>(C, 1.0 / static_cast<double>(C))));
    }
    g.alignment = align_words(g.fact.hidden, *defs, *g.charge_weights, config.align_top_k);
    g.token = charge_token_related_representation(model.aggregator_gru, model.fc_w, g.alignment->combined,
                                                  g.fact.fc, mask);
    g.fw = g.token->fw;
  }

  std::vector<Var> blocks;
  if (f.use_fc) blocks.push_back(g.fact.fc);
  if (f.use_fs) blocks.push_back(*g.fs);
  if (f.use_fw) blocks.push_back(*g.fw);
  g.final_input = concat(blocks);
  g.final_rep = dense_tanh(model.fc_final, g.final_input);
  g.logits = add_bias(matmul_nt(g.final_rep, model.classifier.w), model.classifier.b);
  g.probs = sigmoid(g.logits);
  return g;
}

/// Values of every intermediate of one forward pass.
struct ForwardTrace {
  Tensor hidden;                  // H
  Tensor alpha;                   // fact attention
  Tensor fc;                      // Fc
  std::vector<Tensor> definition_positions;  // E per charge
  Tensor definition_summaries;    // L
  std::vector<Tensor> memories;   // m_0..m_T (empty when the memory branch is off)
  std::vector<Tensor> charge_attention;  // g(1)..g(T)
  Tensor charge_weights;          // weights used for word alignment
  std::vector<Tensor> beta;       // per charge, m x n_i
  std::vector<Tensor> projected;  // per charge h^{l_i}
  Tensor combined;                // h^L
  Tensor aggregator_last;         // last hidden of the aggregator GRU
  Tensor fs, fw, final_input, final_rep, logits, probs;
};

inline ForwardTrace snapshot(const ForwardGraph& g, const EncodedDefinitions* defs) {
  ForwardTrace t;
  t.hidden = g.fact.hidden.value();
  t.alpha = g.fact.alpha.value();
  t.fc = g.fact.fc.value();
  if (defs) {
    for (const auto& d : defs->per_charge) t.definition_positions.push_back(d.positions.value());
    t.definition_summaries = defs->summaries.value();
  }
  if (g.memory) {
    for (const Var& m : g.memory->memories) t.memories.push_back(m.value());
    for (const Var& a : g.memory->attention) t.charge_attention.push_back(a.value());
  }
  if (g.charge_weights) t.charge_weights = g.charge_weights->value();
  if (g.alignment) {
    for (const Var& b : g.alignment->beta) t.beta.push_back(b.value());
    for (const Var& p : g.alignment->projected) t.projected.push_back(p.value());
    t.combined = g.alignment->combined.value();
  }
  if (g.token) t.aggregator_last = g.token->last_hidden.value();
  if (g.fs) t.fs = g.fs->value();
  if (g.fw) t.fw = g.fw->value();
  t.final_input = g.final_input.value();
  t.final_rep = g.final_rep.value();
  t.logits = g.logits.value();
  t.probs = g.probs.value();
  return t;
}

/// Inference forward pass for one fact; returns every intermediate.
inline ForwardTrace forward(const TokenIds& tokens, const ChargeSet& charges, ModelParams& params,
                            const ModelConfig& config) {
  Tape tape;
  const BoundModel m = bind(tape, params, false);
  std::optional<EncodedDefinitions> defs;
  if (config.flags.needs_definitions()) defs = encode_definitions(m, definition_tokens(charges));
  const ForwardGraph g = forward_graph(m, defs ? &*defs : nullptr, tokens, config);
  return snapshot(g, defs ? &*defs : nullptr);
}

/// Same as forward() but reusing frozen definition encodings.
inline ForwardTrace forward(const TokenIds& tokens, const DefinitionCache& cache, ModelParams& params,
                            const ModelConfig& config) {
  Tape tape;
  const BoundModel m = bind(tape, params, false);
  std::optional<EncodedDefinitions> defs;
  if (config.flags.needs_definitions()) defs = cache.materialize(tape);
  const ForwardGraph g = forward_graph(m, defs ? &*defs : nullptr, tokens, config);
  return snapshot(g, defs ? &*defs : nullptr);
}

}  // namespace chargenet
