#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "chargenet/encoders.hpp"

namespace chargenet {

/// Scores each charge against the fact and the current memory:
///   z_i = [L_i o Fc; L_i o m_t; |L_i - Fc|; |L_i - m_t|]
///   A_i = W2a tanh(W1a z_i)
/// W1a is (d_a' x 4 d_h), W2a is (1 x d_a').
struct EpisodicAttention {
  Tensor w1, w2;

  EpisodicAttention() = default;
  EpisodicAttention(std::size_t d_h, std::size_t d_a, Rng& rng)
      : w1(init_weight(d_a, 4 * d_h, rng)), w2(init_weight(1, d_a, rng)) {}

  void collect(const std::string& prefix, NamedTensors& out) {
    out.emplace_back(prefix + ".w1", &w1);
    out.emplace_back(prefix + ".w2", &w2);
  }

  struct Bound {
    Var w1, w2;
  };
  Bound bind(Tape& t) { return {t.param(w1), t.param(w2)}; }
};

/// tanh(W x + b) over a concatenated input.
struct DenseLayer {
  Tensor w, b;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Rng& rng) : w(init_weight(out, in, rng)), b(init_bias(out)) {}

  void collect(const std::string& prefix, NamedTensors& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }

  struct Bound {
    Var w, b;
  };
  Bound bind(Tape& t) { return {t.param(w), t.param(b)}; }
};

inline Var dense_tanh(const DenseLayer::Bound& fc, Var x) { return tanh(add_bias(matmul_nt(x, fc.w), fc.b)); }

/// memories[0] == Fc, memories[t] for t = 1..T; attention[t-1] holds g(t).
struct MemoryTrace {
  std::vector<Var> memories;
  std::vector<Var> attention;
};

namespace detail {

inline Var repeat_rows(Var v, std::size_t count) { return stack_rows(std::vector<Var>(count, v)); }

}  // namespace detail

/// Iterative charge identification. For t = 0..T-1, g(t+1) is the softmax
/// over charges of A_i(L_i, Fc, m_t) and m_{t+1} = sum_i g_i(t+1) L_i.
inline MemoryTrace identify_charges(const EpisodicAttention::Bound& attn, Var fc, Var summaries,
                                    std::size_t iterations) {
  if (iterations < 1) throw ContractError("identify_charges: T must be >= 1");
  const std::size_t C = summaries.rows();
  if (C == 0) throw ContractError("identify_charges: no charges");
  if (fc.value().rank() != 1 || fc.value().size() != summaries.cols())
    throw ContractError("identify_charges: Fc " + shape_str(fc.shape()) + " does not match charge summaries " +
                        shape_str(summaries.shape()));
  if (attn.w1.cols() != 4 * summaries.cols())
    throw ContractError("identify_charges: attention expects z of width " + std::to_string(attn.w1.cols()));

  MemoryTrace trace;
  trace.memories.push_back(fc);
  const Var fc_rows = detail::repeat_rows(fc, C);
  const Var fc_abs = abs(sub(summaries, fc_rows));
  const Var fc_prod = mul(summaries, fc_rows);
  for (std::size_t t = 0; t < iterations; ++t) {
    const Var mem_rows = detail::repeat_rows(trace.memories.back(), C);
    const Var z = concat({fc_prod, mul(summaries, mem_rows), fc_abs, abs(sub(summaries, mem_rows))}, 1);
    const Var scores = reshape(matmul_nt(tanh(matmul_nt(z, attn.w1)), attn.w2), Shape{C});
    const Var g = softmax(scores);
    trace.attention.push_back(g);
    trace.memories.push_back(matmul(g, summaries));
  }
  return trace;
}

/// Fs = tanh(fc([Fc; m_T; m_{T-1}])). With T = 1, m_{T-1} is m_0 = Fc.
inline Var charge_related_representation(const DenseLayer::Bound& fc_s, Var fc, const MemoryTrace& trace) {
  const std::size_t T = trace.memories.size() - 1;
  if (T < 1) throw ContractError("charge_related_representation: empty memory trace");
  return dense_tanh(fc_s, concat({fc, trace.memories[T], trace.memories[T - 1]}));
}

struct WordAlignment {
  std::vector<Var> beta;       // per charge: m x n_i, rows sum to 1 over unpadded positions
  std::vector<Var> projected;  // per charge: h^{l_i}, m x d_e
  Var combined;                // h^L, m x d_e
};

/// Indices of the `k` largest weights (ties to the lower index), as a keep mask.
inline std::vector<std::uint8_t> top_k_mask(const std::vector<double>& weights, std::size_t k) {
  std::vector<std::uint8_t> keep(weights.size(), 1);
  if (k == 0 || k >= weights.size()) return keep;
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::fill(keep.begin(), keep.end(), 0);
  for (std::size_t q = 0; q < k; ++q) keep[order[q]] = 1;
  return keep;
}

/// Word-level alignment of fact states to definition positions:
///   M = H E_i^T,  beta = row-softmax(M) over unpadded positions of
///   definition i,  h^{l_i} = beta E_i,  h^L = sum_i g_i h^{l_i}.
/// `top_k` > 0 restricts the last sum to the k most attended charges.
inline WordAlignment align_words(Var hidden, const EncodedDefinitions& defs, Var charge_weights,
                                 std::size_t top_k = 0) {
  const std::size_t C = defs.size();
  if (C == 0) throw ContractError("align_words: no definitions");
  if (charge_weights.value().size() != C)
    throw ContractError("align_words: " + std::to_string(charge_weights.value().size()) + " charge weights for " +
                        std::to_string(C) + " definitions");
  WordAlignment out;
  for (const auto& d : defs.per_charge) {
    if (d.positions.cols() != hidden.cols())
      throw ContractError("align_words: fact width " + std::to_string(hidden.cols()) +
                          " differs from definition width " + std::to_string(d.positions.cols()));
    const Var beta = softmax(matmul_nt(hidden, d.positions), d.mask);
    out.beta.push_back(beta);
    out.projected.push_back(matmul(beta, d.positions));
  }
  out.combined = weighted_sum(charge_weights, out.projected, top_k_mask(charge_weights.value().data, top_k));
  return out;
}

/// Runs the aggregator GRU over the unpadded rows of h^L and returns
/// Fw = tanh(fc([Fc; last hidden])) together with that hidden state.
struct TokenRepresentation {
  Var last_hidden;
  Var fw;
};

inline TokenRepresentation charge_token_related_representation(const GruCell::Bound& aggregator,
                                                               const DenseLayer::Bound& fc_w, Var combined, Var fc,
                                                               const Mask& mask = {}) {
  const std::size_t m = combined.rows();
  if (m == 0 || combined.value().size() == 0) throw ContractError("charge_token_related_representation: empty sequence");
  Var seq = combined;
  if (!mask.empty()) {
    if (mask.size() != m) throw DimensionError("charge_token_related_representation: mask length mismatch");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m; ++i)
      if (mask[i]) idx.push_back(i);
    if (idx.empty()) throw ContractError("charge_token_related_representation: every position is masked");
    if (idx.size() != m) seq = select_rows(combined, idx);
  }
  const Var last = run_gru(aggregator, seq).back();
  return {last, dense_tanh(fc_w, concat({fc, last}))};
}

}  // namespace chargenet
