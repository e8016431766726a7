#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chargenet/data/vocabulary.hpp"
#include "chargenet/numeric/ops.hpp"
#include "chargenet/numeric/random.hpp"

namespace chargenet {

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;

/// uniform(-k, k) with k = 1/sqrt(cols), trainable.
inline Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  const double k = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : t.data) v = rng.uniform(-k, k);
  t.requires_grad = true;
  return t;
}

inline Tensor init_bias(std::size_t n) {
  Tensor t(Shape{n});
  t.requires_grad = true;
  return t;
}

inline Mask token_mask(const TokenIds& ids) {
  Mask m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPadId;
  return m;
}

// ---------------------------------------------------------------------------
// GRU

/// Gate weights W_* are (d_h x d_in), recurrent weights U_* are (d_h x d_h).
struct GruCell {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_n, u_n, b_n;

  GruCell() = default;
  GruCell(std::size_t d_in, std::size_t d_h, Rng& rng)
      : w_z(init_weight(d_h, d_in, rng)), u_z(init_weight(d_h, d_h, rng)), b_z(init_bias(d_h)),
        w_r(init_weight(d_h, d_in, rng)), u_r(init_weight(d_h, d_h, rng)), b_r(init_bias(d_h)),
        w_n(init_weight(d_h, d_in, rng)), u_n(init_weight(d_h, d_h, rng)), b_n(init_bias(d_h)) {}

  std::size_t input_dim() const { return w_z.cols(); }
  std::size_t hidden_dim() const { return w_z.rows(); }

  void collect(const std::string& prefix, NamedTensors& out) {
    for (auto [n, t] : {std::pair{"w_z", &w_z}, {"u_z", &u_z}, {"b_z", &b_z}, {"w_r", &w_r}, {"u_r", &u_r},
                        {"b_r", &b_r}, {"w_n", &w_n}, {"u_n", &u_n}, {"b_n", &b_n}})
      out.emplace_back(prefix + "." + n, t);
  }

  struct Bound {
    Var w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n;
  };

  Bound bind(Tape& t) {
    return {t.param(w_z), t.param(u_z), t.param(b_z), t.param(w_r), t.param(u_r),
            t.param(b_r), t.param(w_n), t.param(u_n), t.param(b_n)};
  }
};

/// Runs the recurrence over the rows of `x` (m x d_in) from h_0 = 0:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r o h) + b_n)
///   h' = z o h + (1 - z) o n
/// Returns the hidden state after each step.
inline std::vector<Var> run_gru(const GruCell::Bound& g, Var x) {
  const std::size_t m = x.rows();
  if (m == 0) throw ContractError("run_gru: empty sequence");
  Tape& tape = *x.tape;
  const std::size_t d_h = g.w_z.rows();
  const Var xz = add_bias(matmul_nt(x, g.w_z), g.b_z);
  const Var xr = add_bias(matmul_nt(x, g.w_r), g.b_r);
  const Var xn = add_bias(matmul_nt(x, g.w_n), g.b_n);
  Var h = tape.constant(Tensor(Shape{d_h}));
  std::vector<Var> states;
  states.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Var z = sigmoid(add(row(xz, i), matmul_nt(h, g.u_z)));
    const Var r = sigmoid(add(row(xr, i), matmul_nt(h, g.u_r)));
    const Var n = tanh(add(row(xn, i), matmul_nt(mul(r, h), g.u_n)));
    h = add(n, mul(z, sub(h, n)));
    states.push_back(h);
  }
  return states;
}

// ---------------------------------------------------------------------------
// Fact encoder

/// a_i = W2 tanh(W1 h_i^T); W1 is (d_a x d_h), W2 is (1 x d_a).
struct SelfAttentionPool {
  Tensor w1, w2;

  SelfAttentionPool() = default;
  SelfAttentionPool(std::size_t d_h, std::size_t d_a, Rng& rng)
      : w1(init_weight(d_a, d_h, rng)), w2(init_weight(1, d_a, rng)) {}

  void collect(const std::string& prefix, NamedTensors& out) {
    out.emplace_back(prefix + ".w1", &w1);
    out.emplace_back(prefix + ".w2", &w2);
  }

  struct Bound {
    Var w1, w2;
  };
  Bound bind(Tape& t) { return {t.param(w1), t.param(w2)}; }
};

struct FactEncoding {
  Var hidden;  // H, m x d_h
  Var alpha;   // [m], zero at PAD positions
  Var fc;      // [d_h]
};

/// GRU over the embedded fact, attention logits per position, softmax with
/// PAD positions masked, and Fc = sum_i alpha_i h_i.
inline FactEncoding encode_fact(const GruCell::Bound& gru, const SelfAttentionPool::Bound& attn, Var embedded,
                                const Mask& mask = {}) {
  const std::size_t m = embedded.rows();
  if (m == 0 || embedded.value().size() == 0) throw ContractError("encode_fact: empty sequence");
  if (!mask.empty() && mask.size() != m) throw DimensionError("encode_fact: mask length mismatch");
  const Var h = stack_rows(run_gru(gru, embedded));
  const Var logits = reshape(matmul_nt(tanh(matmul_nt(h, attn.w1)), attn.w2), Shape{m});
  const Var alpha = softmax(logits, mask);
  const Var fc = matmul(alpha, h);
  return {h, alpha, fc};
}

// ---------------------------------------------------------------------------
// Definition encoder

/// Same-padded 1-D convolution of odd width s with tanh. The kernel is
/// stored as (d_e x s*d_emb): column block o multiplies the word at
/// offset o - (s-1)/2.
struct ConvDefEncoder {
  Tensor kernel, bias;
  std::size_t window = 3;

  ConvDefEncoder() = default;
  ConvDefEncoder(std::size_t d_emb, std::size_t d_e, std::size_t s, Rng& rng)
      : kernel(init_weight(d_e, s * d_emb, rng)), bias(init_bias(d_e)), window(s) {
    if (s == 0 || s % 2 == 0) throw ContractError("ConvDefEncoder: window must be odd");
  }

  void collect(const std::string& prefix, NamedTensors& out) {
    out.emplace_back(prefix + ".kernel", &kernel);
    out.emplace_back(prefix + ".bias", &bias);
  }

  struct Bound {
    Var kernel, bias;
    std::size_t window;
  };
  Bound bind(Tape& t) { return {t.param(kernel), t.param(bias), window}; }
};

struct DefinitionEncoding {
  Var positions;  // E, n x d_e
  Var summary;    // L_i, [d_e]
  Mask mask;
};

/// E = tanh(conv(words)), L_i = sum of the unpadded rows of E.
inline DefinitionEncoding encode_definition(const ConvDefEncoder::Bound& conv, Var embedded, const Mask& mask = {}) {
  const std::size_t n = embedded.rows();
  if (n == 0 || embedded.value().size() == 0) throw ContractError("encode_definition: empty definition");
  if (!mask.empty() && mask.size() != n) throw DimensionError("encode_definition: mask length mismatch");
  const Var e = tanh(add_bias(matmul_nt(unfold_windows(embedded, conv.window), conv.kernel), conv.bias));
  Mask m = mask.empty() ? Mask(n, 1) : mask;
  return {e, sum_rows(e, m), std::move(m)};
}

struct EncodedDefinitions {
  std::vector<DefinitionEncoding> per_charge;
  Var summaries;  // L, C x d_e

  std::size_t size() const { return per_charge.size(); }
};

/// Encodes every definition on the same tape. The result is meant to be
/// shared by all examples of a batch.
inline EncodedDefinitions encode_all_definitions(const ConvDefEncoder::Bound& conv, Var embedding_table,
                                                 const std::vector<TokenIds>& definitions) {
  if (definitions.empty()) throw ContractError("encode_all_definitions: no definitions");
  EncodedDefinitions out;
  std::vector<Var> rows;
  for (const auto& ids : definitions) {
    if (ids.empty()) throw ContractError("encode_definition: empty definition");
    const Var x = gather_rows(embedding_table, ids);
    out.per_charge.push_back(encode_definition(conv, x, token_mask(ids)));
    rows.push_back(out.per_charge.back().summary);
  }
  out.summaries = stack_rows(rows);
  return out;
}

}  // namespace chargenet
