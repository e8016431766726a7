#include <gtest/gtest.h>

#include <algorithm>

#include "chargenet/interaction.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

namespace chargenet {
namespace {

namespace ref = reference;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

ref::Mat mat(const Tensor& t) { return ref::to_mat(t.data, t.rows(), t.cols()); }

// --- charge identification ----------------------------------------------------

struct MemoryFixture {
  Rng rng{33};
  std::size_t d = 4;
  EpisodicAttention attn{4, 5, rng};
};

TEST(ChargeIdentification, SingleChargeTakesFullWeight) {
  MemoryFixture f;
  Tape tape;
  const Tensor L = random_tensor({1, 4}, f.rng);
  const auto trace =
      identify_charges(f.attn.bind(tape), tape.constant(random_tensor({4}, f.rng)), tape.constant(L), 3);
  ASSERT_EQ(trace.attention.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(trace.attention[t].value()[0], 1.0);
    EXPECT_EQ(trace.memories[t + 1].value().data, L.data);
  }
}

TEST(ChargeIdentification, IdenticalChargesGiveUniformWeights) {
  MemoryFixture f;
  const Tensor row = random_tensor({4}, f.rng);
  Tensor L(Shape{3, 4});
  for (std::size_t i = 0; i < 3; ++i) std::copy(row.data.begin(), row.data.end(), L.row(i).begin());
  Tape tape;
  const auto trace =
      identify_charges(f.attn.bind(tape), tape.constant(random_tensor({4}, f.rng)), tape.constant(L), 2);
  for (const auto& g : trace.attention)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.value()[i], 1.0 / 3.0);
}

TEST(ChargeIdentification, FirstMemoryIsTheFactRepresentation) {
  MemoryFixture f;
  Tape tape;
  const Var fc = tape.constant(random_tensor({4}, f.rng));
  const auto trace = identify_charges(f.attn.bind(tape), fc, tape.constant(random_tensor({3, 4}, f.rng)), 3);
  ASSERT_EQ(trace.memories.size(), 4u);
  EXPECT_EQ(trace.memories[0].value().data, fc.value().data);
}

TEST(ChargeIdentification, HopsMatchStepByStepOracle) {
  MemoryFixture f;
  const Tensor fc = random_tensor({4}, f.rng), L = random_tensor({3, 4}, f.rng, 2.0);
  Tape tape;
  const auto trace = identify_charges(f.attn.bind(tape), tape.constant(fc), tape.constant(L), 3);
  ref::Vec mem = fc.data;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto hop = ref::episodic_hop(mat(f.attn.w1), f.attn.w2.data, fc.data, mem, mat(L));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(trace.attention[t].value()[i], hop.g[i], 1e-12);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(trace.memories[t + 1].value()[k], hop.memory[k], 1e-12);
    mem = hop.memory;
  }
}

TEST(ChargeIdentification, WeightsAreDistributions) {
  MemoryFixture f;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 1 + f.rng.below(6);
    Tape tape;
    const auto trace = identify_charges(f.attn.bind(tape), tape.constant(random_tensor({4}, f.rng, 3.0)),
                                        tape.constant(random_tensor({C, 4}, f.rng, 3.0)), 3);
    for (const auto& g : trace.attention) {
      double s = 0.0;
      for (double v : g.value().data) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(ChargeIdentification, ChargeOrderOnlyPermutesWeights) {
  MemoryFixture f;
  const Tensor fc = random_tensor({4}, f.rng), L = random_tensor({4, 4}, f.rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tape tape;
  const Var fcv = tape.constant(fc), Lv = tape.constant(L);
  const auto a = identify_charges(f.attn.bind(tape), fcv, Lv, 3);
  const auto b = identify_charges(f.attn.bind(tape), fcv, select_rows(Lv, perm), 3);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(b.attention[t].value()[i], a.attention[t].value()[perm[i]], 1e-14);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(b.memories[t + 1].value()[k], a.memories[t + 1].value()[k], 1e-14);
  }
}

TEST(ChargeIdentification, DimensionMismatch) {
  MemoryFixture f;
  Tape tape;
  EXPECT_THROW(identify_charges(f.attn.bind(tape), tape.constant(random_tensor({3}, f.rng)),
                                tape.constant(random_tensor({2, 4}, f.rng)), 3),
               ContractError);
  EXPECT_THROW(identify_charges(f.attn.bind(tape), tape.constant(random_tensor({4}, f.rng)),
                                tape.constant(random_tensor({2, 4}, f.rng)), 0),
               ContractError);
}

// --- charge-related representation ---------------------------------------------

TEST(ChargeRelated, ZeroWeightsGiveTanhOfBias) {
  Rng rng(2);
  DenseLayer fc_s(12, 4, rng);
  std::fill(fc_s.w.data.begin(), fc_s.w.data.end(), 0.0);
  fc_s.b.data = {0.1, -0.2, 0.3, 0.0};
  MemoryFixture f;
  Tape tape;
  const Var fc = tape.constant(random_tensor({4}, f.rng));
  const auto trace = identify_charges(f.attn.bind(tape), fc, tape.constant(random_tensor({3, 4}, f.rng)), 3);
  const Var fs = charge_related_representation(fc_s.bind(tape), fc, trace);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(fs.value()[k], std::tanh(fc_s.b.data[k]));
}

TEST(ChargeRelated, BlockProbeRecoversInputOrder) {
  // Output width 3d with identity blocks on the diagonal: Fs = tanh of the
  // concatenation, so each block can be read back.
  MemoryFixture f;
  Tape tape;
  const Var fc = tape.constant(random_tensor({4}, f.rng, 0.5));
  const auto trace = identify_charges(f.attn.bind(tape), fc, tape.constant(random_tensor({3, 4}, f.rng, 0.5)), 3);
  Tensor w(Shape{12, 12}), b(Shape{12});
  for (std::size_t k = 0; k < 12; ++k) w.at(k, k) = 1.0;
  const Var fs = charge_related_representation({tape.constant(w), tape.constant(b)}, fc, trace);
  ASSERT_EQ(fs.value().size(), 12u);
  const Tensor* blocks[3] = {&fc.value(), &trace.memories[3].value(), &trace.memories[2].value()};
  for (std::size_t blk = 0; blk < 3; ++blk)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(fs.value()[blk * 4 + k], std::tanh((*blocks[blk])[k]), 1e-15);
}

TEST(ChargeRelated, SingleHopUsesInitialMemory) {
  MemoryFixture f;
  Tape tape;
  const Var fc = tape.constant(random_tensor({4}, f.rng, 0.5));
  const auto trace = identify_charges(f.attn.bind(tape), fc, tape.constant(random_tensor({2, 4}, f.rng)), 1);
  Tensor w(Shape{12, 12}), b(Shape{12});
  for (std::size_t k = 0; k < 12; ++k) w.at(k, k) = 1.0;
  const Var fs = charge_related_representation({tape.constant(w), tape.constant(b)}, fc, trace);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(fs.value()[8 + k], fs.value()[k]);
}

// --- word alignment -------------------------------------------------------------

struct AlignFixture {
  Rng rng{77};
  Tape tape;

  EncodedDefinitions defs(const std::vector<Tensor>& E, const std::vector<Mask>& masks = {}) {
    EncodedDefinitions out;
    std::vector<Var> rows;
    for (std::size_t i = 0; i < E.size(); ++i) {
      DefinitionEncoding d;
      d.positions = tape.constant(E[i]);
      d.mask = masks.empty() ? Mask(E[i].rows(), 1) : masks[i];
      d.summary = sum_rows(d.positions, d.mask);
      rows.push_back(d.summary);
      out.per_charge.push_back(std::move(d));
    }
    out.summaries = stack_rows(rows);
    return out;
  }
};

TEST(WordAlignment, SinglePositionDefinition) {
  AlignFixture f;
  const Tensor e = random_tensor({1, 4}, f.rng);
  const auto defs = f.defs({e});
  const auto a = align_words(f.tape.constant(random_tensor({3, 4}, f.rng)), defs,
                             f.tape.constant(Tensor::vector({1.0})));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.beta[0].value().at(k, 0), 1.0);
    for (std::size_t q = 0; q < 4; ++q) EXPECT_EQ(a.projected[0].value().at(k, q), e.at(0, q));
  }
}

TEST(WordAlignment, OneHotWeightsSelectACharge) {
  AlignFixture f;
  const auto defs = f.defs({random_tensor({3, 4}, f.rng), random_tensor({2, 4}, f.rng), random_tensor({4, 4}, f.rng)});
  const auto a = align_words(f.tape.constant(random_tensor({5, 4}, f.rng)), defs,
                             f.tape.constant(Tensor::vector({0.0, 1.0, 0.0})));
  EXPECT_EQ(a.combined.value().data, a.projected[1].value().data);
}

TEST(WordAlignment, MatchesBruteForceOracle) {
  AlignFixture f;
  const std::vector<Tensor> E{random_tensor({3, 4}, f.rng), random_tensor({3, 4}, f.rng)};
  const std::vector<Mask> masks{{1, 1, 1}, {1, 1, 0}};
  const Tensor H = random_tensor({2, 4}, f.rng, 2.0);
  const std::vector<double> g{0.3, 0.7};
  const auto a = align_words(f.tape.constant(H), f.defs(E, masks), f.tape.constant(Tensor::vector(g)));
  const auto want = ref::align(mat(H), {mat(E[0]), mat(E[1])}, {masks[0], masks[1]}, g);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.beta[i].value().at(k, j), want.beta[i][k][j], 1e-12);
    for (std::size_t q = 0; q < 4; ++q) EXPECT_NEAR(a.combined.value().at(k, q), want.combined[k][q], 1e-12);
  }
  EXPECT_EQ(a.beta[1].value().at(0, 2), 0.0);
  EXPECT_EQ(a.beta[1].value().at(1, 2), 0.0);
}

TEST(WordAlignment, ProjectionInsideDefinitionEnvelope) {
  AlignFixture f;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t C = 1 + f.rng.below(4), m = 1 + f.rng.below(5);
    std::vector<Tensor> E;
    std::vector<Mask> masks;
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t n = 1 + f.rng.below(5);
      E.push_back(random_tensor({n, 4}, f.rng, 2.0));
      Mask mask(n, 1);
      for (std::size_t j = 1; j < n; ++j) mask[j] = f.rng.below(4) != 0;
      masks.push_back(mask);
    }
    Tensor g(Shape{C});
    g.data.assign(C, 1.0 / static_cast<double>(C));
    const auto a = align_words(f.tape.constant(random_tensor({m, 4}, f.rng, 3.0)), f.defs(E, masks), f.tape.constant(g));
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t q = 0; q < 4; ++q) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t j = 0; j < E[i].rows(); ++j)
          if (masks[i][j]) lo = std::min(lo, E[i].at(j, q)), hi = std::max(hi, E[i].at(j, q));
        for (std::size_t k = 0; k < m; ++k) {
          EXPECT_GE(a.projected[i].value().at(k, q), lo - 1e-12);
          EXPECT_LE(a.projected[i].value().at(k, q), hi + 1e-12);
        }
      }
  }
}

TEST(WordAlignment, TopKKeepsLargestWeights) {
  EXPECT_EQ(top_k_mask({0.1, 0.5, 0.2, 0.2}, 2), (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(top_k_mask({0.1, 0.5}, 0), (std::vector<std::uint8_t>{1, 1}));
  AlignFixture f;
  const auto defs = f.defs({random_tensor({2, 4}, f.rng), random_tensor({2, 4}, f.rng), random_tensor({2, 4}, f.rng)});
  const Var H = f.tape.constant(random_tensor({2, 4}, f.rng));
  const auto a = align_words(H, defs, f.tape.constant(Tensor::vector({0.2, 0.7, 0.1})), 1);
  for (std::size_t x = 0; x < 8; ++x) EXPECT_NEAR(a.combined.value()[x], 0.7 * a.projected[1].value()[x], 1e-15);
}

TEST(WordAlignment, WidthMismatch) {
  AlignFixture f;
  const auto defs = f.defs({random_tensor({2, 3}, f.rng)});
  EXPECT_THROW(align_words(f.tape.constant(random_tensor({2, 4}, f.rng)), defs, f.tape.constant(Tensor::vector({1.0}))),
               ContractError);
  const auto ok = f.defs({random_tensor({2, 4}, f.rng)});
  EXPECT_THROW(
      align_words(f.tape.constant(random_tensor({2, 4}, f.rng)), ok, f.tape.constant(Tensor::vector({0.5, 0.5}))),
      ContractError);
}

// --- charge-token-related representation -------------------------------------------

struct TokenFixture {
  Rng rng{91};
  GruCell gru{4, 4, rng};
  DenseLayer fc_w{8, 4, rng};
};

TEST(ChargeTokenRelated, ZeroWeightsGiveTanhOfBias) {
  TokenFixture f;
  for (Tensor* t : {&f.gru.w_z, &f.gru.u_z, &f.gru.w_r, &f.gru.u_r, &f.gru.w_n, &f.gru.u_n, &f.fc_w.w})
    std::fill(t->data.begin(), t->data.end(), 0.0);
  f.fc_w.b.data = {0.5, -0.5, 0.25, 0.0};
  Tape tape;
  const auto r = charge_token_related_representation(f.gru.bind(tape), f.fc_w.bind(tape),
                                                     tape.constant(random_tensor({3, 4}, f.rng)),
                                                     tape.constant(random_tensor({4}, f.rng)));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.fw.value()[k], std::tanh(f.fc_w.b.data[k]));
}

ref::Gru reference_gru(const GruCell& g) {
  return {mat(g.w_z), mat(g.u_z), mat(g.w_r), mat(g.u_r), mat(g.w_n), mat(g.u_n), g.b_z.data, g.b_r.data, g.b_n.data};
}

TEST(ChargeTokenRelated, SingleStepFromZeroState) {
  TokenFixture f;
  const Tensor x = random_tensor({1, 4}, f.rng);
  Tape tape;
  const auto r = charge_token_related_representation(f.gru.bind(tape), f.fc_w.bind(tape), tape.constant(x),
                                                     tape.constant(random_tensor({4}, f.rng)));
  const auto want = ref::gru_step(reference_gru(f.gru), x.data, ref::Vec(4, 0.0));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(r.last_hidden.value()[k], want[k], 1e-14);
}

TEST(ChargeTokenRelated, MatchesUnrolledRecurrenceOverUnpaddedRows) {
  TokenFixture f;
  const Tensor x = random_tensor({5, 4}, f.rng), fc = random_tensor({4}, f.rng);
  const Mask mask{1, 1, 0, 1, 0};
  Tape tape;
  const auto r = charge_token_related_representation(f.gru.bind(tape), f.fc_w.bind(tape), tape.constant(x),
                                                     tape.constant(fc), mask);
  ref::Vec h(4, 0.0);
  for (std::size_t i : {0, 1, 3}) h = ref::gru_step(reference_gru(f.gru), ref::Vec(x.row(i).begin(), x.row(i).end()), h);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(r.last_hidden.value()[k], h[k], 1e-12);
  ref::Vec joined = fc.data;
  joined.insert(joined.end(), h.begin(), h.end());
  const auto pre = ref::matvec(mat(f.fc_w.w), joined);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(r.fw.value()[k], std::tanh(pre[k] + f.fc_w.b.data[k]), 1e-12);
}

TEST(ChargeTokenRelated, EmptySequenceRejected) {
  TokenFixture f;
  Tape tape;
  EXPECT_THROW(charge_token_related_representation(f.gru.bind(tape), f.fc_w.bind(tape),
                                                   tape.constant(Tensor(Shape{0, 4})),
                                                   tape.constant(random_tensor({4}, f.rng))),
               ContractError);
}

// --- gradients ----------------------------------------------------------------------

TEST(InteractionGradients, MatchFiniteDifferences) {
  Rng rng(404);
  EpisodicAttention attn(3, 4, rng);
  DenseLayer fc_s(9, 3, rng), fc_w(6, 3, rng);
  GruCell agg(3, 3, rng);
  std::vector<Tensor> inputs{random_tensor({3}, rng),       random_tensor({4, 3}, rng),  // Fc, H
                             random_tensor({3, 3}, rng),    random_tensor({2, 3}, rng),  // E_1, E_2
                             attn.w1,   attn.w2, fc_s.w, fc_s.b, fc_w.w, fc_w.b,
                             agg.w_z, agg.u_z, agg.b_z, agg.w_r, agg.u_r, agg.b_r, agg.w_n, agg.u_n, agg.b_n};
  const auto r = testing::check_gradients(inputs, [](Tape&, const std::vector<Var>& v) {
    EncodedDefinitions defs;
    const Mask masks[2] = {{1, 1, 0}, {1, 1}};
    std::vector<Var> rows;
    for (std::size_t i = 0; i < 2; ++i) {
      DefinitionEncoding d{v[2 + i], sum_rows(v[2 + i], masks[i]), masks[i]};
      rows.push_back(d.summary);
      defs.per_charge.push_back(d);
    }
    defs.summaries = stack_rows(rows);
    const auto trace = identify_charges({v[4], v[5]}, v[0], defs.summaries, 3);
    const Var fs = charge_related_representation({v[6], v[7]}, v[0], trace);
    const auto al = align_words(v[1], defs, trace.attention.back());
    const GruCell::Bound g{v[10], v[11], v[12], v[13], v[14], v[15], v[16], v[17], v[18]};
    const auto tok = charge_token_related_representation(g, {v[8], v[9]}, al.combined, v[0], Mask{1, 1, 1, 0});
    return add(sum(mul(fs, fs)), sum(mul(tok.fw, tok.fw)));
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace chargenet
