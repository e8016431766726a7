#include <gtest/gtest.h>

#include <algorithm>

#include "chargenet/encoders.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

namespace chargenet {
namespace {

namespace ref = reference;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(Shape{r, c});
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

void zero(GruCell& g) {
  for (Tensor* t : {&g.w_z, &g.u_z, &g.b_z, &g.w_r, &g.u_r, &g.b_r, &g.w_n, &g.u_n, &g.b_n})
    std::fill(t->data.begin(), t->data.end(), 0.0);
}

ref::Gru to_reference(const GruCell& g) {
  auto m = [](const Tensor& t) { return ref::to_mat(t.data, t.rows(), t.cols()); };
  return {m(g.w_z), m(g.u_z), m(g.w_r), m(g.u_r), m(g.w_n), m(g.u_n), g.b_z.data, g.b_r.data, g.b_n.data};
}

struct FactFixture {
  Rng rng{21};
  GruCell gru{5, 4, rng};
  SelfAttentionPool attn{4, 3, rng};

  FactEncoding run(Tape& tape, const Tensor& x, const Mask& mask = {}) {
    return encode_fact(gru.bind(tape), attn.bind(tape), tape.constant(x), mask);
  }
};

// --- GRU ------------------------------------------------------------------

TEST(Gru, MatchesUnrolledRecurrence) {
  FactFixture f;
  const Tensor x = random_matrix(6, 5, f.rng);
  Tape tape;
  const auto states = run_gru(f.gru.bind(tape), tape.constant(x));
  const auto expected = ref::gru_run(to_reference(f.gru), ref::to_mat(x.data, 6, 5), 4);
  ASSERT_EQ(states.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(states[i].value()[k], expected[i][k], 1e-12);
}

TEST(Gru, EmptySequenceRejected) {
  FactFixture f;
  Tape tape;
  EXPECT_THROW(run_gru(f.gru.bind(tape), tape.constant(Tensor(Shape{0, 5}))), ContractError);
}

// --- fact encoder -----------------------------------------------------------

TEST(FactEncoder, SingleStepTakesFullWeight) {
  FactFixture f;
  Tape tape;
  const auto enc = f.run(tape, random_matrix(1, 5, f.rng));
  ASSERT_EQ(enc.alpha.value().size(), 1u);
  EXPECT_EQ(enc.alpha.value()[0], 1.0);
  EXPECT_EQ(enc.fc.value().data, enc.hidden.value().data);
}

TEST(FactEncoder, ZeroGruGivesZeroStates) {
  FactFixture f;
  zero(f.gru);
  Tape tape;
  const auto enc = f.run(tape, random_matrix(7, 5, f.rng));
  for (double v : enc.hidden.value().data) EXPECT_EQ(v, 0.0);
  for (double v : enc.fc.value().data) EXPECT_EQ(v, 0.0);
}

TEST(FactEncoder, ConstantStatesGiveUniformAttention) {
  // Identical tokens with a GRU whose state does not move: every position
  // scores the same.
  FactFixture f;
  zero(f.gru);
  Tensor x(Shape{5, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) x.at(i, j) = 0.3 * static_cast<double>(j);
  Tape tape;
  const auto enc = f.run(tape, x, Mask{1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(enc.alpha.value()[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(enc.alpha.value()[2], 1.0 / 3.0);
  EXPECT_EQ(enc.alpha.value()[3], 0.0);
  EXPECT_EQ(enc.alpha.value()[4], 0.0);
}

TEST(FactEncoder, ZeroScorerGivesUniformAttention) {
  FactFixture f;
  std::fill(f.attn.w2.data.begin(), f.attn.w2.data.end(), 0.0);
  Tape tape;
  const auto enc = f.run(tape, random_matrix(4, 5, f.rng));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(enc.alpha.value()[i], 0.25);
}

TEST(FactEncoder, AttentionIsADistributionWithMaskedZeros) {
  FactFixture f;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + f.rng.below(9);
    Mask mask(m, 1);
    for (std::size_t i = 1; i < m; ++i) mask[i] = f.rng.below(3) != 0;
    Tape tape;
    const auto enc = f.run(tape, random_matrix(m, 5, f.rng, 2.0), mask);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = enc.alpha.value()[i];
      EXPECT_GE(a, 0.0);
      if (!mask[i]) {
        EXPECT_EQ(a, 0.0);
      }
      s += a;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(FactEncoder, FcInsideHullOfStates) {
  FactFixture f;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 2 + f.rng.below(8);
    Tape tape;
    const auto enc = f.run(tape, random_matrix(m, 5, f.rng, 2.0));
    const Tensor& h = enc.hidden.value();
    for (std::size_t k = 0; k < 4; ++k) {
      double lo = h.at(0, k), hi = lo;
      for (std::size_t i = 1; i < m; ++i) {
        lo = std::min(lo, h.at(i, k));
        hi = std::max(hi, h.at(i, k));
      }
      EXPECT_GE(enc.fc.value()[k], lo - 1e-12);
      EXPECT_LE(enc.fc.value()[k], hi + 1e-12);
    }
  }
}

TEST(FactEncoder, LeftToRightCausality) {
  FactFixture f;
  Tensor a = random_matrix(6, 5, f.rng);
  Tensor b = a;
  for (std::size_t j = 0; j < 5; ++j) b.at(4, j) += 1.0, b.at(5, j) -= 2.0;
  Tape tape;
  const auto ea = f.run(tape, a), eb = f.run(tape, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(ea.hidden.value().at(i, k), eb.hidden.value().at(i, k));
  EXPECT_NE(ea.hidden.value().at(5, 0), eb.hidden.value().at(5, 0));
}

TEST(FactEncoder, EmptyFactRejected) {
  FactFixture f;
  Tape tape;
  EXPECT_THROW(f.run(tape, Tensor(Shape{0, 5})), ContractError);
}

TEST(FactEncoder, GradientsMatchFiniteDifferences) {
  FactFixture f;
  const Tensor x = random_matrix(4, 5, f.rng);
  std::vector<Tensor> inputs{x, f.gru.w_z, f.gru.u_z, f.gru.b_z, f.gru.w_r, f.gru.u_r,
                             f.gru.b_r, f.gru.w_n, f.gru.u_n, f.gru.b_n, f.attn.w1, f.attn.w2};
  for (auto& t : inputs) t.requires_grad = false;
  const auto r = testing::check_gradients(inputs, [](Tape&, const std::vector<Var>& v) {
    const GruCell::Bound g{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
    const auto enc = encode_fact(g, {v[10], v[11]}, v[0], Mask{1, 1, 1, 0});
    return sum(mul(enc.fc, enc.fc));
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

// --- definition encoder -------------------------------------------------------

struct ConvFixture {
  Rng rng{5};
  ConvDefEncoder conv{3, 4, 3, rng};
};

TEST(DefinitionEncoder, ZeroKernelGivesZero) {
  ConvFixture f;
  std::fill(f.conv.kernel.data.begin(), f.conv.kernel.data.end(), 0.0);
  Tape tape;
  const auto enc = encode_definition(f.conv.bind(tape), tape.constant(random_matrix(5, 3, f.rng)));
  for (double v : enc.positions.value().data) EXPECT_EQ(v, 0.0);
  for (double v : enc.summary.value().data) EXPECT_EQ(v, 0.0);
}

TEST(DefinitionEncoder, SingleWordSeesPaddingOnBothSides) {
  ConvFixture f;
  const Tensor x = random_matrix(1, 3, f.rng);
  Tape tape;
  const auto enc = encode_definition(f.conv.bind(tape), tape.constant(x));
  ASSERT_EQ(enc.positions.value().shape, (Shape{1, 4}));
  // Only the centre block of the kernel touches the word.
  for (std::size_t o = 0; o < 4; ++o) {
    double pre = f.conv.bias.data[o];
    for (std::size_t j = 0; j < 3; ++j) pre += f.conv.kernel.at(o, 3 + j) * x.data[j];
    EXPECT_NEAR(enc.positions.value()[o], std::tanh(pre), 1e-14);
  }
}

TEST(DefinitionEncoder, ConvolutionMatchesDirectEvaluation) {
  ConvFixture f;
  const std::size_t n = 5;
  const Tensor x = random_matrix(n, 3, f.rng);
  Tape tape;
  const auto enc = encode_definition(f.conv.bind(tape), tape.constant(x));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t o = 0; o < 4; ++o) {
      double pre = f.conv.bias.data[o];
      for (int off = -1; off <= 1; ++off) {
        const int q = static_cast<int>(p) + off;
        if (q < 0 || q >= static_cast<int>(n)) continue;
        for (std::size_t j = 0; j < 3; ++j)
          pre += f.conv.kernel.at(o, static_cast<std::size_t>(off + 1) * 3 + j) * x.at(static_cast<std::size_t>(q), j);
      }
      EXPECT_NEAR(enc.positions.value().at(p, o), std::tanh(pre), 1e-14);
    }
}

TEST(DefinitionEncoder, SummaryIsColumnSumOfUnpaddedRows) {
  ConvFixture f;
  Tape tape;
  const auto enc = encode_definition(f.conv.bind(tape), tape.constant(random_matrix(4, 3, f.rng)), Mask{1, 1, 1, 1});
  const Tensor& e = enc.positions.value();
  for (std::size_t o = 0; o < 4; ++o) {
    double s = 0.0;
    for (std::size_t p = 0; p < 4; ++p) s += e.at(p, o);
    EXPECT_NEAR(enc.summary.value()[o], s, 1e-14);
  }
  const auto masked =
      encode_definition(f.conv.bind(tape), tape.constant(random_matrix(4, 3, f.rng)), Mask{1, 0, 1, 0});
  const Tensor& em = masked.positions.value();
  for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(masked.summary.value()[o], em.at(0, o) + em.at(2, o), 1e-14);
}

TEST(DefinitionEncoder, SumPoolingIgnoresRowOrder) {
  ConvFixture f;
  Tape tape;
  const Var e = tape.constant(random_matrix(5, 4, f.rng));
  const Var shuffled = select_rows(e, {3, 0, 4, 1, 2});
  const auto a = sum_rows(e, Mask(5, 1)).value().data, b = sum_rows(shuffled, Mask(5, 1)).value().data;
  for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(a[o], b[o], 1e-14);
}

TEST(DefinitionEncoder, AllDefinitionsStackedAndEquivariant) {
  Rng rng(8);
  ConvDefEncoder conv(3, 4, 3, rng);
  Tensor table = random_matrix(10, 3, rng);
  for (std::size_t j = 0; j < 3; ++j) table.at(0, j) = 0.0;
  const std::vector<TokenIds> defs{{2, 3, 4}, {5, 6}, {7, 8, 9, 2}};
  const std::vector<TokenIds> permuted{defs[2], defs[0], defs[1]};
  Tape tape;
  const Var tv = tape.constant(table);
  const auto a = encode_all_definitions(conv.bind(tape), tv, defs);
  const auto b = encode_all_definitions(conv.bind(tape), tv, permuted);
  ASSERT_EQ(a.summaries.value().shape, (Shape{3, 4}));
  const std::size_t from[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(b.summaries.value().at(i, o), a.summaries.value().at(from[i], o));
  const auto same = encode_all_definitions(conv.bind(tape), tv, {defs[1], defs[1]});
  for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(same.summaries.value().at(0, o), same.summaries.value().at(1, o));
  EXPECT_THROW(encode_all_definitions(conv.bind(tape), tv, {{}}), ContractError);
  EXPECT_THROW(encode_all_definitions(conv.bind(tape), tv, {}), ContractError);
}

TEST(DefinitionEncoder, EvenWindowRejected) {
  Rng rng(1);
  EXPECT_THROW(ConvDefEncoder(3, 4, 2, rng), ContractError);
}

TEST(DefinitionEncoder, GradientsMatchFiniteDifferences) {
  ConvFixture f;
  std::vector<Tensor> inputs{random_matrix(4, 3, f.rng), f.conv.kernel, f.conv.bias};
  const auto r = testing::check_gradients(inputs, [](Tape&, const std::vector<Var>& v) {
    const auto enc = encode_definition({v[1], v[2], 3}, v[0], Mask{1, 1, 1, 0});
    return sum(mul(enc.summary, enc.summary));
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace chargenet
