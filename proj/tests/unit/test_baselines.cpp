// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "retain/baselines.hpp"
#include "retain/errors.hpp"
#include "retain/gradcheck.hpp"
#include "retain/nn.hpp"

using namespace retain;

namespace {

data::PatientRecord make_record(std::vector<std::vector<int>> visits) {
  data::PatientRecord r;
  r.patient_id = 9;
  r.role = data::Role::kCase;
  std::int64_t day = 1;
  for (auto& c : visits) {
    r.visits.push_back(data::Visit{day, c, {}});
    day += 4;
  }
  r.labels = {{0}};
  return r;
}

ModelConfig small(ModelKind kind, std::size_t window = 10) {
  ModelConfig c = default_model_config(kind, Task::kL2D, 6, 1);
  c.dims = {6, 4, 4, 4, 1};
  c.baseline_hidden = 3;
  c.window = window;
  c.init_seed = 11;
  return c;
}

std::vector<double> multi_hot(const data::Visit& v, std::size_t r) {
  std::vector<double> x(r, 0.0);
  for (std::size_t i = 0; i < v.codes.size(); ++i) x[v.codes[i]] = v.value(i);
  return x;
}

}  // namespace

TEST(PseudoContext, SumsTheLastWindowOfVisits) {
  const auto r = make_record({{0, 1}, {1}, {2}});
  EXPECT_EQ(pseudo_context(r, 3, 10, 4), (std::vector<double>{1, 2, 1, 0}));
  EXPECT_EQ(pseudo_context(r, 3, 1, 4), (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(pseudo_context(r, 1, 10, 4), (std::vector<double>{1, 1, 0, 0}));
  EXPECT_EQ(pseudo_context(r, 3, 2, 4), (std::vector<double>{0, 1, 1, 0}));
  const auto sparse = sparse_pseudo_context(r, 3, 10);
  EXPECT_EQ(sparse.codes, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(sparse.values, (std::vector<double>{1, 2, 1}));
  EXPECT_THROW(pseudo_context(r, 0, 10, 4), ArgumentError);
  EXPECT_THROW(pseudo_context(r, 4, 10, 4), ArgumentError);
  EXPECT_THROW(pseudo_context(r, 3, 0, 4), ArgumentError);
  EXPECT_THROW(pseudo_context(r, 3, 10, 2), DimensionError);
}

TEST(PseudoContext, UsesVisitValues) {
  auto r = make_record({{0, 3}, {3}});
  r.visits[0].values = {2.5, -1.0};
  EXPECT_EQ(pseudo_context(r, 2, 10, 4), (std::vector<double>{2.5, 0, 0, 0}));
}

TEST(Baselines, ParameterNamesAndRegularization) {
  EXPECT_EQ(LogisticRegression(small(ModelKind::kLR)).params().regularized_names(),
            (std::vector<std::string>{"W_out"}));
  EXPECT_EQ(MlpBaseline(small(ModelKind::kMLP)).params().regularized_names(),
            (std::vector<std::string>{"W_hidden", "W_out"}));
  const StackedRnn rnn(small(ModelKind::kRNN));
  EXPECT_TRUE(rnn.params().contains("rnn1.W_update"));
  EXPECT_TRUE(rnn.params().contains("rnn2.U_cand"));
  EXPECT_EQ(rnn.params().at("rnn1.W_update").shape(), (std::vector<std::size_t>{3, 6}));
  EXPECT_EQ(rnn.params().regularized_names(), (std::vector<std::string>{"W_out"}));
  EXPECT_EQ(RnnAttentionMlp(small(ModelKind::kRnnAttnMlp)).params().regularized_names(),
            (std::vector<std::string>{"W_attn_hidden", "W_out"}));
  const RnnAttentionRnn ar(small(ModelKind::kRnnAttnRnn));
  EXPECT_FALSE(ar.params().contains("W_beta"));
  EXPECT_FALSE(ar.params().contains("beta.W_update"));
  EXPECT_TRUE(ar.unit_beta());
  auto bad = small(ModelKind::kMLP);
  bad.baseline_hidden = 0;
  EXPECT_THROW(MlpBaseline{bad}, ConfigError);
}

TEST(Baselines, ZeroParametersGiveOneHalf) {
  const auto r = make_record({{0}, {1, 2}, {5}});
  for (auto kind : {ModelKind::kLR, ModelKind::kMLP, ModelKind::kRNN, ModelKind::kRnnAttnMlp,
                    ModelKind::kRnnAttnRnn}) {
    auto m = make_model(small(kind));
    for (auto id : m->params().ids()) m->params()[id].fill(0.0);
    const auto y = m->predict(r);
    ASSERT_EQ(y.size(), 1u) << to_string(kind);
    EXPECT_DOUBLE_EQ(y[0][0], 0.5) << to_string(kind);
  }
}

TEST(Baselines, LogisticRegressionMatchesDenseOracle) {
  LogisticRegression lr(small(ModelKind::kLR, 2));
  Rng rng(3);
  randomize_params(lr.params(), rng);
  const auto r = make_record({{0}, {1, 2}, {2, 5}});
  const auto pc = pseudo_context(r, 3, 2, 6);
  const auto logits = nn::affine(lr.params().at("W_out"), pc, lr.params().at("b_out").span());
  EXPECT_NEAR(lr.predict(r)[0][0], nn::sigmoid(logits[0]), 1e-15);
}

TEST(Baselines, StationaryModelsIgnoreOrderInsideWindow) {
  const auto a = make_record({{0}, {1, 2}, {3}, {5}});
  const auto b = make_record({{0}, {3}, {5}, {1, 2}});
  for (auto kind : {ModelKind::kLR, ModelKind::kMLP}) {
    auto m = make_model(small(kind));
    Rng rng(4);
    randomize_params(m->params(), rng);
    EXPECT_NEAR(m->predict(a)[0][0], m->predict(b)[0][0], 1e-15) << to_string(kind);
  }
  auto rnn = make_model(small(ModelKind::kRNN));
  Rng rng(4);
  randomize_params(rnn->params(), rng);
  EXPECT_NE(rnn->predict(a)[0][0], rnn->predict(b)[0][0]);
}

TEST(Baselines, MlpMatchesDenseOracle) {
  MlpBaseline mlp(small(ModelKind::kMLP));
  Rng rng(5);
  randomize_params(mlp.params(), rng);
  const auto r = make_record({{0, 4}, {1}});
  const auto pc = pseudo_context(r, 2, 10, 6);
  const auto& p = mlp.params();
  const auto hidden = nn::tanh(nn::affine(p.at("W_hidden"), pc, p.at("b_hidden").span()));
  const auto logits = nn::affine(p.at("W_out"), hidden, p.at("b_out").span());
  EXPECT_NEAR(mlp.predict(r)[0][0], nn::sigmoid(logits[0]), 1e-15);
}

TEST(Baselines, StackedRnnMatchesManualUnroll) {
  StackedRnn rnn(small(ModelKind::kRNN));
  Rng rng(6);
  randomize_params(rnn.params(), rng);
  const auto r = make_record({{0, 4}, {1}, {2, 3, 5}});
  const auto& p = rnn.params();
  const auto c1 = nn::GruCellParams::from(p, find_gru_cell(p, "rnn1"));
  const auto c2 = nn::GruCellParams::from(p, find_gru_cell(p, "rnn2"));
  std::vector<double> h1(3, 0.0), h2(3, 0.0);
  std::vector<double> want;
  for (const auto& v : r.visits) {
    h1 = nn::gru_cell(multi_hot(v, 6), h1, c1);
    h2 = nn::gru_cell(h1, h2, c2);
    want.push_back(nn::sigmoid(nn::affine(p.at("W_out"), h2, p.at("b_out").span())[0]));
  }
  EXPECT_NEAR(rnn.predict(r)[0][0], want[2], 1e-14);
  const auto esm = rnn.predict(r, {1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(esm[i][0], want[i], 1e-14);
}

TEST(Baselines, RnnAttentionMlpUniformWhenScoringIsConstant) {
  RnnAttentionMlp m(small(ModelKind::kRnnAttnMlp));
  Rng rng(7);
  randomize_params(m.params(), rng);
  m.params().at("w_attn").fill(0.0);
  const auto r = make_record({{0}, {1}, {2}, {3}});
  for (double a : m.attention(r, 4)) EXPECT_NEAR(a, 0.25, 1e-15);
  // Uniform attention makes the context the mean embedding.
  std::vector<double> mean(4, 0.0);
  for (const auto& v : r.visits) {
    const auto e = nn::affine(m.params().at("W_emb"), multi_hot(v, 6), std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < 4; ++i) mean[i] += e[i] / 4.0;
  }
  const auto logits = nn::affine(m.params().at("W_out"), mean, m.params().at("b_out").span());
  EXPECT_NEAR(m.predict(r)[0][0], nn::sigmoid(logits[0]), 1e-14);
}

TEST(Baselines, RnnAttentionMlpIsCausal) {
  RnnAttentionMlp m(small(ModelKind::kRnnAttnMlp));
  Rng rng(8);
  randomize_params(m.params(), rng);
  const auto a = make_record({{0}, {1}, {2}});
  auto b = a;
  b.visits[2].codes = {5};
  EXPECT_EQ(m.attention(a, 2), m.attention(b, 2));
  EXPECT_EQ(m.predict(a, {2}), m.predict(b, {2}));
  const auto w = m.attention(a, 3);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
}

TEST(Baselines, ScalarReverseAttentionMatchesRetainWithUnitBeta) {
  const RnnAttentionRnn ar(small(ModelKind::kRnnAttnRnn));
  auto cfg = small(ModelKind::kRetain);
  cfg.dropout = ar.config().dropout;
  RetainModel full(cfg);
  for (auto id : ar.params().ids()) full.params().at(ar.params().name(id)) = ar.params()[id];
  full.set_unit_beta(true);
  const auto r = make_record({{0, 1}, {2}, {3, 4, 5}});
  EXPECT_NEAR(ar.predict(r)[0][0], full.predict(r)[0][0], 1e-15);
}

TEST(Baselines, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  for (auto kind : {ModelKind::kLR, ModelKind::kMLP, ModelKind::kRNN, ModelKind::kRnnAttnMlp,
                    ModelKind::kRnnAttnRnn}) {
    for (auto task : {Task::kL2D, Task::kESM}) {
      auto m = make_model(tiny_model_config(kind, task, 21));
      randomize_params(m->params(), rng);
      const auto r = random_record(10, 4, task, m->config().dims.s, rng);
      for (bool training : {false, true}) {
        const auto report = gradient_check(*m, r, training, 77);
        EXPECT_TRUE(report.passed()) << to_string(kind) << ' ' << to_string(task) << ' ' << training << ' '
                                     << report.max_relative_error();
      }
    }
  }
}

TEST(Baselines, RejectOutOfVocabularyCodes) {
  const auto r = make_record({{0}, {7}});
  for (auto kind : {ModelKind::kLR, ModelKind::kMLP, ModelKind::kRNN, ModelKind::kRnnAttnMlp,
                    ModelKind::kRnnAttnRnn}) {
    EXPECT_THROW(make_model(small(kind))->predict(r), DimensionError) << to_string(kind);
  }
}
