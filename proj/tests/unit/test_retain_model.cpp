// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "retain/errors.hpp"
#include "retain/gradcheck.hpp"
#include "retain/nn.hpp"
#include "retain/retain_model.hpp"

using namespace retain;

namespace {

ModelConfig config_for(ModelKind kind, Task task = Task::kL2D, std::size_t s = 1) {
  ModelConfig c = default_model_config(kind, task, 12, s);
  c.dims = {12, 5, 4, 3, s};
  c.init_seed = 3;
  return c;
}

RetainModel random_model(ModelKind kind, std::uint64_t seed, Task task = Task::kL2D, std::size_t s = 1) {
  RetainModel m(config_for(kind, task, s));
  Rng rng(seed);
  randomize_params(m.params(), rng, 0.6);
  return m;
}

data::PatientRecord record_with(std::vector<std::vector<int>> visits, std::int64_t spacing = 7) {
  data::PatientRecord r;
  r.patient_id = 5;
  r.role = data::Role::kCase;
  std::int64_t day = 3;
  for (auto& codes : visits) {
    r.visits.push_back(data::Visit{day, codes, {}});
    day += spacing;
  }
  r.labels = {{0}};
  return r;
}

std::vector<std::vector<double>> embed_all(const RetainModel& m, const data::PatientRecord& r, std::size_t upto) {
  std::vector<std::vector<double>> v;
  for (std::size_t j = 0; j < upto; ++j) v.push_back(m.embed_visit(r.visits[j]));
  return v;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(RetainModel, ParameterShapesAndNames) {
  RetainModel m(config_for(ModelKind::kRetain));
  const auto& p = m.params();
  EXPECT_EQ(p.at("W_emb").shape(), (std::vector<std::size_t>{5, 12}));
  EXPECT_EQ(p.at("alpha.W_update").shape(), (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(p.at("w_alpha").shape(), (std::vector<std::size_t>{4}));
  EXPECT_EQ(p.at("b_alpha").shape(), (std::vector<std::size_t>{1}));
  EXPECT_EQ(p.at("beta.U_cand").shape(), (std::vector<std::size_t>{3, 3}));
  EXPECT_EQ(p.at("W_beta").shape(), (std::vector<std::size_t>{5, 3}));
  EXPECT_EQ(p.at("b_beta").shape(), (std::vector<std::size_t>{5}));
  EXPECT_EQ(p.at("W_out").shape(), (std::vector<std::size_t>{1, 5}));
  EXPECT_EQ(p.regularized_names(), (std::vector<std::string>{"W_emb", "w_alpha", "W_beta", "W_out"}));

  RetainModel ts(config_for(ModelKind::kRetainTs));
  EXPECT_EQ(ts.params().at("alpha.W_update").shape(), (std::vector<std::size_t>{4, 6}));
  EXPECT_EQ(ts.params().at("beta.W_reset").shape(), (std::vector<std::size_t>{3, 6}));
  EXPECT_THROW(RetainModel(config_for(ModelKind::kLR)), ConfigError);
}

TEST(RetainModel, EmbedVisitIsLinear) {
  const auto m = random_model(ModelKind::kRetain, 1);
  const auto& W = m.params().at("W_emb");
  const auto one = m.embed_visit({0, {4}, {}});
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(one[i], W.at(i, 4));
  const auto zero = m.embed_visit({0, {}, {}});
  for (double v : zero) EXPECT_EQ(v, 0.0);
  const auto multi = m.embed_visit({0, {2, 5}, {}});
  const auto a = m.embed_visit({0, {2}, {}});
  const auto b = m.embed_visit({0, {5}, {}});
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(multi[i], a[i] + b[i]);
  EXPECT_THROW(m.embed_visit({0, {12}, {}}), DimensionError);
  EXPECT_THROW(m.embed_visit({0, {1, 2}, {1.0}}), DimensionError);
}

TEST(RetainModel, VisitAttentionExamples) {
  auto m = random_model(ModelKind::kRetain, 2);
  const auto r = record_with({{1, 2}, {3}, {7, 8, 11}});
  const auto v = embed_all(m, r, 3);
  EXPECT_EQ(m.visit_attention({v[0]}), (std::vector<double>{1.0}));

  // Composition oracle: reversed GRU, affine read-out, softmax.
  const auto g = nn::run_rnn_reversed(v, nn::GruCellParams::from(m.params(), find_gru_cell(m.params(), "alpha")));
  std::vector<double> e;
  for (const auto& state : g) {
    double acc = m.params().at("b_alpha")[0];
    for (std::size_t k = 0; k < state.size(); ++k) acc += m.params().at("w_alpha")[k] * state[k];
    e.push_back(acc);
  }
  const auto want = nn::softmax(e);
  const auto got = m.visit_attention(v);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got[j], want[j], 1e-15);
  EXPECT_NEAR(sum(got), 1.0, 1e-12);

  m.params().at("w_alpha").fill(0.0);
  for (double a : m.visit_attention(v)) EXPECT_NEAR(a, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(m.visit_attention({}), ArgumentError);
}

TEST(RetainModel, VariableAttentionExamples) {
  auto m = random_model(ModelKind::kRetain, 3);
  const auto r = record_with({{0, 9}, {4}});
  const auto v = embed_all(m, r, 2);
  const auto h = nn::run_rnn_reversed(v, nn::GruCellParams::from(m.params(), find_gru_cell(m.params(), "beta")));
  const auto betas = m.variable_attention(v);
  ASSERT_EQ(betas.size(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i < 5; ++i) {
      double acc = m.params().at("b_beta")[i];
      for (std::size_t k = 0; k < 3; ++k) acc += m.params().at("W_beta").at(i, k) * h[j][k];
      EXPECT_NEAR(betas[j][i], std::tanh(acc), 1e-15);
    }
  }
  m.params().at("W_beta").fill(0.0);
  m.params().at("b_beta").fill(0.0);
  for (const auto& b : m.variable_attention(v)) {
    for (double x : b) EXPECT_EQ(x, 0.0);
  }
  m.params().at("b_beta").fill(1e6);
  for (const auto& b : m.variable_attention(v)) {
    for (double x : b) {
      EXPECT_LE(x, 1.0);
      EXPECT_GE(x, 0.999);
    }
  }
}

TEST(RetainModel, ContextVectorExamples) {
  const std::vector<std::vector<double>> v{{1, 2}, {3, -1}};
  EXPECT_EQ(RetainModel::context_vector({v[0]}, {1.0}, {{1, 1}}), v[0]);
  EXPECT_EQ(RetainModel::context_vector(v, {0.5, 0.5}, {{0, 0}, {0, 0}}), (std::vector<double>{0, 0}));
  const auto c = RetainModel::context_vector(v, {0.25, 0.75}, {{1, 0.5}, {-1, 2}});
  EXPECT_DOUBLE_EQ(c[0], 0.25 * 1 * 1 + 0.75 * -1 * 3);
  EXPECT_DOUBLE_EQ(c[1], 0.25 * 0.5 * 2 + 0.75 * 2 * -1);
  EXPECT_THROW(RetainModel::context_vector(v, {1.0}, {{1, 1}, {1, 1}}), DimensionError);
}

TEST(RetainModel, PredictExamples) {
  RetainModel sig(config_for(ModelKind::kRetain));
  sig.params().at("W_out").fill(0.0);
  EXPECT_EQ(sig.predict_from_context(std::vector<double>(5, 0.0)), (std::vector<double>{0.5}));
  RetainModel soft(config_for(ModelKind::kRetain, Task::kESM, 4));
  ASSERT_EQ(soft.config().output, OutputMode::kSoftmax);
  soft.params().at("W_out").fill(0.0);
  for (double p : soft.predict_from_context(std::vector<double>(5, 0.0))) EXPECT_DOUBLE_EQ(p, 0.25);

  const auto m = random_model(ModelKind::kRetain, 4);
  const std::vector<double> c{0.1, -0.3, 0.7, 0.2, -0.9};
  const auto y = m.predict_from_context(c);
  const auto logits = nn::affine(m.params().at("W_out"), c, m.params().at("b_out").span());
  EXPECT_NEAR(y[0], nn::sigmoid(logits[0]), 1e-15);
  EXPECT_THROW(m.predict_from_context({1.0}), DimensionError);
}

TEST(RetainModel, TapeTraceMatchesPureComposition) {
  const auto m = random_model(ModelKind::kRetain, 5);
  const auto r = record_with({{1}, {2, 3}, {4}, {5, 6, 7}});
  Rng rng(0);
  const auto trace = m.forward_sequence(r, Task::kL2D, false, rng).front();
  const auto v = embed_all(m, r, 4);
  const auto alphas = m.visit_attention(v);
  const auto betas = m.variable_attention(v);
  const auto c = RetainModel::context_vector(v, alphas, betas);
  const auto y = m.predict_from_context(c);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(trace.attention.alphas[j], alphas[j], 1e-14);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(trace.context[i], c[i], 1e-14);
  EXPECT_NEAR(trace.y_hat[0], y[0], 1e-14);
  EXPECT_EQ(trace.embeddings.size(), 4u);
  EXPECT_EQ(trace.alpha_states.size(), 4u);
  EXPECT_EQ(trace.beta_states.size(), 4u);
  EXPECT_EQ(trace.context.size(), 5u);
}

TEST(RetainModel, ForwardSequenceTraceCounts) {
  const auto m = random_model(ModelKind::kRetain, 6);
  Rng rng(0);
  const auto single = record_with({{3}});
  for (auto task : {Task::kL2D, Task::kESM}) {
    const auto t = m.forward_sequence(single, task, false, rng);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].attention.alphas, (std::vector<double>{1.0}));
  }
  const auto r = record_with({{1}, {2}, {3}, {4}, {5}});
  const auto l2d = m.forward_sequence(r, Task::kL2D, false, rng);
  const auto esm = m.forward_sequence(r, Task::kESM, false, rng);
  ASSERT_EQ(l2d.size(), 1u);
  ASSERT_EQ(esm.size(), 5u);
  EXPECT_EQ(l2d[0].y_hat, esm[4].y_hat);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(esm[i].step, i + 1);
  EXPECT_THROW(m.forward_sequence(data::PatientRecord{}, Task::kL2D, false, rng), ArgumentError);
}

TEST(RetainModel, CausalityProbe) {
  const auto m = random_model(ModelKind::kRetain, 7);
  const auto r = record_with({{1}, {2}, {3}});
  auto changed = r;
  changed.visits[2].codes = {0, 8, 11};
  changed.visits[1].codes = {9};
  Rng rng(0);
  const auto a = m.forward_sequence(r, Task::kESM, false, rng);
  const auto b = m.forward_sequence(changed, Task::kESM, false, rng);
  EXPECT_EQ(a[0].y_hat, b[0].y_hat);
  EXPECT_EQ(a[0].attention.alphas, b[0].attention.alphas);
  EXPECT_NE(a[1].y_hat, b[1].y_hat);
}

TEST(RetainModel, FirstVisitChangesAttentionAtLaterSteps) {
  const auto m = random_model(ModelKind::kRetain, 8);
  const auto r = record_with({{1}, {2}, {3}});
  auto changed = r;
  changed.visits[0].codes = {10};
  Rng rng(0);
  const auto a = m.forward_sequence(r, Task::kESM, false, rng);
  const auto b = m.forward_sequence(changed, Task::kESM, false, rng);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_NE(a[i].attention.alphas, b[i].attention.alphas);
}

TEST(RetainModel, AttentionInvariantsOnRandomPasses) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_model(trial % 2 ? ModelKind::kRetainTs : ModelKind::kRetain, 100 + trial);
    const auto r = random_record(12, 1 + trial % 7, Task::kL2D, 1, rng);
    for (const auto& t : m.forward_sequence(r, Task::kESM, trial % 3 == 0, rng)) {
      EXPECT_NEAR(sum(t.attention.alphas), 1.0, 1e-10);
      for (const auto& b : t.attention.betas) {
        for (double x : b) {
          EXPECT_LE(x, 1.0);
          EXPECT_GE(x, -1.0);
        }
      }
    }
  }
}

TEST(RetainModel, TrainingDropoutChangesOutputWithSameInputs) {
  const auto m = random_model(ModelKind::kRetain, 10);
  const auto r = record_with({{1, 2}, {3, 4}, {5, 6}});
  Rng a(1), b(1), c(2);
  const auto ta = m.forward_sequence(r, Task::kL2D, true, a).front();
  const auto tb = m.forward_sequence(r, Task::kL2D, true, b).front();
  const auto tc = m.forward_sequence(r, Task::kL2D, true, c).front();
  EXPECT_EQ(ta.y_hat, tb.y_hat);
  EXPECT_NE(ta.y_hat, tc.y_hat);
  EXPECT_TRUE(ta.training);
}

TEST(RetainModel, TimestampsAreLogDaysSinceFirstVisit) {
  const auto r = record_with({{1}, {2}, {3}}, 10);
  const auto ts = visit_timestamps(r);
  EXPECT_EQ(ts[0], 0.0);
  EXPECT_DOUBLE_EQ(ts[1], std::log(11.0));
  EXPECT_DOUBLE_EQ(ts[2], std::log(21.0));
  auto broken = r;
  broken.visits[2].day = broken.visits[1].day;
  EXPECT_THROW(visit_timestamps(broken), ArgumentError);
  Rng rng(0);
  const auto ts_model = random_model(ModelKind::kRetainTs, 11);
  EXPECT_THROW(ts_model.forward_with_timestamps(broken, Task::kL2D, false, rng), ArgumentError);
  const auto plain = random_model(ModelKind::kRetain, 11);
  EXPECT_THROW(plain.forward_with_timestamps(r, Task::kL2D, false, rng), StateError);
  const auto v = embed_all(ts_model, r, 3);
  EXPECT_THROW(ts_model.visit_attention(v), ArgumentError);
}

TEST(RetainModel, TimestampedModelUsesPlainEmbeddingsInContext) {
  const auto m = random_model(ModelKind::kRetainTs, 12);
  const auto r = record_with({{1}, {4, 5}, {7}}, 13);
  Rng rng(0);
  const auto t = m.forward_with_timestamps(r, Task::kL2D, false, rng).front();
  const auto v = embed_all(m, r, 3);
  const auto ts = visit_timestamps(r);
  const auto alphas = m.visit_attention(v, ts);
  const auto betas = m.variable_attention(v, ts);
  const auto c = RetainModel::context_vector(v, alphas, betas);
  ASSERT_EQ(t.context.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(t.context[i], c[i], 1e-14);
}

TEST(RetainModel, TimestampSpacingChangesAttention) {
  const auto m = random_model(ModelKind::kRetainTs, 13);
  const auto a = record_with({{1}, {2}, {3}}, 5);
  const auto b = record_with({{1}, {2}, {3}}, 90);
  Rng rng(0);
  const auto ta = m.forward_with_timestamps(a, Task::kL2D, false, rng).front();
  const auto tb = m.forward_with_timestamps(b, Task::kL2D, false, rng).front();
  EXPECT_NE(ta.attention.alphas, tb.attention.alphas);
  const auto single = m.forward_with_timestamps(record_with({{4}}, 1), Task::kL2D, false, rng).front();
  EXPECT_EQ(single.attention.alphas, (std::vector<double>{1.0}));
}

TEST(RetainModel, ConstantTimestampBehavesLikeConstantChannel) {
  // Equal spacing of zero is impossible (days strictly increase), so compare
  // two records whose timestamps coincide: the model sees identical inputs.
  const auto m = random_model(ModelKind::kRetainTs, 14);
  auto a = record_with({{1}, {2}}, 30);
  auto b = record_with({{1}, {2}}, 30);
  b.visits[0].day += 100;
  b.visits[1].day += 100;
  Rng rng(0);
  EXPECT_EQ(m.forward_with_timestamps(a, Task::kL2D, false, rng).front().y_hat,
            m.forward_with_timestamps(b, Task::kL2D, false, rng).front().y_hat);
}

TEST(RetainModel, UnitBetaHook) {
  auto m = random_model(ModelKind::kRetain, 15);
  const auto r = record_with({{1}, {2, 3}});
  m.set_unit_beta(true);
  Rng rng(0);
  const auto t = m.forward_sequence(r, Task::kL2D, false, rng).front();
  for (const auto& b : t.attention.betas) {
    for (double x : b) EXPECT_EQ(x, 1.0);
  }
  const auto v = embed_all(m, r, 2);
  const auto c = RetainModel::context_vector(v, m.visit_attention(v), m.variable_attention(v));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(t.context[i], c[i], 1e-14);
}

TEST(RetainModel, RejectsOutOfRangeSteps) {
  const auto m = random_model(ModelKind::kRetain, 16);
  const auto r = record_with({{1}, {2}});
  Rng rng(0);
  EXPECT_THROW(m.traces(r, {3}, false, rng), ArgumentError);
  EXPECT_THROW(m.traces(r, {0}, false, rng), ArgumentError);
}
