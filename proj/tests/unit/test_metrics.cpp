// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "retain/errors.hpp"
#include "retain/metrics.hpp"
#include "retain/nn.hpp"

using namespace retain;
using namespace retain::metrics;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

data::PatientRecord esm_record(std::int64_t id, std::vector<std::vector<int>> visits,
                               std::vector<std::vector<int>> labels) {
  data::PatientRecord r;
  r.patient_id = id;
  std::int64_t day = 0;
  for (auto& c : visits) r.visits.push_back({day++, c, {}});
  r.labels = std::move(labels);
  return r;
}

}  // namespace

TEST(Auc, SpecExamples) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 1, 0, 0}), 0.75);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> level(0, 6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + trial * 7;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(gen) / 6.0;
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(gen() % 2);
    }
    EXPECT_NEAR(auc(s, y), pairwise_auc(s, y), 1e-15);
  }
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{0}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1}), DimensionError);
  EXPECT_THROW(auc(std::vector<double>{std::nan(""), 0.2}, std::vector<int>{1, 0}), NumericalError);
}

TEST(RecallAtK, SpecExamples) {
  const std::vector<double> y_hat{0.1, 0.5, 0.3, 0.05};
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{0, 1, 1, 0}, 1), 0.5);
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{0, 1, 1, 0}, 2), 1.0);
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{1, 0, 0, 1}, 3), 0.5);
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{1, 0, 0, 1}, 10), 1.0);
  EXPECT_FALSE(recall_at_k(y_hat, std::vector<double>{0, 0, 0, 0}, 2).has_value());
  EXPECT_THROW(recall_at_k(y_hat, std::vector<double>{0, 1}, 2), DimensionError);
  EXPECT_THROW(recall_at_k(y_hat, std::vector<double>{0, 1, 0, 0}, 0), ArgumentError);
}

TEST(RecallAtK, TiesBreakTowardLowerIndex) {
  const std::vector<double> y_hat{0.2, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{1, 0, 0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{0, 0, 1}, 1), 0.0);
  EXPECT_DOUBLE_EQ(*recall_at_k(y_hat, std::vector<double>{0, 0, 1}, 2), 0.0);
}

TEST(RecallAccumulator, AveragesStepsThenPatients) {
  RecallAccumulator acc(1);
  EXPECT_FALSE(acc.value().has_value());
  const std::vector<double> y_hat{0.9, 0.1};
  acc.add_step(y_hat, std::vector<double>{1, 0});  // 1
  acc.add_step(y_hat, std::vector<double>{0, 1});  // 0
  acc.add_step(y_hat, std::vector<double>{0, 0});  // skipped
  acc.end_patient();                               // 0.5
  acc.add_step(y_hat, std::vector<double>{1, 0});  // 1
  acc.end_patient();                               // 1
  acc.add_step(y_hat, std::vector<double>{0, 0});
  acc.end_patient();                               // excluded
  EXPECT_EQ(acc.patients(), 2u);
  EXPECT_DOUBLE_EQ(*acc.value(), 0.75);
}

TEST(EvalReport, JsonRoundTripAndTimings) {
  EvalReport r;
  r.neg_log_likelihood = 0.123456789012345678;
  r.auc = 0.8125;
  r.recall_at_k = {{5, 0.25}, {10, 0.5}};
  r.patients = 17;
  r.train_seconds = 3.5;
  r.test_seconds = 0.25;
  const auto plain = r.to_json();
  EXPECT_EQ(plain.find("seconds"), std::string::npos);
  auto back = EvalReport::from_json(plain);
  EXPECT_EQ(back.neg_log_likelihood, r.neg_log_likelihood);
  EXPECT_EQ(back.auc, r.auc);
  EXPECT_EQ(back.recall_at_k, r.recall_at_k);
  EXPECT_EQ(back.train_seconds, 0.0);
  EXPECT_EQ(EvalReport::from_json(r.to_json(true)), r);
  EvalReport none;
  EXPECT_FALSE(EvalReport::from_json(none.to_json()).auc.has_value());
  EXPECT_THROW(EvalReport::from_json("{}"), ParseError);
  EXPECT_THROW(EvalReport::from_json("not json"), ParseError);
}

TEST(Evaluate, ConstantModelGivesHalfAucAndLog2Loss) {
  ModelConfig c = default_model_config(ModelKind::kLR, Task::kL2D, 4, 1);
  auto m = make_model(c);
  for (auto id : m->params().ids()) m->params()[id].fill(0.0);
  std::vector<data::PatientRecord> records(4);
  for (std::size_t i = 0; i < 4; ++i) {
    records[i].patient_id = static_cast<std::int64_t>(i);
    records[i].role = i % 2 ? data::Role::kCase : data::Role::kControl;
    records[i].visits = {{0, {static_cast<int>(i)}, {}}};
    records[i].labels = {i % 2 ? std::vector<int>{0} : std::vector<int>{}};
  }
  std::vector<const data::PatientRecord*> ptrs;
  for (auto& r : records) ptrs.push_back(&r);
  const auto report = evaluate(*m, ptrs);
  EXPECT_DOUBLE_EQ(*report.auc, 0.5);
  EXPECT_NEAR(report.neg_log_likelihood, std::log(2.0), 1e-15);
  EXPECT_EQ(report.patients, 4u);
  EXPECT_TRUE(report.recall_at_k.empty());
  EXPECT_THROW(evaluate(*m, {}), ArgumentError);
}

TEST(Evaluate, EsmUsesPerPatientAveraging) {
  ModelConfig c = default_model_config(ModelKind::kLR, Task::kESM, 3, 3);
  c.window = 1;
  auto m = make_model(c);
  auto& W = m->params().at("W_out");
  W.fill(0.0);
  // Logit for label d is 5 * x_d: each visit predicts its own codes.
  for (std::size_t d = 0; d < 3; ++d) W.at(d, d) = 5.0;
  m->params().at("b_out").fill(0.0);
  const auto a = esm_record(1, {{0}, {1}, {2}}, {{0}, {2}});
  const auto b = esm_record(2, {{2}, {0}}, {{2}});
  const auto report = evaluate(*m, {&a, &b}, {1});
  // a: step 1 hit, step 2 miss -> 0.5; b: hit -> 1.
  EXPECT_DOUBLE_EQ(report.recall_at_k.at(1), 0.75);
  EXPECT_FALSE(report.auc.has_value());

  const auto y1 = m->predict(a, {1, 2});
  const double nll_a = (nn::cross_entropy_step(y1[0], std::vector<double>{1, 0, 0}) + nn::cross_entropy_step(y1[1], std::vector<double>{0, 0, 1})) / 2.0;
  const auto y2 = m->predict(b, {1});
  const double nll_b = nn::cross_entropy_step(y2[0], std::vector<double>{0, 0, 1});
  EXPECT_NEAR(report.neg_log_likelihood, (nll_a + nll_b) / 2.0, 1e-14);
}

TEST(Evaluate, SingleClassLeavesAucEmpty) {
  auto m = make_model(default_model_config(ModelKind::kLR, Task::kL2D, 4, 1));
  data::PatientRecord r;
  r.visits = {{0, {1}, {}}};
  r.labels = {{}};
  const auto report = evaluate(*m, {&r});
  EXPECT_FALSE(report.auc.has_value());
  EXPECT_TRUE(std::isfinite(report.neg_log_likelihood));
}
