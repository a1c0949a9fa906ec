// SPDX-License-Identifier: Apache-2.0
#include "retain/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "json.hpp"
#include "retain/errors.hpp"
#include "retain/nn.hpp"

namespace retain::metrics {

double auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw DimensionError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores) {
    if (std::isnan(s)) throw NumericalError("auc: NaN score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the concordant count plus the tied count, kept in integers.
  std::uint64_t doubled = 0;
  std::uint64_t cases = 0, controls = 0, controls_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_cases = 0, group_controls = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) ++group_cases; else ++group_controls;
      ++j;
    }
    doubled += group_cases * (2 * controls_below + group_controls);
    controls_below += group_controls;
    cases += group_cases;
    controls += group_controls;
    i = j;
  }
  if (cases == 0 || controls == 0) throw UndefinedMetricError("auc needs at least one case and one control");
  return (static_cast<double>(doubled) / 2.0) / static_cast<double>(cases * controls);
}

std::optional<double> recall_at_k(std::span<const double> y_hat, std::span<const double> y, std::size_t k) {
  if (y_hat.size() != y.size()) throw DimensionError("recall_at_k: prediction and label widths differ");
  if (k == 0) throw ArgumentError("recall_at_k: k must be positive");
  std::size_t positives = 0;
  for (double v : y) positives += v != 0.0 ? 1 : 0;
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(y_hat.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return y_hat[a] != y_hat[b] ? y_hat[a] > y_hat[b] : a < b; });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += y[order[i]] != 0.0 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

void RecallAccumulator::add_step(std::span<const double> y_hat, std::span<const double> y) {
  if (const auto r = recall_at_k(y_hat, y, k_)) {
    step_sum_ += *r;
    ++step_count_;
  }
}

void RecallAccumulator::end_patient() {
  if (step_count_ > 0) {
    patient_sum_ += step_sum_ / static_cast<double>(step_count_);
    ++patient_count_;
  }
  step_sum_ = 0.0;
  step_count_ = 0;
}

std::optional<double> RecallAccumulator::value() const {
  if (patient_count_ == 0) return std::nullopt;
  return patient_sum_ / static_cast<double>(patient_count_);
}

std::string EvalReport::to_json(bool include_timings) const {
  nlohmann::ordered_json j;
  j["neg_log_likelihood"] = neg_log_likelihood;
  j["auc"] = auc ? nlohmann::ordered_json(*auc) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : recall_at_k) recall[std::to_string(k)] = v;
  j["recall_at_k"] = recall;
  j["patients"] = patients;
  if (include_timings) {
    j["train_seconds"] = train_seconds;
    j["test_seconds"] = test_seconds;
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.neg_log_likelihood = j.at("neg_log_likelihood").get<double>();
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    for (const auto& [k, v] : j.at("recall_at_k").items()) r.recall_at_k[std::stoul(k)] = v.get<double>();
    r.patients = j.at("patients").get<std::size_t>();
    r.train_seconds = j.value("train_seconds", 0.0);
    r.test_seconds = j.value("test_seconds", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
}

EvalReport evaluate(const SequenceModel& model, const std::vector<const data::PatientRecord*>& records,
                    const std::vector<std::size_t>& ks) {
  if (records.empty()) throw ArgumentError("evaluate: empty split");
  const auto start = std::chrono::steady_clock::now();
  const auto& config = model.config();
  EvalReport report;
  std::vector<double> scores;
  std::vector<int> positive;
  std::vector<RecallAccumulator> recalls;
  for (auto k : ks) recalls.emplace_back(k);
  double nll_sum = 0.0;
  for (const auto* record : records) {
    const auto steps = prediction_steps(*record, config.task);
    const auto outputs = model.predict(*record, steps);
    double patient_nll = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto y = step_labels(*record, config.task, steps[i], config.dims.s);
      patient_nll += nn::cross_entropy_step(outputs[i], y);
      if (config.task == Task::kESM) {
        for (auto& acc : recalls) acc.add_step(outputs[i], y);
      }
    }
    nll_sum += patient_nll / static_cast<double>(steps.size());
    if (config.task == Task::kL2D) {
      scores.push_back(outputs.back().at(0));
      positive.push_back(record->role == data::Role::kCase ? 1 : 0);
    } else {
      for (auto& acc : recalls) acc.end_patient();
    }
  }
  report.patients = records.size();
  report.neg_log_likelihood = nll_sum / static_cast<double>(records.size());
  if (!std::isfinite(report.neg_log_likelihood)) throw NumericalError("evaluate: non-finite likelihood");
  if (config.task == Task::kL2D) {
    const bool both = std::find(positive.begin(), positive.end(), 1) != positive.end() &&
                      std::find(positive.begin(), positive.end(), 0) != positive.end();
    if (both) report.auc = auc(scores, positive);
  } else {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (const auto v = recalls[i].value()) report.recall_at_k[ks[i]] = *v;
    }
  }
  report.test_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace retain::metrics
