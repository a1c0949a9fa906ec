// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retain/data.hpp"
#include "retain/model.hpp"

namespace retain::metrics {

/// Mann-Whitney AUC: (concordant + 0.5 * tied) / (cases * controls).
/// `positive[i]` marks cases. Throws UndefinedMetricError on one class.
double auc(std::span<const double> scores, std::span<const int> positive);

/// |top-k of y_hat (descending, ties by ascending index) intersect nonzero(y)|
/// / |nonzero(y)|. Returns nullopt when y has no positives (skipped).
std::optional<double> recall_at_k(std::span<const double> y_hat, std::span<const double> y, std::size_t k);

/// Averages per-step recalls within each patient, then over patients.
/// Patients whose steps were all skipped are excluded.
class RecallAccumulator {
 public:
  explicit RecallAccumulator(std::size_t k) : k_(k) {}
  void add_step(std::span<const double> y_hat, std::span<const double> y);
  void end_patient();
  std::size_t patients() const { return patient_count_; }
  /// nullopt when no patient contributed.
  std::optional<double> value() const;

 private:
  std::size_t k_;
  double patient_sum_ = 0.0;
  std::size_t patient_count_ = 0;
  double step_sum_ = 0.0;
  std::size_t step_count_ = 0;
};

struct EvalReport {
  double neg_log_likelihood = 0.0;
  std::optional<double> auc;               // L2D, both classes present
  std::map<std::size_t, double> recall_at_k;  // ESM
  std::size_t patients = 0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;

  /// Timings are wall-clock and omitted unless requested, so the default
  /// document is a pure function of model and data.
  std::string to_json(bool include_timings = false) const;
  static EvalReport from_json(const std::string& text);
  bool operator==(const EvalReport&) const = default;
};

/// Dropout off. NLL averages the per-step cross entropy within each patient,
/// then over patients. AUC (L2D) scores the first output at the final step and
/// is left empty when the records hold a single class.
EvalReport evaluate(const SequenceModel& model, const std::vector<const data::PatientRecord*>& records,
                    const std::vector<std::size_t>& ks = {5, 10});

}  // namespace retain::metrics
