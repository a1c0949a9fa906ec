// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact additive decomposition of a prediction into per-visit, per-code
// terms: omega[j][k] = alpha_j * W_out (beta_j (.) W_emb[:, k]) * x_{j,k}.
// activation(sum omega + b_out) reproduces the model output.

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "retain/data.hpp"
#include "retain/retain_model.hpp"

namespace retain::interpret {

inline constexpr double kReconstructionTolerance = 1e-8;

struct Contribution {
  std::size_t visit = 0;  // 0-based visit index j
  int code = 0;
  double input = 0.0;          // x_{j,k}
  std::vector<double> omega;   // length s
};

struct ContributionMatrix {
  std::size_t prediction_step = 0;  // 1-based
  OutputMode output = OutputMode::kSigmoid;
  /// Non-zero inputs only, ordered by (visit, code). Absent entries are 0.
  std::vector<Contribution> entries;
  std::vector<double> bias;      // b_out
  std::vector<double> expected;  // model output the decomposition must reproduce
};

/// Dense coefficients [j][k] (length-s vectors) for j < trace.step, k < r.
/// Throws StateError for a training-mode trace.
std::vector<std::vector<std::vector<double>>> contribution_coefficients(const ForwardTrace& trace,
                                                                        const RetainModel& model);

/// Coefficient for one (visit, code) pair.
std::vector<double> coefficient(const ForwardTrace& trace, const RetainModel& model, std::size_t visit, int code);

/// Multiplies coefficients by the record's input values. The attention held
/// in `trace` is used as-is, so a modified record yields counterfactual terms.
ContributionMatrix contributions(const ForwardTrace& trace, const RetainModel& model,
                                 const data::PatientRecord& record);

/// activation(sum omega + b_out) without any check.
std::vector<double> reconstruct_unchecked(const ContributionMatrix& cm);

/// activation(sum omega + b_out); throws IntegrityError when it differs from
/// `cm.expected` by more than the tolerance in the infinity norm.
std::vector<double> reconstruct_prediction(const ContributionMatrix& cm,
                                           double tolerance = kReconstructionTolerance);

/// Largest infinity-norm deviation between the reconstruction and cm.expected.
double reconstruction_error(const ContributionMatrix& cm);

struct RankedContribution {
  std::size_t visit = 0;
  int code = 0;
  double value = 0.0;
  bool operator==(const RankedContribution&) const = default;
};

/// Entries sorted by omega[d] descending, ties by (visit, code) ascending.
std::vector<RankedContribution> top_contributors(const ContributionMatrix& cm, std::size_t label, std::size_t n);

/// CSV: visit_index, day_offset, code_name, code_index, contribution_0..s-1.
/// visit_index is 1-based; rows are ordered by visit then code.
void export_contribution_timeline(const ContributionMatrix& cm, const data::PatientRecord& record,
                                  const data::Vocabulary& vocab, std::ostream& out);
void export_contribution_timeline(const ContributionMatrix& cm, const data::PatientRecord& record,
                                  const data::Vocabulary& vocab, const std::filesystem::path& path);

struct TimelineRow {
  std::size_t visit_index = 0;
  std::int64_t day_offset = 0;
  std::string code_name;
  int code_index = 0;
  std::vector<double> contributions;
  bool operator==(const TimelineRow&) const = default;
};

/// Parses a file written by export_contribution_timeline.
std::vector<TimelineRow> read_contribution_timeline(std::istream& in);

}  // namespace retain::interpret
