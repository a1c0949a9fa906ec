// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "retain/rng.hpp"

namespace retain {

/// Prediction task. L2D: one terminal label vector per sequence. ESM: a
/// label vector at every step (the diagnosis codes of the next visit).
enum class Task { kL2D, kESM };

std::string to_string(Task task);
Task parse_task(const std::string& text);

}  // namespace retain

namespace retain::data {

enum class Role { kCase, kControl };
enum class Split { kUnassigned, kTrain, kValid, kTest };

std::string to_string(Role role);
std::string to_string(Split split);
Role parse_role(const std::string& text);
Split parse_split(const std::string& text);

/// Grouped code vocabulary. Indices are dense: group 0 first, then group 1, ...
class Vocabulary {
 public:
  struct Group {
    std::string name;
    std::vector<std::string> codes;
    bool operator==(const Group&) const = default;
  };

  Vocabulary() = default;
  explicit Vocabulary(std::vector<Group> groups);

  /// Synthetic display names with the grouped sizes used for diagnosis (283),
  /// medication (96) and procedure (238) codes.
  static Vocabulary synthetic(std::size_t diagnosis = 283, std::size_t medication = 96,
                              std::size_t procedure = 238);

  std::size_t size() const { return names_.size(); }
  const std::vector<Group>& groups() const { return groups_; }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  /// [begin, end) code range of a group.
  std::pair<std::size_t, std::size_t> group_range(const std::string& group) const;

  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return groups_ == other.groups_; }

 private:
  std::vector<Group> groups_;
  std::vector<std::string> names_;
};

/// Replaces anything outside [A-Za-z0-9_ ] with '_'.
std::string sanitize_name(const std::string& name);

struct Visit {
  std::int64_t day = 0;
  std::vector<int> codes;     // sorted, unique
  std::vector<double> values; // empty: every listed code has value 1
  double value(std::size_t i) const { return values.empty() ? 1.0 : values[i]; }
  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::int64_t patient_id = 0;
  Role role = Role::kControl;
  std::int64_t index_day = 0;
  Split split = Split::kUnassigned;
  std::string sex;
  int age_band = 0;
  std::optional<std::int64_t> matched_case;
  std::vector<Visit> visits;
  /// Positive label indices per prediction step. L2D records hold one entry.
  std::vector<std::vector<int>> labels;

  std::size_t num_visits() const { return visits.size(); }
  /// Throws ArgumentError when an invariant is broken (no visits, empty
  /// visit, non-increasing days, unsorted or out-of-range codes).
  void validate(std::size_t vocab_size) const;
  bool operator==(const PatientRecord&) const = default;
};

/// Dense 0/1 label vector of length `width` for one step.
std::vector<double> dense_labels(const std::vector<int>& positives, std::size_t width);

/// ESM targets: step i holds the diagnosis codes of visit i+1 (T-1 steps).
std::vector<std::vector<int>> esm_labels(const PatientRecord& record, const Vocabulary& vocab);

struct Cohort {
  std::vector<PatientRecord> records;

  std::size_t size() const { return records.size(); }
  /// control id -> case id
  std::map<std::int64_t, std::int64_t> matching() const;
  std::vector<const PatientRecord*> in_split(Split split) const;
  const PatientRecord* find(std::int64_t patient_id) const;
  bool operator==(const Cohort&) const = default;
};

enum class MotifKind {
  kRecency,  // label = every motif code occurs within the last `motif_window` visits
  kGap,      // label = the motif visit is within `gap_days` of the final visit
};

std::string to_string(MotifKind kind);
MotifKind parse_motif_kind(const std::string& text);

struct CohortConfig {
  std::size_t n_cases = 1000;
  std::size_t controls_per_case = 10;
  std::size_t min_visits = 5;
  std::size_t max_visits = 30;
  std::vector<int> motif_codes{12, 47};
  std::size_t motif_window = 5;
  std::int64_t max_span_days = 540;
  std::size_t min_codes_per_visit = 1;
  std::size_t max_codes_per_visit = 6;
  double power_law_exponent = 1.0;
  /// Probability that a control with enough visits carries the motif just
  /// outside the window (inside a 10-visit aggregation window).
  double decoy_rate = 0.9;
  MotifKind motif_kind = MotifKind::kRecency;
  std::int64_t gap_days = 60;
  Task task = Task::kL2D;
  std::uint64_t seed = 1;
};

/// Throws ConfigError on an invalid configuration.
void validate(const CohortConfig& config, const Vocabulary& vocab);

/// Synthetic case/control cohort; a pure function of (config, vocab).
Cohort generate_cohort(const CohortConfig& config, const Vocabulary& vocab);

/// The labelling rule the generator plants, evaluated on a record.
bool motif_present(const PatientRecord& record, const CohortConfig& config);

/// Greedy matching on (sex, age_band): cases in ascending id order each take
/// up to `ratio` unused controls of their bucket, lowest id first. Matched
/// controls inherit the case's index day. Unmatched controls are dropped.
Cohort assign_case_control(std::vector<PatientRecord> patients, std::size_t ratio);

/// Seeded shuffle of patient ids; floor(0.75 n) train, floor(0.10 n) valid,
/// the remainder test.
void split(Cohort& cohort, std::uint64_t seed);

void write_records(const Cohort& cohort, std::ostream& out);
void write_records(const Cohort& cohort, const std::filesystem::path& path);
Cohort read_records(std::istream& in);
Cohort read_records(const std::filesystem::path& path);

std::string record_to_json_line(const PatientRecord& record);
PatientRecord record_from_json_line(const std::string& line, std::size_t line_number);

}  // namespace retain::data
