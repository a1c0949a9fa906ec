// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "retain/data.hpp"
#include "retain/errors.hpp"

namespace retain {

std::string to_string(Task task) { return task == Task::kL2D ? "l2d" : "esm"; }

Task parse_task(const std::string& text) {
  if (text == "l2d") return Task::kL2D;
  if (text == "esm") return Task::kESM;
  throw ConfigError("unknown task '" + text + "' (expected l2d or esm)");
}

}  // namespace retain

namespace retain::data {

using ojson = nlohmann::ordered_json;

std::string to_string(Role role) { return role == Role::kCase ? "case" : "control"; }

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "unassigned";
}

Role parse_role(const std::string& text) {
  if (text == "case") return Role::kCase;
  if (text == "control") return Role::kControl;
  throw ParseError("unknown role '" + text + "'");
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "valid") return Split::kValid;
  if (text == "test") return Split::kTest;
  if (text == "unassigned") return Split::kUnassigned;
  throw ParseError("unknown split '" + text + "'");
}

void PatientRecord::validate(std::size_t vocab_size) const {
  const std::string who = "patient " + std::to_string(patient_id);
  if (visits.empty()) throw ArgumentError(who + ": no visits");
  for (std::size_t i = 0; i < visits.size(); ++i) {
    const auto& v = visits[i];
    if (v.day < 0) throw ArgumentError(who + ": negative day offset");
    if (i > 0 && v.day <= visits[i - 1].day) throw ArgumentError(who + ": visit days must be strictly increasing");
    if (v.codes.empty()) throw ArgumentError(who + ": visit " + std::to_string(i) + " has no codes");
    if (!v.values.empty() && v.values.size() != v.codes.size()) throw ArgumentError(who + ": values/codes length mismatch");
    for (std::size_t k = 0; k < v.codes.size(); ++k) {
      if (v.codes[k] < 0 || static_cast<std::size_t>(v.codes[k]) >= vocab_size) {
        throw ArgumentError(who + ": code " + std::to_string(v.codes[k]) + " outside vocabulary");
      }
      if (k > 0 && v.codes[k] <= v.codes[k - 1]) throw ArgumentError(who + ": codes must be sorted and unique");
    }
  }
}

std::vector<double> dense_labels(const std::vector<int>& positives, std::size_t width) {
  std::vector<double> y(width, 0.0);
  for (int p : positives) {
    if (p < 0 || static_cast<std::size_t>(p) >= width) {
      throw DimensionError("label index " + std::to_string(p) + " outside label width " + std::to_string(width));
    }
    y[static_cast<std::size_t>(p)] = 1.0;
  }
  return y;
}

std::vector<std::vector<int>> esm_labels(const PatientRecord& record, const Vocabulary& vocab) {
  const auto [begin, end] = vocab.group_range("diagnosis");
  std::vector<std::vector<int>> labels;
  for (std::size_t i = 1; i < record.visits.size(); ++i) {
    std::vector<int> step;
    for (int c : record.visits[i].codes) {
      const auto k = static_cast<std::size_t>(c);
      if (k >= begin && k < end) step.push_back(static_cast<int>(k - begin));
    }
    labels.push_back(std::move(step));
  }
  return labels;
}

std::map<std::int64_t, std::int64_t> Cohort::matching() const {
  std::map<std::int64_t, std::int64_t> out;
  for (const auto& r : records) {
    if (r.matched_case) out[r.patient_id] = *r.matched_case;
  }
  return out;
}

std::vector<const PatientRecord*> Cohort::in_split(Split s) const {
  std::vector<const PatientRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

const PatientRecord* Cohort::find(std::int64_t patient_id) const {
  for (const auto& r : records) {
    if (r.patient_id == patient_id) return &r;
  }
  return nullptr;
}

std::string record_to_json_line(const PatientRecord& record) {
  ojson j;
  j["patient_id"] = record.patient_id;
  j["role"] = to_string(record.role);
  j["index_day"] = record.index_day;
  j["split"] = to_string(record.split);
  j["sex"] = record.sex;
  j["age_band"] = record.age_band;
  j["matched_case"] = record.matched_case ? ojson(*record.matched_case) : ojson(nullptr);
  ojson visits = ojson::array();
  for (const auto& v : record.visits) {
    ojson jv;
    jv["day"] = v.day;
    jv["codes"] = v.codes;
    if (!v.values.empty()) jv["values"] = v.values;
    visits.push_back(std::move(jv));
  }
  j["visits"] = std::move(visits);
  j["labels"] = record.labels;
  return j.dump();
}

PatientRecord record_from_json_line(const std::string& line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  try {
    const auto j = ojson::parse(line);
    PatientRecord r;
    r.patient_id = j.at("patient_id").get<std::int64_t>();
    r.role = parse_role(j.at("role").get<std::string>());
    r.index_day = j.at("index_day").get<std::int64_t>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.sex = j.value("sex", std::string());
    r.age_band = j.value("age_band", 0);
    if (j.contains("matched_case") && !j["matched_case"].is_null()) r.matched_case = j["matched_case"].get<std::int64_t>();
    for (const auto& jv : j.at("visits")) {
      Visit v;
      v.day = jv.at("day").get<std::int64_t>();
      v.codes = jv.at("codes").get<std::vector<int>>();
      if (jv.contains("values")) v.values = jv["values"].get<std::vector<double>>();
      if (!std::is_sorted(v.codes.begin(), v.codes.end()) ||
          std::adjacent_find(v.codes.begin(), v.codes.end()) != v.codes.end()) {
        throw ParseError(where + "code list is not sorted and unique");
      }
      if (!v.values.empty() && v.values.size() != v.codes.size()) throw ParseError(where + "values/codes length mismatch");
      r.visits.push_back(std::move(v));
    }
    r.labels = j.at("labels").get<std::vector<std::vector<int>>>();
    return r;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(where + e.what());
  }
}

void write_records(const Cohort& cohort, std::ostream& out) {
  for (const auto& r : cohort.records) out << record_to_json_line(r) << '\n';
}

void write_records(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_records(cohort, out);
  if (!out) throw IoError("failed writing " + path.string());
}

Cohort read_records(std::istream& in) {
  Cohort cohort;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    cohort.records.push_back(record_from_json_line(line, number));
  }
  return cohort;
}

Cohort read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_records(in);
}

}  // namespace retain::data
