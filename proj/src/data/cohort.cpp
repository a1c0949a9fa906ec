// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "retain/data.hpp"
#include "retain/errors.hpp"

namespace retain::data {
namespace {

constexpr int kAgeBands = 5;  // 40-85 years in 9-year bands

/// Heavy-tailed background code distribution over a seeded code ranking.
class PowerLawSampler {
 public:
  PowerLawSampler(std::vector<int> codes, double exponent, Rng& rng) : codes_(std::move(codes)) {
    shuffle(codes_, rng);
    double total = 0.0;
    for (std::size_t i = 0; i < codes_.size(); ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cumulative_.push_back(total);
    }
  }

  int draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return codes_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  std::size_t size() const { return codes_.size(); }

 private:
  std::vector<int> codes_;
  std::vector<double> cumulative_;
};

/// `count` distinct sorted integers from [lo, hi].
std::vector<std::int64_t> distinct_days(std::size_t count, std::int64_t lo, std::int64_t hi, Rng& rng) {
  if (hi - lo + 1 < static_cast<std::int64_t>(count)) {
    throw ConfigError("observation window too short for " + std::to_string(count) + " visits");
  }
  std::set<std::int64_t> days;
  while (days.size() < count) days.insert(rng.uniform_int(lo, hi));
  return {days.begin(), days.end()};
}

std::vector<Visit> background_visits(const std::vector<std::int64_t>& days, const CohortConfig& config,
                                     const PowerLawSampler& sampler, Rng& rng) {
  std::vector<Visit> visits;
  const std::size_t cap = std::min(config.max_codes_per_visit, sampler.size());
  for (auto day : days) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.min_codes_per_visit),
                                                            static_cast<std::int64_t>(cap)));
    std::set<int> codes;
    while (codes.size() < n) codes.insert(sampler.draw(rng));
    visits.push_back({day, {codes.begin(), codes.end()}, {}});
  }
  return visits;
}

void insert_code(Visit& visit, int code) {
  auto it = std::lower_bound(visit.codes.begin(), visit.codes.end(), code);
  if (it == visit.codes.end() || *it != code) visit.codes.insert(it, code);
}

std::size_t draw_length(const CohortConfig& config, Rng& rng) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.min_visits),
                                                  static_cast<std::int64_t>(config.max_visits)));
}

/// Recency cohort: cases carry every motif code inside the last w visits;
/// controls may carry them just before that window.
std::vector<Visit> recency_visits(bool is_case, std::int64_t index_day, const CohortConfig& config,
                                  const PowerLawSampler& sampler, Rng& rng) {
  const std::size_t n = draw_length(config, rng);
  const auto days = distinct_days(n, index_day - config.max_span_days, index_day - 1, rng);
  auto visits = background_visits(days, config, sampler, rng);
  const std::size_t w = config.motif_window;
  if (is_case) {
    const std::size_t first = n > w ? n - w : 0;
    for (int code : config.motif_codes) {
      insert_code(visits[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(first),
                                                                  static_cast<std::int64_t>(n - 1)))],
                  code);
    }
  } else if (n > w && rng.bernoulli(config.decoy_rate)) {
    const std::size_t last = n - w - 1;
    const std::size_t first = n >= 2 * w ? n - 2 * w : 0;
    for (int code : config.motif_codes) {
      insert_code(visits[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(first),
                                                                  static_cast<std::int64_t>(last)))],
                  code);
    }
  }
  return visits;
}

/// Gap cohort: everyone carries the motif in one visit inside the last w
/// visits; only the time from that visit to the final visit differs.
std::vector<Visit> gap_visits(bool is_case, std::int64_t index_day, const CohortConfig& config,
                              const PowerLawSampler& sampler, Rng& rng) {
  const std::size_t n = draw_length(config, rng);
  const std::size_t w = std::min(config.motif_window, n);
  const auto back = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(w) - 1));
  const std::size_t motif_pos = n - 1 - back;
  const std::int64_t last_day = index_day - rng.uniform_int(1, 14);
  const std::int64_t gap = config.gap_days;

  std::vector<std::int64_t> days;
  std::int64_t motif_day = 0;
  std::vector<std::int64_t> tail;  // days of visits motif_pos+1 .. n-1 (last fixed to last_day)
  if (is_case) {
    auto window = distinct_days(back + 1, last_day - gap, last_day - 1, rng);
    motif_day = window.front();
    tail.assign(window.begin() + 1, window.end());
    tail.back() = last_day;
  } else {
    auto window = distinct_days(back - 1, last_day - gap, last_day - 1, rng);
    tail = window;
    tail.push_back(last_day);
    motif_day = last_day - rng.uniform_int(3 * gap, 6 * gap);
  }
  const std::int64_t start = index_day - config.max_span_days;
  days = distinct_days(motif_pos, start, motif_day - 1, rng);
  days.push_back(motif_day);
  days.insert(days.end(), tail.begin(), tail.end());

  auto visits = background_visits(days, config, sampler, rng);
  for (int code : config.motif_codes) insert_code(visits[motif_pos], code);
  return visits;
}

std::vector<Visit> make_visits(bool is_case, std::int64_t index_day, const CohortConfig& config,
                               const PowerLawSampler& sampler, Rng& rng) {
  return config.motif_kind == MotifKind::kRecency ? recency_visits(is_case, index_day, config, sampler, rng)
                                                  : gap_visits(is_case, index_day, config, sampler, rng);
}

}  // namespace

std::string to_string(MotifKind kind) { return kind == MotifKind::kRecency ? "recency" : "gap"; }

MotifKind parse_motif_kind(const std::string& text) {
  if (text == "recency") return MotifKind::kRecency;
  if (text == "gap") return MotifKind::kGap;
  throw ConfigError("unknown motif kind '" + text + "' (expected recency or gap)");
}

void validate(const CohortConfig& c, const Vocabulary& vocab) {
  if (c.n_cases < 1) throw ConfigError("n_cases must be at least 1");
  if (c.controls_per_case < 1) throw ConfigError("controls_per_case must be at least 1");
  if (c.min_visits < 1 || c.min_visits > c.max_visits) throw ConfigError("invalid visit count range");
  if (c.motif_window < 1) throw ConfigError("motif_window must be positive");
  if (c.motif_codes.empty()) throw ConfigError("motif needs at least one code");
  if (c.min_codes_per_visit < 1 || c.min_codes_per_visit > c.max_codes_per_visit) {
    throw ConfigError("invalid codes-per-visit range");
  }
  std::set<int> seen;
  for (int code : c.motif_codes) {
    if (code < 0 || static_cast<std::size_t>(code) >= vocab.size()) {
      throw ConfigError("motif code " + std::to_string(code) + " outside vocabulary of " + std::to_string(vocab.size()));
    }
    if (!seen.insert(code).second) throw ConfigError("duplicate motif code " + std::to_string(code));
  }
  if (c.decoy_rate < 0.0 || c.decoy_rate > 1.0) throw ConfigError("decoy_rate must be a probability");
  if (static_cast<std::int64_t>(c.max_visits) + 14 > c.max_span_days) throw ConfigError("max_span_days too short");
  if (c.motif_kind == MotifKind::kGap) {
    if (c.min_visits < 2 || c.motif_window < 2) throw ConfigError("gap motif needs at least 2 visits and window 2");
    if (c.gap_days < static_cast<std::int64_t>(c.motif_window) + 1) throw ConfigError("gap_days too small");
    if (c.max_span_days < 6 * c.gap_days + 14 + static_cast<std::int64_t>(c.max_visits)) {
      throw ConfigError("max_span_days too short for gap_days");
    }
  }
}

bool motif_present(const PatientRecord& record, const CohortConfig& config) {
  const std::size_t n = record.visits.size();
  const std::size_t first = n > config.motif_window ? n - config.motif_window : 0;
  auto has = [](const Visit& v, int code) { return std::binary_search(v.codes.begin(), v.codes.end(), code); };
  if (config.motif_kind == MotifKind::kRecency) {
    return std::all_of(config.motif_codes.begin(), config.motif_codes.end(), [&](int code) {
      for (std::size_t i = first; i < n; ++i) {
        if (has(record.visits[i], code)) return true;
      }
      return false;
    });
  }
  const std::int64_t last_day = record.visits.back().day;
  for (std::size_t i = first; i < n; ++i) {
    const auto& v = record.visits[i];
    const bool all = std::all_of(config.motif_codes.begin(), config.motif_codes.end(),
                                 [&](int code) { return has(v, code); });
    if (all && last_day - v.day <= config.gap_days) return true;
  }
  return false;
}

Cohort assign_case_control(std::vector<PatientRecord> patients, std::size_t ratio) {
  std::sort(patients.begin(), patients.end(),
            [](const PatientRecord& a, const PatientRecord& b) { return a.patient_id < b.patient_id; });
  using Bucket = std::tuple<std::string, int>;
  std::map<Bucket, std::vector<std::size_t>> pool;  // ascending id order
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (patients[i].role == Role::kControl) pool[{patients[i].sex, patients[i].age_band}].push_back(i);
  }
  std::map<Bucket, std::size_t> cursor;
  std::vector<bool> keep(patients.size(), false);
  for (std::size_t i = 0; i < patients.size(); ++i) {
    auto& c = patients[i];
    if (c.role != Role::kCase) continue;
    keep[i] = true;
    c.matched_case.reset();
    const Bucket key{c.sex, c.age_band};
    auto& eligible = pool[key];
    auto& next = cursor[key];
    for (std::size_t taken = 0; taken < ratio && next < eligible.size(); ++taken, ++next) {
      auto& control = patients[eligible[next]];
      control.index_day = c.index_day;
      control.matched_case = c.patient_id;
      keep[eligible[next]] = true;
    }
  }
  Cohort cohort;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (keep[i]) cohort.records.push_back(std::move(patients[i]));
  }
  return cohort;
}

void split(Cohort& cohort, std::uint64_t seed) {
  const std::size_t n = cohort.records.size();
  if (n < 3) throw ArgumentError("split needs at least 3 patients, got " + std::to_string(n));
  std::vector<std::int64_t> ids;
  for (const auto& r : cohort.records) ids.push_back(r.patient_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  shuffle(ids, rng);
  const std::size_t n_train = n * 75 / 100;
  const std::size_t n_valid = n * 10 / 100;
  std::map<std::int64_t, Split> assignment;
  for (std::size_t i = 0; i < n; ++i) {
    assignment[ids[i]] = i < n_train ? Split::kTrain : i < n_train + n_valid ? Split::kValid : Split::kTest;
  }
  for (auto& r : cohort.records) r.split = assignment.at(r.patient_id);
}

Cohort generate_cohort(const CohortConfig& config, const Vocabulary& vocab) {
  validate(config, vocab);
  Rng rng(config.seed);
  Rng code_rng = rng.split();

  std::vector<int> background;
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    const int code = static_cast<int>(k);
    if (std::find(config.motif_codes.begin(), config.motif_codes.end(), code) == config.motif_codes.end()) {
      background.push_back(code);
    }
  }
  const PowerLawSampler sampler(std::move(background), config.power_law_exponent, code_rng);

  std::vector<PatientRecord> patients;
  std::int64_t next_id = 1;
  for (std::size_t c = 0; c < config.n_cases; ++c) {
    PatientRecord r;
    r.patient_id = next_id++;
    r.role = Role::kCase;
    r.sex = rng.bernoulli(0.5) ? "F" : "M";
    r.age_band = static_cast<int>(rng.uniform_int(0, kAgeBands - 1));
    r.index_day = config.max_span_days + rng.uniform_int(30, 1000);
    patients.push_back(std::move(r));
  }
  // Each case brings controls_per_case demographically identical candidates.
  for (std::size_t c = 0; c < config.n_cases; ++c) {
    for (std::size_t k = 0; k < config.controls_per_case; ++k) {
      PatientRecord r;
      r.patient_id = next_id++;
      r.role = Role::kControl;
      r.sex = patients[c].sex;
      r.age_band = patients[c].age_band;
      patients.push_back(std::move(r));
    }
  }

  Cohort cohort = assign_case_control(std::move(patients), config.controls_per_case);
  for (auto& r : cohort.records) {
    const bool is_case = r.role == Role::kCase;
    r.visits = make_visits(is_case, r.index_day, config, sampler, rng);
    if (config.task == Task::kL2D) {
      r.labels = {is_case ? std::vector<int>{0} : std::vector<int>{}};
    } else {
      r.labels = esm_labels(r, vocab);
    }
  }
  split(cohort, config.seed ^ 0x5EEDULL);
  return cohort;
}

}  // namespace retain::data
