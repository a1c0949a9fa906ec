// SPDX-License-Identifier: Apache-2.0
#include "retain/gradcheck.hpp"

#include <algorithm>
#include <set>

#include "retain/nn.hpp"

namespace retain {

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, p.max_relative_error);
  return worst;
}

GradCheckReport gradient_check(const SequenceModel& model, const data::PatientRecord& record, bool training,
                               std::uint64_t mask_seed, double h) {
  auto work = model.clone();
  auto objective = [&](const ParamSet& params) {
    work->params() = params;
    GradientTape tape(work->params());
    Rng rng(mask_seed);
    return tape.scalar(work->record_loss(tape, record, training, rng));
  };
  const auto numeric = nn::finite_diff_gradient(objective, model.params(), h);

  work->params() = model.params();
  GradientTape tape(work->params());
  Rng rng(mask_seed);
  const auto analytic = tape.backward(work->record_loss(tape, record, training, rng));

  GradCheckReport report;
  for (auto id : model.params().ids()) {
    ParamGradCheck entry{model.params().name(id), model.params()[id].size(), 0.0};
    for (std::size_t i = 0; i < entry.size; ++i) {
      entry.max_relative_error =
          std::max(entry.max_relative_error, nn::relative_error(analytic[id][i], numeric[id][i]));
    }
    report.params.push_back(entry);
  }
  return report;
}

void randomize_params(ParamSet& params, Rng& rng, double scale) {
  for (auto id : params.ids()) {
    for (auto& v : params[id].values()) v = rng.uniform(-scale, scale);
  }
}

data::PatientRecord random_record(std::size_t r, std::size_t visits, Task task, std::size_t s, Rng& rng) {
  data::PatientRecord rec;
  rec.patient_id = 1;
  rec.role = data::Role::kCase;
  std::int64_t day = 0;
  for (std::size_t j = 0; j < visits; ++j) {
    data::Visit v;
    day += rng.uniform_int(1, 90);
    v.day = day;
    std::set<int> codes;
    const auto n = rng.uniform_int(1, std::min<std::int64_t>(4, static_cast<std::int64_t>(r)));
    while (static_cast<std::int64_t>(codes.size()) < n) {
      codes.insert(static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(r) - 1)));
    }
    v.codes.assign(codes.begin(), codes.end());
    rec.visits.push_back(std::move(v));
  }
  rec.index_day = day + 30;
  if (task == Task::kL2D) {
    rec.labels = {{0}};
  } else {
    for (std::size_t j = 1; j < visits; ++j) {
      std::vector<int> next;
      for (int c : rec.visits[j].codes) {
        if (static_cast<std::size_t>(c) < s) next.push_back(c);
      }
      rec.labels.push_back(next);
    }
  }
  return rec;
}

ModelConfig tiny_model_config(ModelKind kind, Task task, std::uint64_t seed) {
  const std::size_t s = task == Task::kL2D ? 1 : 3;
  ModelConfig c = default_model_config(kind, task, 10, s);
  c.dims = {10, 4, 4, 4, s};
  c.baseline_hidden = 4;
  c.window = 3;
  c.init_seed = seed;
  return c;
}

}  // namespace retain
