// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retain/model.hpp"

namespace retain {

inline constexpr double kGradcheckTolerance = 1e-4;

struct ParamGradCheck {
  std::string name;
  std::size_t size = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;
  double max_relative_error() const;
  bool passed(double tolerance = kGradcheckTolerance) const { return max_relative_error() <= tolerance; }
};

/// Compares tape gradients of the record loss with central differences.
/// With `training` set, dropout masks are redrawn from `mask_seed` for every
/// evaluation so the objective stays a fixed function of the parameters.
GradCheckReport gradient_check(const SequenceModel& model, const data::PatientRecord& record, bool training = false,
                               std::uint64_t mask_seed = 0, double h = 1e-5);

/// Overwrites every parameter with uniform(-scale, scale) draws.
void randomize_params(ParamSet& params, Rng& rng, double scale = 0.5);

/// A random patient with `visits` visits over a vocabulary of r codes. For
/// ESM the labels hold the next visit's codes below s.
data::PatientRecord random_record(std::size_t r, std::size_t visits, Task task, std::size_t s, Rng& rng);

/// Tiny configuration used by the gradient-check command: r=10, m=p=q=4,
/// s=1 (s=3 for ESM), baseline hidden 4, window 3.
ModelConfig tiny_model_config(ModelKind kind, Task task, std::uint64_t seed);

}  // namespace retain
