#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abanet/param_store.hpp"
#include "abanet/tape.hpp"

namespace abanet {

struct GradCheckOptions {
  double epsilon = 1e-3;
  double tolerance = 1e-3;
  // Denominator floor of the relative error, so gradients that are zero on
  // both sides compare as equal instead of 0/0.
  double denominator_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample of this many.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 7;
  // Restrict the check to these canonical names (empty = all trainable).
  std::vector<std::string> only;
  // When set, describes which branch every piecewise op took. Perturbations
  // whose +eps or -eps signature differs from the base are counted as kink
  // crossings; their error still counts toward the maximum.
  std::function<std::string(const Tape&)> branch_signature;
};

struct ParamGradError {
  std::string name;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double max_rel_error = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t kink_crossings = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t kink_crossings = 0;
  bool passed = true;
};

using LossFn = std::function<Var(Tape&, const Context&)>;

double relative_error(double analytic, double numeric, double floor);

// Compares tape gradients with central differences (f(x+e) - f(x-e)) / 2e.
// Refuses to run in training mode: stochastic regularizers make f
// non-deterministic.
GradCheckReport grad_check(const LossFn& f, ParamStore& params, const Context& ctx,
                           const GradCheckOptions& opts = {});

}  // namespace abanet
