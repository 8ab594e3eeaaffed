#include "abanet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "abanet/errors.hpp"

namespace abanet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossFn& f, ParamStore& params, const Context& ctx, const GradCheckOptions& opts) {
  if (ctx.training) throw ConfigError("grad_check: refusing to run with stochastic regularizers enabled");
  if (!(opts.epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be positive");

  params.zero_grad();
  std::string base_signature;
  {
    Tape tape;
    Var loss = f(tape, ctx);
    backward(tape, loss, params);
    if (opts.branch_signature) base_signature = opts.branch_signature(tape);
  }

  bool crossed = false;
  auto evaluate = [&]() {
    Tape tape;
    const double v = f(tape, ctx).value().item();
    if (opts.branch_signature && opts.branch_signature(tape) != base_signature) crossed = true;
    return v;
  };

  std::vector<std::string> names = opts.only.empty() ? params.names() : opts.only;
  Rng rng(opts.seed);
  GradCheckReport report;
  for (const std::string& name : names) {
    if (!params.trainable(name)) continue;
    auto& entry = params.entry(name);
    const std::size_t size = entry.value.size();
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param && size > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    ParamGradError err;
    err.name = params.resolve(name);
    for (std::size_t idx : coords) {
      const double saved = entry.value[idx];
      crossed = false;
      entry.value[idx] = saved + opts.epsilon;
      const double up = evaluate();
      entry.value[idx] = saved - opts.epsilon;
      const double down = evaluate();
      entry.value[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double analytic = entry.grad[idx];
      const double rel = relative_error(analytic, numeric, opts.denominator_floor);
      ++err.checked;
      if (crossed) ++err.kink_crossings;
      if (rel > err.max_rel_error || err.checked == 1) {
        err.max_rel_error = rel;
        err.worst_index = idx;
        err.analytic = analytic;
        err.numeric = numeric;
      }
    }
    if (err.max_rel_error > report.max_rel_error || report.worst_param.empty()) {
      report.max_rel_error = err.max_rel_error;
      report.worst_param = err.name;
    }
    report.kink_crossings += err.kink_crossings;
    report.params.push_back(std::move(err));
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace abanet
