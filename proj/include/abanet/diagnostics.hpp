#pragma once

#include <string>
#include <vector>

#include "abanet/config.hpp"
#include "abanet/grad_check.hpp"
#include "abanet/model.hpp"

namespace abanet {

struct GradCheckEntry {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t kink_crossings = 0;
  bool passed = true;
};

// One entry per differentiable primitive, named after the op it exercises.
std::vector<GradCheckEntry> grad_check_ops(const GradCheckOptions& opts = {}, std::uint64_t seed = 3);

// The fixed n=5, m=3 example used by the full-model check.
Example grad_check_example();

// Moves the parameters off non-generic points: tensors that are entirely zero
// (biases, layer-norm offsets, selection scores) become small random values,
// and the selection scores become pairwise distinct.
void randomize_for_grad_check(ParamStore& store, Rng& rng);

// Sign of every recorded relu input and the winning window of every char
// max-pool, as one string; equal strings mean the same smooth piece.
std::string branch_signature(const Tape& tape);

struct ModelGradCheck {
  GradCheckReport report;
  std::vector<GradCheckEntry> modules;  // grouped by parameter prefix
  std::size_t draws = 0;
  double seconds = 0.0;
};

// Full span loss plus decay on grad_check_example(), evaluation mode. The
// parameter point is drawn from `seed`; a draw where some perturbation
// crosses a relu or max-pool kink is replaced by the next one, up to
// `max_draws` times.
ModelGradCheck grad_check_model(const ModelConfig& config, std::uint64_t seed, const GradCheckOptions& opts = {},
                                std::size_t max_draws = 8);

// "model_enc.pass0.block0.ffn.w1" -> "model_enc".
std::string module_of(const std::string& param);

}  // namespace abanet
