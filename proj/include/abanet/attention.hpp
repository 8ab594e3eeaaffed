#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "abanet/encoder.hpp"
#include "abanet/param_store.hpp"
#include "abanet/tape.hpp"

namespace abanet {

inline constexpr std::size_t kHosComponents = 6;
inline constexpr std::array<const char*, kHosComponents> kHosComponentNames = {"word",       "char",  "embed",
                                                                              "contextual", "block", "bilstm"};

// Raw per-stage representations of one sequence, in history order.
using HosInputs = std::array<std::optional<Var>, kHosComponents>;

// The six representations of one sequence, each projected to [n x d].
struct HistoryOfSemantic {
  std::vector<Var> components;
};

enum class LambdaInit { kIdentity, kPaperLiteral };

// lambda initial value: identity, or first column ones and the rest zero.
Tensor initial_lambda(LambdaInit mode, std::size_t g = kHosComponents);

// Bias-free projections of each component to a common width. Missing
// components and token-count mismatches are rejected by name.
HistoryOfSemantic assemble_hos(Tape& tape, const ParamStore& store, const std::string& prefix, const HosInputs& raw);

// Output g = sum_j lambda[g, j] component_j, identical at every token/feature.
std::vector<Var> adaptive_scale(const std::vector<Var>& components, Var lambda);

struct Selection {
  Var output;                          // [n x k*d]
  std::vector<std::size_t> indices;    // ascending component indices
  Tensor weights;                      // softmax(alpha)
};

// The k largest of w, ties to the lower index, returned in ascending order.
std::vector<std::size_t> top_k_indices(const Tensor& weights, std::size_t k);

// w = softmax(alpha); the k heaviest components scaled by their w and
// concatenated in ascending index order.
Selection select_top_k(const std::vector<Var>& components, Var alpha, std::size_t k = 3);
// Scales and concatenates a fixed set of components (used when both sides of
// the attention must agree on the indices).
Var apply_selection(const std::vector<Var>& components, Var weights, const std::vector<std::size_t>& indices);

Var trilinear_similarity(Var hos_p, Var hos_q, Var w, double dropout_rate, const Context& ctx);

struct AttentionOutputs {
  Tensor H, H_row, H_col, M, S, O;
};

// M = H_row HOS^Q, with H_row the softmax of each passage row over unmasked
// question positions. Writes H_row through `h_row` when non-null.
Var p2q_attention(Var h, Var hos_q, const SequenceMask& passage_mask, const SequenceMask& question_mask,
                  Var* h_row = nullptr);

// S = H_row H_col^T HOS^P, with H_col the softmax of each question column
// over unmasked passage positions.
Var q2p_attention(Var h, Var h_row, Var hos_p, const SequenceMask& passage_mask, const SequenceMask& question_mask,
                  Var* h_col = nullptr);

// O = [HOS^P; M; HOS^P * M; HOS^P * S].
Var fuse_output(Var hos_p, Var m, Var s);

struct AdaptiveAttentionConfig {
  std::size_t width = 128;
  std::array<std::size_t, kHosComponents> input_widths{};
  LambdaInit lambda_init = LambdaInit::kIdentity;
  bool use_adaptive_scale = true;
  std::size_t select_k = 3;
  double dropout = 0.1;
};

struct AdaptiveAttentionResult {
  Var O;
  AttentionOutputs values;
  std::vector<std::size_t> selected;
};

// Interaction layer: HOS projection (shared by both sides), separate lambda
// for passage and question, a shared selector alpha, then bidirectional
// attention and the fused output.
class AdaptiveAttention {
 public:
  AdaptiveAttention(std::string prefix, AdaptiveAttentionConfig config);

  void init(ParamStore& store, Rng& rng) const;
  AdaptiveAttentionResult forward(Tape& tape, const ParamStore& store, const HosInputs& passage,
                                  const HosInputs& question, const SequenceMask& passage_mask,
                                  const SequenceMask& question_mask, const Context& ctx) const;

  std::size_t output_width() const { return 4 * config_.select_k * config_.width; }
  const AdaptiveAttentionConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  AdaptiveAttentionConfig config_;
};

}  // namespace abanet
