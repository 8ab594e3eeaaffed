#include "abanet/attention.hpp"

#include <algorithm>
#include <numeric>

#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "abanet/ops.hpp"

namespace abanet {

Tensor initial_lambda(LambdaInit mode, std::size_t g) {
  if (mode == LambdaInit::kIdentity) return Tensor::identity(g);
  Tensor t({g, g});
  for (std::size_t r = 0; r < g; ++r) t(r, 0) = 1.0;
  return t;
}

HistoryOfSemantic assemble_hos(Tape& tape, const ParamStore& store, const std::string& prefix, const HosInputs& raw) {
  HistoryOfSemantic hos;
  std::size_t n = 0;
  for (std::size_t g = 0; g < kHosComponents; ++g) {
    if (!raw[g]) throw DataError(std::string("history of semantic: missing component '") + kHosComponentNames[g] + "'");
    const Var& x = *raw[g];
    if (x.value().rank() != 2) throw DimensionError(std::string("history of semantic: component '") + kHosComponentNames[g] + "' is not 2-D");
    if (g == 0) n = x.dim(0);
    if (x.dim(0) != n) {
      throw DimensionError(std::string("history of semantic: component '") + kHosComponentNames[g] + "' has " +
                           std::to_string(x.dim(0)) + " tokens, expected " + std::to_string(n));
    }
    hos.components.push_back(matmul(x, tape.parameter(store, prefix + ".proj." + kHosComponentNames[g])));
  }
  return hos;
}

std::vector<Var> adaptive_scale(const std::vector<Var>& components, Var lambda) {
  const std::size_t g = components.size();
  if (g == 0) throw DimensionError("adaptive_scale: no components");
  if (lambda.value().shape() != Shape{g, g}) {
    throw DimensionError("adaptive_scale: lambda " + shape_str(lambda.shape()) + " for " + std::to_string(g) +
                         " components");
  }
  const Shape comp_shape = components[0].shape();
  const std::size_t flat = shape_numel(comp_shape);
  std::vector<Var> rows;
  rows.reserve(g);
  for (const Var& c : components) {
    if (c.shape() != comp_shape) throw DimensionError("adaptive_scale: components differ in shape");
    rows.push_back(reshape(c, {1, flat}));
  }
  Var mixed = matmul(lambda, concat(rows, 0));
  std::vector<Var> out;
  out.reserve(g);
  for (std::size_t k = 0; k < g; ++k) out.push_back(reshape(slice(mixed, 0, k, 1), comp_shape));
  return out;
}

std::vector<std::size_t> top_k_indices(const Tensor& weights, std::size_t k) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Var apply_selection(const std::vector<Var>& components, Var weights, const std::vector<std::size_t>& indices) {
  std::vector<Var> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(mul_scalar_at(components.at(i), weights, i));
  return picked.size() == 1 ? picked[0] : concat(picked, 1);
}

Selection select_top_k(const std::vector<Var>& components, Var alpha, std::size_t k) {
  if (k == 0 || components.size() < k) {
    throw ConfigError("select: need at least " + std::to_string(k) + " components, have " +
                      std::to_string(components.size()));
  }
  if (alpha.value().shape() != Shape{components.size()}) {
    throw DimensionError("select: alpha " + shape_str(alpha.shape()) + " for " + std::to_string(components.size()) +
                         " components");
  }
  Var w = masked_softmax(alpha, nullptr, 0);
  Selection sel;
  sel.indices = top_k_indices(w.value(), k);
  sel.weights = w.value();
  sel.output = apply_selection(components, w, sel.indices);
  return sel;
}

Var trilinear_similarity(Var hos_p, Var hos_q, Var w, double dropout_rate, const Context& ctx) {
  return dropout(trilinear(hos_p, hos_q, w), dropout_rate, ctx);
}

namespace {

void check_masks(Var h, const SequenceMask& pm, const SequenceMask& qm) {
  if ((!pm.empty() && pm.size() != h.dim(0)) || (!qm.empty() && qm.size() != h.dim(1))) {
    throw DimensionError("attention: masks do not match similarity matrix " + shape_str(h.shape()));
  }
}

}  // namespace

Var p2q_attention(Var h, Var hos_q, const SequenceMask& passage_mask, const SequenceMask& question_mask, Var* h_row) {
  check_masks(h, passage_mask, question_mask);
  if (h.dim(1) != hos_q.dim(0)) throw DimensionError("p2q attention: question length mismatch");
  if (!question_mask.empty() && std::all_of(question_mask.begin(), question_mask.end(), [](double v) { return v == 0.0; })) {
    throw DataError("p2q attention: question has no unmasked token");
  }
  Tensor mask(h.shape(), 1.0);
  if (!question_mask.empty()) {
    for (std::size_t i = 0; i < h.dim(0); ++i) {
      for (std::size_t j = 0; j < h.dim(1); ++j) mask(i, j) = question_mask[j];
    }
  }
  Var row = masked_softmax(h, &mask, 1);
  if (h_row) *h_row = row;
  return matmul(row, hos_q);
}

Var q2p_attention(Var h, Var h_row, Var hos_p, const SequenceMask& passage_mask, const SequenceMask& question_mask,
                  Var* h_col) {
  check_masks(h, passage_mask, question_mask);
  if (h.dim(0) != hos_p.dim(0)) throw DimensionError("q2p attention: passage length mismatch");
  if (!passage_mask.empty() && std::all_of(passage_mask.begin(), passage_mask.end(), [](double v) { return v == 0.0; })) {
    throw DataError("q2p attention: passage has no unmasked token");
  }
  Tensor mask(h.shape(), 1.0);
  if (!passage_mask.empty()) {
    for (std::size_t i = 0; i < h.dim(0); ++i) {
      for (std::size_t j = 0; j < h.dim(1); ++j) mask(i, j) = passage_mask[i];
    }
  }
  Var col = masked_softmax(h, &mask, 0);
  if (h_col) *h_col = col;
  return matmul(matmul(h_row, transpose(col)), hos_p);
}

Var fuse_output(Var hos_p, Var m, Var s) {
  if (hos_p.shape() != m.shape() || hos_p.shape() != s.shape()) {
    throw DimensionError("fuse_output: shapes " + shape_str(hos_p.shape()) + ", " + shape_str(m.shape()) + ", " +
                         shape_str(s.shape()) + " differ");
  }
  return concat({hos_p, m, mul(hos_p, m), mul(hos_p, s)}, 1);
}

AdaptiveAttention::AdaptiveAttention(std::string prefix, AdaptiveAttentionConfig config)
    : prefix_(std::move(prefix)), config_(config) {
  if (config_.select_k == 0 || config_.select_k > kHosComponents) {
    throw ConfigError("adaptive attention: select_k must be in [1, 6]");
  }
}

void AdaptiveAttention::init(ParamStore& store, Rng& rng) const {
  const std::size_t d = config_.width;
  for (std::size_t g = 0; g < kHosComponents; ++g) {
    const std::size_t w = config_.input_widths[g];
    if (w == 0) throw ConfigError(std::string("adaptive attention: width of '") + kHosComponentNames[g] + "' unset");
    store.add(prefix_ + ".proj." + kHosComponentNames[g], xavier_uniform({w, d}, w, d, rng));
  }
  store.add(prefix_ + ".lambda_p", initial_lambda(config_.lambda_init));
  store.add(prefix_ + ".lambda_q", initial_lambda(config_.lambda_init));
  store.add(prefix_ + ".alpha", Tensor({kHosComponents}));
  const std::size_t h = config_.select_k * d;
  store.add(prefix_ + ".similarity", xavier_uniform({3 * h}, 3 * h, 1, rng));
}

AdaptiveAttentionResult AdaptiveAttention::forward(Tape& tape, const ParamStore& store, const HosInputs& passage,
                                                   const HosInputs& question, const SequenceMask& passage_mask,
                                                   const SequenceMask& question_mask, const Context& ctx) const {
  HistoryOfSemantic hp = assemble_hos(tape, store, prefix_, passage);
  HistoryOfSemantic hq = assemble_hos(tape, store, prefix_, question);
  std::vector<Var> cp = hp.components, cq = hq.components;
  if (config_.use_adaptive_scale) {
    cp = adaptive_scale(cp, tape.parameter(store, prefix_ + ".lambda_p"));
    cq = adaptive_scale(cq, tape.parameter(store, prefix_ + ".lambda_q"));
  }
  Selection sel = select_top_k(cp, tape.parameter(store, prefix_ + ".alpha"), config_.select_k);
  Var w = masked_softmax(tape.parameter(store, prefix_ + ".alpha"), nullptr, 0);
  Var hos_p = sel.output;
  Var hos_q = apply_selection(cq, w, sel.indices);

  Var h = trilinear_similarity(hos_p, hos_q, tape.parameter(store, prefix_ + ".similarity"), config_.dropout, ctx);
  Var h_row, h_col;
  Var m = p2q_attention(h, hos_q, passage_mask, question_mask, &h_row);
  Var s = q2p_attention(h, h_row, hos_p, passage_mask, question_mask, &h_col);
  Var o = fuse_output(hos_p, m, s);

  AdaptiveAttentionResult r;
  r.O = o;
  r.selected = sel.indices;
  r.values = AttentionOutputs{h.value(), h_row.value(), h_col.value(), m.value(), s.value(), o.value()};
  return r;
}

}  // namespace abanet
