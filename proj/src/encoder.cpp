#include "abanet/encoder.hpp"

#include <cmath>

#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "abanet/ops.hpp"

namespace abanet {

void EncoderBlockConfig::validate() const {
  if (filters == 0 || num_heads == 0 || filters % num_heads != 0) {
    throw ConfigError("encoder: filters " + std::to_string(filters) + " not divisible by heads " +
                      std::to_string(num_heads));
  }
  if (kernel % 2 == 0) throw ConfigError("encoder: kernel width must be odd, got " + std::to_string(kernel));
  if (!(survival_last > 0.0 && survival_last <= 1.0)) throw ConfigError("encoder: survival probability must be in (0, 1]");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must be in [0, 1)");
}

void CapsuleConfig::validate(std::size_t width) const {
  if (routing_iterations == 0) throw ConfigError("capsules: routing needs at least one iteration");
  if (primary_count * primary_dim != width || digit_count * digit_dim != width) {
    throw ConfigError("capsules: " + std::to_string(primary_count) + "x" + std::to_string(primary_dim) + " primary / " +
                      std::to_string(digit_count) + "x" + std::to_string(digit_dim) +
                      " digit capsules do not tile width " + std::to_string(width));
  }
}

Tensor positional_encoding(std::size_t n, std::size_t d) {
  if (d % 2 != 0) throw ConfigError("positional encoding: width must be even, got " + std::to_string(d));
  Tensor pe({n, d});
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var dynamic_routing(Var primary, Var transform, std::size_t iterations, std::vector<Tensor>* couplings) {
  if (iterations == 0) throw ConfigError("dynamic routing: iterations must be at least 1");
  Var uhat = capsule_predict(primary, transform);
  const Shape& s = uhat.shape();
  Var logits = primary.tape().constant(Tensor({s[0], s[1], s[2]}));
  Var v;
  for (std::size_t it = 0; it < iterations; ++it) {
    Var c = masked_softmax(logits, nullptr, 2);
    if (couplings) couplings->push_back(c.value());
    v = squash(capsule_weighted_sum(c, uhat));
    if (it + 1 < iterations) logits = add(logits, capsule_agreement(uhat, v));
  }
  return v;
}

double survival_probability(std::size_t l, std::size_t total, double survival_last) {
  if (!(survival_last > 0.0 && survival_last <= 1.0)) throw ConfigError("stochastic depth: p_L must be in (0, 1]");
  if (total == 0 || l > total) throw ConfigError("stochastic depth: sublayer index out of range");
  return 1.0 - (static_cast<double>(l) / static_cast<double>(total)) * (1.0 - survival_last);
}

Var residual_sublayer(Var x, const SublayerFn& f, Var ln_gain, Var ln_bias, std::size_t l, std::size_t total,
                      double survival_last, double dropout_rate, const Context& ctx) {
  if (l == 0) throw ConfigError("stochastic depth: sublayer indices start at 1");
  const double p = survival_probability(l, total, survival_last);
  if (ctx.training) {
    if (!ctx.rng) throw ConfigError("residual sublayer: training mode requires a random generator");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (uni(*ctx.rng) >= p) return x;
    return add(x, dropout(f(layer_norm(x, ln_gain, ln_bias)), dropout_rate, ctx));
  }
  Var branch = f(layer_norm(x, ln_gain, ln_bias));
  return add(x, p == 1.0 ? branch : scale(branch, p));
}

EncoderStack::EncoderStack(std::string prefix, EncoderBlockConfig block, CapsuleConfig caps)
    : prefix_(std::move(prefix)), block_(block), caps_(caps) {
  block_.validate();
  caps_.validate(block_.filters);
}

std::string EncoderStack::name(std::size_t block, const std::string& leaf) const {
  return prefix_ + ".block" + std::to_string(block) + "." + leaf;
}

std::vector<std::string> EncoderStack::param_names() const {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < block_.num_blocks; ++b) {
    for (std::size_t c = 0; c < block_.num_conv_layers; ++c) {
      const std::string p = "conv" + std::to_string(c) + ".";
      for (const char* leaf : {"depthwise", "pointwise", "routing", "ln_gain", "ln_bias"}) out.push_back(name(b, p + leaf));
    }
    for (const char* leaf : {"attn.query", "attn.key", "attn.value", "attn.output", "attn.ln_gain", "attn.ln_bias",
                             "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ffn.ln_gain", "ffn.ln_bias"}) {
      out.push_back(name(b, leaf));
    }
  }
  return out;
}

void EncoderStack::init(ParamStore& store, Rng& rng) const {
  const std::size_t d = block_.filters, k = block_.kernel;
  for (std::size_t b = 0; b < block_.num_blocks; ++b) {
    for (std::size_t c = 0; c < block_.num_conv_layers; ++c) {
      const std::string p = "conv" + std::to_string(c) + ".";
      store.add(name(b, p + "depthwise"), xavier_uniform({k, d}, k, 1, rng));
      store.add(name(b, p + "pointwise"), xavier_uniform({d, d}, d, d, rng));
      store.add(name(b, p + "routing"),
                xavier_uniform({caps_.primary_count, caps_.digit_count, caps_.digit_dim, caps_.primary_dim},
                               caps_.primary_dim, caps_.digit_dim, rng));
      store.add(name(b, p + "ln_gain"), Tensor({d}, 1.0));
      store.add(name(b, p + "ln_bias"), Tensor({d}));
    }
    for (const char* w : {"attn.query", "attn.key", "attn.value", "attn.output"}) {
      store.add(name(b, w), xavier_uniform({d, d}, d, d, rng));
    }
    store.add(name(b, "attn.ln_gain"), Tensor({d}, 1.0));
    store.add(name(b, "attn.ln_bias"), Tensor({d}));
    store.add(name(b, "ffn.w1"), xavier_uniform({d, block_.ffn_width}, d, block_.ffn_width, rng));
    store.add(name(b, "ffn.b1"), Tensor({block_.ffn_width}));
    store.add(name(b, "ffn.w2"), xavier_uniform({block_.ffn_width, d}, block_.ffn_width, d, rng));
    store.add(name(b, "ffn.b2"), Tensor({d}));
    store.add(name(b, "ffn.ln_gain"), Tensor({d}, 1.0));
    store.add(name(b, "ffn.ln_bias"), Tensor({d}));
  }
}

void EncoderStack::alias_to(ParamStore& store, const EncoderStack& source) const {
  const auto mine = param_names();
  const auto theirs = source.param_names();
  if (mine.size() != theirs.size()) throw ConfigError("encoder alias: stacks have different structure");
  for (std::size_t i = 0; i < mine.size(); ++i) store.alias(mine[i], theirs[i]);
}

Var EncoderStack::conv_pri_dig(Tape& tape, const ParamStore& store, std::size_t block, std::size_t layer, Var x) const {
  const std::size_t d = block_.filters;
  if (x.value().rank() != 2 || x.dim(1) != d) {
    throw DimensionError("conv-pri-dig: expected width " + std::to_string(d) + ", got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::string p = "conv" + std::to_string(layer) + ".";
  Var conv = depthwise_separable_conv1d(x, tape.parameter(store, name(block, p + "depthwise")),
                                        tape.parameter(store, name(block, p + "pointwise")));
  Var primary = squash(reshape(conv, {n, caps_.primary_count, caps_.primary_dim}));
  Var digit = dynamic_routing(primary, tape.parameter(store, name(block, p + "routing")), caps_.routing_iterations);
  return reshape(digit, {n, d});
}

Var EncoderStack::self_attention(Tape& tape, const ParamStore& store, std::size_t block, Var x,
                                 const SequenceMask& mask, std::vector<Tensor>* weights) const {
  const std::size_t n = x.dim(0), d = block_.filters, heads = block_.num_heads, dk = d / heads;
  if (!mask.empty() && mask.size() != n) throw DimensionError("self-attention: mask length differs from sequence length");
  Tensor key_mask({n, n}, 1.0);
  if (!mask.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) key_mask(i, j) = mask[j];
    }
  }
  Var q = matmul(x, tape.parameter(store, name(block, "attn.query")));
  Var k = matmul(x, tape.parameter(store, name(block, "attn.key")));
  Var v = matmul(x, tape.parameter(store, name(block, "attn.value")));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice(q, 1, h * dk, dk);
    Var kh = slice(k, 1, h * dk, dk);
    Var vh = slice(v, 1, h * dk, dk);
    Var a = masked_softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), &key_mask, 1);
    if (weights) weights->push_back(a.value());
    outs.push_back(matmul(a, vh));
  }
  Var merged = heads == 1 ? outs[0] : concat(outs, 1);
  return matmul(merged, tape.parameter(store, name(block, "attn.output")));
}

Var EncoderStack::feed_forward(Tape& tape, const ParamStore& store, std::size_t block, Var x) const {
  Var hidden = relu(add_bias(matmul(x, tape.parameter(store, name(block, "ffn.w1"))),
                             tape.parameter(store, name(block, "ffn.b1"))));
  return add_bias(matmul(hidden, tape.parameter(store, name(block, "ffn.w2"))), tape.parameter(store, name(block, "ffn.b2")));
}

Var EncoderStack::forward(Tape& tape, const ParamStore& store, Var x, const SequenceMask& mask,
                          const Context& ctx) const {
  if (x.value().rank() != 2 || x.dim(1) != block_.filters) {
    throw DimensionError("encoder: expected width " + std::to_string(block_.filters) + ", got " + shape_str(x.shape()));
  }
  const std::size_t total = block_.total_sublayers();
  std::size_t l = 0;
  for (std::size_t b = 0; b < block_.num_blocks; ++b) {
    x = add(x, tape.constant(positional_encoding(x.dim(0), block_.filters)));
    for (std::size_t c = 0; c < block_.num_conv_layers; ++c) {
      const std::string p = "conv" + std::to_string(c) + ".";
      x = residual_sublayer(
          x, [&, b, c](Var z) { return conv_pri_dig(tape, store, b, c, z); },
          tape.parameter(store, name(b, p + "ln_gain")), tape.parameter(store, name(b, p + "ln_bias")), ++l, total,
          block_.survival_last, block_.dropout, ctx);
    }
    x = residual_sublayer(
        x, [&, b](Var z) { return self_attention(tape, store, b, z, mask); },
        tape.parameter(store, name(b, "attn.ln_gain")), tape.parameter(store, name(b, "attn.ln_bias")), ++l, total,
        block_.survival_last, block_.dropout, ctx);
    x = residual_sublayer(
        x, [&, b](Var z) { return feed_forward(tape, store, b, z); },
        tape.parameter(store, name(b, "ffn.ln_gain")), tape.parameter(store, name(b, "ffn.ln_bias")), ++l, total,
        block_.survival_last, block_.dropout, ctx);
  }
  return x;
}

}  // namespace abanet
