#pragma once

#include <functional>
#include <string>
#include <vector>

#include "abanet/param_store.hpp"
#include "abanet/tape.hpp"

namespace abanet {

struct EncoderBlockConfig {
  std::size_t num_conv_layers = 5;
  std::size_t kernel = 7;
  std::size_t filters = 128;
  std::size_t num_heads = 8;
  std::size_t num_blocks = 1;
  std::size_t ffn_width = 128;
  double survival_last = 0.9;
  double dropout = 0.1;

  std::size_t sublayers_per_block() const { return num_conv_layers + 2; }
  std::size_t total_sublayers() const { return num_blocks * sublayers_per_block(); }
  void validate() const;
};

// Primary and digit capsule geometry. count x dim of each layer must equal the
// encoder width, since capsules partition the feature channels of a token.
struct CapsuleConfig {
  std::size_t primary_count = 16;
  std::size_t primary_dim = 8;
  std::size_t digit_count = 16;
  std::size_t digit_dim = 8;
  std::size_t routing_iterations = 3;

  void validate(std::size_t width) const;
};

// Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos.
Tensor positional_encoding(std::size_t n, std::size_t d);

// Per token position: uhat = W u, then `iterations` rounds of
// c = softmax_j(b), s = sum_i c uhat, v = squash(s), b += uhat . v.
// primary [n x P x p], transform [P x D x q x p] -> v [n x D x q]. The logits
// stay on the tape, so gradients include the routing path. When `couplings`
// is non-null it receives c for every iteration.
Var dynamic_routing(Var primary, Var transform, std::size_t iterations, std::vector<Tensor>* couplings = nullptr);

// p_l = 1 - (l / L)(1 - p_L).
double survival_probability(std::size_t l, std::size_t total, double survival_last);

using SublayerFn = std::function<Var(Var)>;

// Training: with probability p_l returns x + dropout(f(layernorm(x))), else x.
// Evaluation: x + p_l f(layernorm(x)).
Var residual_sublayer(Var x, const SublayerFn& f, Var ln_gain, Var ln_bias, std::size_t l, std::size_t total,
                      double survival_last, double dropout_rate, const Context& ctx);

// Key mask for attention: 1 keeps a position, 0 hides it. Empty = all valid.
using SequenceMask = std::vector<double>;

// One parameter namespace for a stack of encoder blocks. Blocks apply
// positional encoding, then conv-primarycaps-digitcaps sublayers, one
// self-attention sublayer and one feed-forward sublayer. Sublayer indices for
// stochastic depth run continuously across every block of the stack.
class EncoderStack {
 public:
  EncoderStack(std::string prefix, EncoderBlockConfig block, CapsuleConfig caps);

  void init(ParamStore& store, Rng& rng) const;
  // Registers every parameter of this stack as an alias of `source`'s.
  void alias_to(ParamStore& store, const EncoderStack& source) const;

  Var forward(Tape& tape, const ParamStore& store, Var x, const SequenceMask& mask, const Context& ctx) const;

  Var conv_pri_dig(Tape& tape, const ParamStore& store, std::size_t block, std::size_t layer, Var x) const;
  Var self_attention(Tape& tape, const ParamStore& store, std::size_t block, Var x, const SequenceMask& mask,
                     std::vector<Tensor>* weights = nullptr) const;
  Var feed_forward(Tape& tape, const ParamStore& store, std::size_t block, Var x) const;

  const std::string& prefix() const { return prefix_; }
  const EncoderBlockConfig& block_config() const { return block_; }
  const CapsuleConfig& capsule_config() const { return caps_; }
  std::vector<std::string> param_names() const;

 private:
  std::string name(std::size_t block, const std::string& leaf) const;

  std::string prefix_;
  EncoderBlockConfig block_;
  CapsuleConfig caps_;
};

}  // namespace abanet
