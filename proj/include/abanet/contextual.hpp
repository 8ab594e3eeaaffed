#pragma once

#include <memory>
#include <string>
#include <vector>

#include "abanet/encoder.hpp"
#include "abanet/param_store.hpp"

namespace abanet {

// Source of L layers of hidden states for a word sequence in which word i
// spans subtokens[i] provider positions. Outputs are constants with respect to
// the model's trainable parameters; only the mixture weights are learned.
class ContextualProvider {
 public:
  virtual ~ContextualProvider() = default;

  virtual std::size_t num_layers() const = 0;
  virtual std::size_t width() const = 0;
  // Each returned tensor is [sum(subtokens) x width()].
  virtual std::vector<Tensor> hidden_states(const ParamStore& store, const std::vector<int>& word_ids,
                                            const std::vector<int>& subtokens) const = 0;
};

// Default provider: a frozen random token table followed by L single-block
// encoder stacks, each block's output being one layer of hidden states.
class EncoderStackProvider : public ContextualProvider {
 public:
  EncoderStackProvider(std::string prefix, std::size_t vocab, std::size_t layers, EncoderBlockConfig block,
                       CapsuleConfig caps);

  // Registers the provider's weights as non-trainable parameters.
  void init(ParamStore& store, Rng& rng) const;

  std::size_t num_layers() const override { return stacks_.size(); }
  std::size_t width() const override { return width_; }
  std::vector<Tensor> hidden_states(const ParamStore& store, const std::vector<int>& word_ids,
                                    const std::vector<int>& subtokens) const override;

 private:
  std::string prefix_;
  std::size_t vocab_;
  std::size_t width_;
  std::vector<EncoderStack> stacks_;
};

}  // namespace abanet
