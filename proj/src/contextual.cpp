#include "abanet/contextual.hpp"

#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "abanet/ops.hpp"

namespace abanet {

EncoderStackProvider::EncoderStackProvider(std::string prefix, std::size_t vocab, std::size_t layers,
                                           EncoderBlockConfig block, CapsuleConfig caps)
    : prefix_(std::move(prefix)), vocab_(vocab), width_(block.filters) {
  if (layers == 0) throw ConfigError("contextual provider: at least one layer required");
  block.num_blocks = 1;
  for (std::size_t l = 0; l < layers; ++l) stacks_.emplace_back(prefix_ + ".layer" + std::to_string(l), block, caps);
}

void EncoderStackProvider::init(ParamStore& store, Rng& rng) const {
  store.add(prefix_ + ".table", uniform({vocab_, width_}, 1.0, rng), false);
  for (const auto& s : stacks_) {
    s.init(store, rng);
    for (const auto& name : s.param_names()) store.set_trainable(name, false);
  }
}

std::vector<Tensor> EncoderStackProvider::hidden_states(const ParamStore& store, const std::vector<int>& word_ids,
                                                        const std::vector<int>& subtokens) const {
  if (subtokens.size() != word_ids.size()) {
    throw DataError("contextual provider: " + std::to_string(subtokens.size()) + " subtoken counts for " +
                    std::to_string(word_ids.size()) + " words");
  }
  std::vector<int> expanded;
  for (std::size_t i = 0; i < word_ids.size(); ++i) {
    if (subtokens[i] < 1) throw DataError("subtoken count must be at least 1");
    for (int s = 0; s < subtokens[i]; ++s) expanded.push_back(word_ids[i]);
  }
  Tape tape;
  const Context ctx = Context::eval();
  Var x = gather_rows(tape.parameter(store, prefix_ + ".table"), expanded);
  std::vector<Tensor> layers;
  layers.reserve(stacks_.size());
  for (const auto& s : stacks_) {
    x = s.forward(tape, store, x, {}, ctx);
    layers.push_back(x.value());
  }
  return layers;
}

}  // namespace abanet
