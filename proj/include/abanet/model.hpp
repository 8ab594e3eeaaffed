#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "abanet/attention.hpp"
#include "abanet/config.hpp"
#include "abanet/contextual.hpp"
#include "abanet/data.hpp"
#include "abanet/embedding.hpp"
#include "abanet/encoder.hpp"

namespace abanet {

struct SpanLogits {
  Var begin;  // [n]
  Var end;    // [n]
};

// begin = W1 [B1; B2], end = W2 [B2; B3], one logit per position; W1 and W2
// are [2d].
SpanLogits span_logits(Var b1, Var b2, Var b3, Var w1, Var w2);

// -log p_begin[y1] - log p_end[y2] with the softmax restricted to `mask`.
Var span_loss(const SpanLogits& logits, std::size_t y1, std::size_t y2, const Tensor* mask = nullptr);

// coeff * sum of squares of every trainable parameter of rank >= 2.
Var l2_decay(Tape& tape, const ParamStore& store, double coeff);

struct DecodedSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  double score = 0.0;
  // Set in unanswerable mode when the best pair is (last, last).
  bool no_answer = false;
};

// argmax of p_begin[i] * p_end[j] over i <= j < i + max_len; the first pair
// found wins ties (i ascending, then j ascending).
DecodedSpan decode_span(const Tensor& p_begin, const Tensor& p_end, std::size_t max_len, bool unanswerable_mode);

struct ForwardResult {
  SpanLogits logits;
  Tensor p_begin, p_end;
  Var b1, b2, b3;
  AttentionOutputs attention;
  std::vector<std::size_t> selected;
};

// The full network: shared embedding layer for passage and question (word,
// features, char CNN, highway, embedding encoder, BiLSTM, contextual mix),
// adaptive bidirectional attention, three weight-shared model-encoder passes,
// and the span head.
class AbaNet {
 public:
  AbaNet(ModelConfig config, Vocabulary words, Vocabulary chars);

  // `word_table`, when given, replaces the random fixed word vectors.
  void init(ParamStore& store, Rng& rng, const Tensor* word_table = nullptr) const;

  ForwardResult forward(Tape& tape, const ParamStore& store, const Example& ex, const Context& ctx) const;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& words() const { return words_; }
  const Vocabulary& chars() const { return chars_; }
  const EncoderStack& model_encoder(std::size_t pass) const { return model_passes_.at(pass); }

  std::string architecture_string() const;
  std::uint64_t config_digest() const;

 private:
  struct SequenceInputs {
    std::vector<std::string> tokens;
    std::vector<int> pos, ner, rule, subtokens;
  };

  HosInputs embed_sequence(Tape& tape, const ParamStore& store, const SequenceInputs& seq, const Context& ctx) const;

  ModelConfig config_;
  Vocabulary words_;
  Vocabulary chars_;
  CharCnn char_cnn_;
  FeatureEmbedding features_;
  Highway highway_;
  EncoderStack embedding_encoder_;
  BiLstm bilstm_;
  EncoderStackProvider provider_;
  AdaptiveAttention attention_;
  std::vector<EncoderStack> model_passes_;
};

// Word vocabulary from every passage and question token, and character
// vocabulary from their characters, in first-appearance order.
std::pair<Vocabulary, Vocabulary> build_vocabularies(const std::vector<Example>& examples);

}  // namespace abanet
