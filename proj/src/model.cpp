#include "abanet/model.hpp"

#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "abanet/ops.hpp"

namespace abanet {

SpanLogits span_logits(Var b1, Var b2, Var b3, Var w1, Var w2) {
  if (b1.shape() != b2.shape() || b2.shape() != b3.shape() || b1.value().rank() != 2) {
    throw DimensionError("span_logits: B1 " + shape_str(b1.shape()) + ", B2 " + shape_str(b2.shape()) + ", B3 " +
                         shape_str(b3.shape()) + " must share one [n x d] shape");
  }
  const std::size_t n = b1.dim(0), d2 = 2 * b1.dim(1);
  if (w1.shape() != Shape{d2} || w2.shape() != Shape{d2}) {
    throw DimensionError("span_logits: weights must be [" + std::to_string(d2) + "]");
  }
  Var begin = reshape(matmul(concat({b1, b2}, 1), reshape(w1, {d2, 1})), {n});
  Var end = reshape(matmul(concat({b2, b3}, 1), reshape(w2, {d2, 1})), {n});
  return {begin, end};
}

Var span_loss(const SpanLogits& logits, std::size_t y1, std::size_t y2, const Tensor* mask) {
  return add(masked_cross_entropy(logits.begin, mask, y1), masked_cross_entropy(logits.end, mask, y2));
}

Var l2_decay(Tape& tape, const ParamStore& store, double coeff) {
  Var total = tape.constant(Tensor::scalar(0.0));
  if (coeff == 0.0) return total;
  for (const auto& name : store.names()) {
    if (!store.trainable(name) || store.value(name).rank() < 2) continue;
    Var w = tape.parameter(store, name);
    total = add(total, sum(mul(w, w)));
  }
  return scale(total, coeff);
}

DecodedSpan decode_span(const Tensor& p_begin, const Tensor& p_end, std::size_t max_len, bool unanswerable_mode) {
  if (p_begin.shape() != p_end.shape() || p_begin.rank() != 1) {
    throw DimensionError("decode_span: distributions " + shape_str(p_begin.shape()) + " and " +
                         shape_str(p_end.shape()) + " must be equal-length vectors");
  }
  if (max_len == 0) throw ConfigError("decode_span: max_len must be positive");
  const std::size_t n = p_begin.size();
  DecodedSpan best;
  best.score = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t last = std::min(n, i + max_len);
    for (std::size_t j = i; j < last; ++j) {
      const double s = p_begin[i] * p_end[j];
      if (s > best.score) {
        best.begin = i;
        best.end = j;
        best.score = s;
      }
    }
  }
  best.no_answer = unanswerable_mode && best.begin == n - 1 && best.end == n - 1;
  return best;
}

namespace {

std::array<std::size_t, kHosComponents> hos_widths(const ModelConfig& c) {
  return {c.word_dim + c.features.width(), c.chars.filters, c.d, c.d, c.d, 2 * c.lstm_hidden};
}

AdaptiveAttentionConfig attention_config(const ModelConfig& c) {
  AdaptiveAttentionConfig a;
  a.width = c.d;
  a.input_widths = hos_widths(c);
  a.lambda_init = c.lambda_init;
  a.use_adaptive_scale = c.adaptive_scale;
  a.select_k = c.select_k;
  a.dropout = c.dropout;
  return a;
}

ModelConfig finalized(ModelConfig c) {
  c.finalize();
  return c;
}

}  // namespace

AbaNet::AbaNet(ModelConfig config, Vocabulary words, Vocabulary chars)
    : config_(finalized(std::move(config))),
      words_(std::move(words)),
      chars_(std::move(chars)),
      char_cnn_("char", chars_.size(), config_.chars),
      features_("feat", config_.features),
      highway_("highway", config_.d, config_.highway_layers),
      embedding_encoder_("emb_enc", config_.embedding_encoder, config_.capsules),
      bilstm_("bilstm", config_.d, config_.lstm_hidden, config_.lstm_layers),
      provider_("ctx", words_.size(), config_.contextual_layers, config_.provider_encoder, config_.capsules),
      attention_("att", attention_config(config_)) {
  for (std::size_t p = 0; p < 3; ++p) {
    model_passes_.emplace_back("model_enc.pass" + std::to_string(p), config_.model_encoder, config_.capsules);
  }
}

void AbaNet::init(ParamStore& store, Rng& rng, const Tensor* word_table) const {
  if (word_table) {
    if (word_table->shape() != Shape{words_.size(), config_.word_dim}) {
      throw DimensionError("word table " + shape_str(word_table->shape()) + " does not match vocabulary [" +
                           std::to_string(words_.size()) + "x" + std::to_string(config_.word_dim) + "]");
    }
    store.add("word.table", *word_table, false);
  } else {
    store.add("word.table", uniform({words_.size(), config_.word_dim}, 1.0, rng), false);
  }
  char_cnn_.init(store, rng);
  features_.init(store, rng);
  const std::size_t in = config_.word_dim + config_.features.width() + config_.chars.filters;
  store.add("embed.proj", xavier_uniform({in, config_.d}, in, config_.d, rng));
  highway_.init(store, rng);
  embedding_encoder_.init(store, rng);
  bilstm_.init(store, rng);
  provider_.init(store, rng);
  store.add("ctx.theta", Tensor({config_.contextual_layers}, 1.0 / static_cast<double>(config_.contextual_layers)));
  attention_.init(store, rng);
  const std::size_t o = attention_.output_width();
  store.add("model.proj", xavier_uniform({o, config_.d}, o, config_.d, rng));
  model_passes_[0].init(store, rng);
  model_passes_[1].alias_to(store, model_passes_[0]);
  model_passes_[2].alias_to(store, model_passes_[0]);
  store.add("out.begin", xavier_uniform({2 * config_.d}, 2 * config_.d, 1, rng));
  store.add("out.end", xavier_uniform({2 * config_.d}, 2 * config_.d, 1, rng));
}

HosInputs AbaNet::embed_sequence(Tape& tape, const ParamStore& store, const SequenceInputs& seq,
                                 const Context& ctx) const {
  const std::vector<int> ids = words_.encode(seq.tokens);
  Var cw = dropout(embed_words(tape, store, "word.table", ids), config_.word_dropout, ctx);
  Var feats = features_.forward(tape, store, seq.pos, seq.ner, seq.rule);
  Var cc = char_cnn_.forward(tape, store, char_ids_for(seq.tokens, chars_, config_.chars.max_chars),
                             config_.char_dropout, ctx);
  Var e = highway_.forward(tape, store, matmul(concat({cw, feats, cc}, 1), tape.parameter(store, "embed.proj")));
  Var block = embedding_encoder_.forward(tape, store, e, {}, ctx);
  Var lstm = bilstm_.forward(tape, store, e);
  Var contextual =
      contextual_mix(tape.parameter(store, "ctx.theta"), provider_.hidden_states(store, ids, seq.subtokens), seq.subtokens);
  HosInputs hos;
  hos[0] = concat({cw, feats}, 1);
  hos[1] = cc;
  hos[2] = e;
  hos[3] = contextual;
  hos[4] = block;
  hos[5] = lstm;
  return hos;
}

ForwardResult AbaNet::forward(Tape& tape, const ParamStore& store, const Example& ex, const Context& ctx) const {
  validate(ex);
  const std::size_t m = ex.question.size();
  SequenceInputs p{ex.passage, ex.pos, ex.ner, ex.rule, ex.passage_subtokens()};
  SequenceInputs q{ex.question,
                   ex.question_pos.empty() ? std::vector<int>(m, 0) : ex.question_pos,
                   ex.question_ner.empty() ? std::vector<int>(m, 0) : ex.question_ner,
                   ex.question_rule.empty() ? std::vector<int>(m, 0) : ex.question_rule,
                   std::vector<int>(m, 1)};
  HosInputs hp = embed_sequence(tape, store, p, ctx);
  HosInputs hq = embed_sequence(tape, store, q, ctx);
  AdaptiveAttentionResult att = attention_.forward(tape, store, hp, hq, {}, {}, ctx);

  ForwardResult r;
  Var x = matmul(att.O, tape.parameter(store, "model.proj"));
  r.b1 = model_passes_[0].forward(tape, store, x, {}, ctx);
  r.b2 = model_passes_[1].forward(tape, store, r.b1, {}, ctx);
  r.b3 = model_passes_[2].forward(tape, store, r.b2, {}, ctx);
  r.logits = span_logits(r.b1, r.b2, r.b3, tape.parameter(store, "out.begin"), tape.parameter(store, "out.end"));
  r.p_begin = masked_softmax(r.logits.begin, nullptr, 0).value();
  r.p_end = masked_softmax(r.logits.end, nullptr, 0).value();
  r.attention = att.values;
  r.selected = att.selected;
  return r;
}

std::string AbaNet::architecture_string() const {
  return config_.architecture_string() + "word_vocab=" + std::to_string(words_.size()) +
         ";char_vocab=" + std::to_string(chars_.size()) + ";";
}

std::uint64_t AbaNet::config_digest() const { return fnv1a64(architecture_string()); }

std::pair<Vocabulary, Vocabulary> build_vocabularies(const std::vector<Example>& examples) {
  Vocabulary words, chars;
  auto add = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      words.add(t);
      for (char c : t) chars.add(std::string(1, c));
    }
  };
  for (const auto& ex : examples) {
    add(ex.passage);
    add(ex.question);
  }
  return {std::move(words), std::move(chars)};
}

}  // namespace abanet
