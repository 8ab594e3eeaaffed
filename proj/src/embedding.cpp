#include "abanet/embedding.hpp"

#include <fstream>
#include <sstream>

#include "abanet/errors.hpp"
#include "abanet/init.hpp"
#include "abanet/ops.hpp"

namespace abanet {

Vocabulary::Vocabulary() {
  add("<unk>");
  add("<pad>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[kUnk] != "<unk>" || tokens[kPad] != "<pad>") {
    throw DataError("vocabulary must start with <unk> and <pad>");
  }
  for (const auto& t : tokens) {
    if (index_.count(t)) throw DataError("duplicate vocabulary token: " + t);
    add(t);
  }
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tensor load_embedding_file(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path.string());
  Tensor table({vocab.size(), dim});
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> values;
    double v;
    while (is >> v) values.push_back(v);
    if (!is.eof()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    if (values.size() != dim) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " values, found " + std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;
    const auto row = static_cast<std::size_t>(vocab.id(token));
    for (std::size_t c = 0; c < dim; ++c) table(row, c) = values[c];
  }
  return table;
}

Var embed_words(Tape& tape, const ParamStore& store, const std::string& name, const std::vector<int>& ids) {
  return gather_rows(tape.parameter(store, name), ids);
}

std::vector<std::vector<int>> char_ids_for(const std::vector<std::string>& words, const Vocabulary& chars,
                                           std::size_t max_chars) {
  std::vector<std::vector<int>> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    std::vector<int> ids(max_chars, Vocabulary::kPad);
    for (std::size_t i = 0; i < w.size() && i < max_chars; ++i) ids[i] = chars.id(std::string(1, w[i]));
    out.push_back(std::move(ids));
  }
  return out;
}

CharCnn::CharCnn(std::string prefix, std::size_t char_vocab, CharCnnConfig config)
    : prefix_(std::move(prefix)), char_vocab_(char_vocab), config_(config) {
  if (config_.max_chars < config_.kernel) {
    throw ConfigError("char CNN: max_chars " + std::to_string(config_.max_chars) + " is less than kernel width " +
                      std::to_string(config_.kernel));
  }
}

void CharCnn::init(ParamStore& store, Rng& rng) const {
  store.add(prefix_ + ".table", uniform({char_vocab_, config_.char_dim}, 0.5, rng));
  const std::size_t fan_in = config_.kernel * config_.char_dim;
  store.add(prefix_ + ".filters",
            xavier_uniform({config_.kernel, config_.char_dim, config_.filters}, fan_in, config_.filters, rng));
  store.add(prefix_ + ".bias", Tensor({config_.filters}));
}

Var CharCnn::forward(Tape& tape, const ParamStore& store, const std::vector<std::vector<int>>& char_ids,
                     double char_dropout, const Context& ctx) const {
  if (char_ids.empty()) throw DataError("char CNN: empty word sequence");
  std::vector<int> flat;
  flat.reserve(char_ids.size() * config_.max_chars);
  for (const auto& w : char_ids) {
    if (w.size() != config_.max_chars) {
      throw DimensionError("char CNN: word has " + std::to_string(w.size()) + " char ids, expected " +
                           std::to_string(config_.max_chars));
    }
    flat.insert(flat.end(), w.begin(), w.end());
  }
  Var emb = gather_rows(tape.parameter(store, prefix_ + ".table"), flat, Vocabulary::kPad);
  emb = dropout(emb, char_dropout, ctx);
  emb = reshape(emb, {char_ids.size(), config_.max_chars, config_.char_dim});
  return relu(char_conv_maxpool(emb, tape.parameter(store, prefix_ + ".filters"),
                                tape.parameter(store, prefix_ + ".bias")));
}

FeatureEmbedding::FeatureEmbedding(std::string prefix, FeatureConfig config)
    : prefix_(std::move(prefix)), config_(config) {}

void FeatureEmbedding::init(ParamStore& store, Rng& rng) const {
  store.add(prefix_ + ".pos", uniform({config_.pos_vocab, config_.pos_dim}, 0.5, rng));
  store.add(prefix_ + ".ner", uniform({config_.ner_vocab, config_.ner_dim}, 0.5, rng));
  store.add(prefix_ + ".rule", uniform({config_.rule_vocab, config_.rule_dim}, 0.5, rng));
}

Var FeatureEmbedding::forward(Tape& tape, const ParamStore& store, const std::vector<int>& pos,
                              const std::vector<int>& ner, const std::vector<int>& rule) const {
  if (pos.size() != ner.size() || pos.size() != rule.size()) {
    throw DataError("feature ids: pos/ner/rule lengths differ (" + std::to_string(pos.size()) + "/" +
                    std::to_string(ner.size()) + "/" + std::to_string(rule.size()) + ")");
  }
  return concat({gather_rows(tape.parameter(store, prefix_ + ".pos"), pos),
                 gather_rows(tape.parameter(store, prefix_ + ".ner"), ner),
                 gather_rows(tape.parameter(store, prefix_ + ".rule"), rule)},
                1);
}

Highway::Highway(std::string prefix, std::size_t width, std::size_t layers)
    : prefix_(std::move(prefix)), width_(width), layers_(layers) {}

std::string Highway::gate_bias_name(std::size_t layer) const {
  return prefix_ + "." + std::to_string(layer) + ".gate_bias";
}

void Highway::init(ParamStore& store, Rng& rng) const {
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::string p = prefix_ + "." + std::to_string(l);
    store.add(p + ".transform", xavier_uniform({width_, width_}, width_, width_, rng));
    store.add(p + ".transform_bias", Tensor({width_}));
    store.add(p + ".gate", xavier_uniform({width_, width_}, width_, width_, rng));
    store.add(gate_bias_name(l), Tensor({width_}));
  }
}

Var Highway::forward(Tape& tape, const ParamStore& store, Var x) const {
  if (x.value().rank() != 2 || x.dim(1) != width_) {
    throw DimensionError("highway: expected width " + std::to_string(width_) + ", got " + shape_str(x.shape()));
  }
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::string p = prefix_ + "." + std::to_string(l);
    Var t = relu(add_bias(matmul(x, tape.parameter(store, p + ".transform")),
                          tape.parameter(store, p + ".transform_bias")));
    Var g = sigmoid(add_bias(matmul(x, tape.parameter(store, p + ".gate")), tape.parameter(store, gate_bias_name(l))));
    x = add(mul(g, t), mul(one_minus(g), x));
  }
  return x;
}

BiLstm::BiLstm(std::string prefix, std::size_t input_width, std::size_t hidden, std::size_t layers,
               bool shared_directions)
    : prefix_(std::move(prefix)), input_width_(input_width), hidden_(hidden), layers_(layers),
      shared_(shared_directions) {
  if (layers_ == 0) throw ConfigError("BiLSTM: at least one layer required");
}

std::string BiLstm::param_name(std::size_t layer, bool backward, const char* what) const {
  return prefix_ + "." + std::to_string(layer) + (backward ? ".bwd." : ".fwd.") + what;
}

void BiLstm::init(ParamStore& store, Rng& rng) const {
  const std::size_t h4 = 4 * hidden_;
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::size_t in = l == 0 ? input_width_ : 2 * hidden_;
    for (bool bwd : {false, true}) {
      if (bwd && shared_) {
        for (const char* w : {"input", "recurrent", "bias"}) store.alias(param_name(l, true, w), param_name(l, false, w));
        continue;
      }
      store.add(param_name(l, bwd, "input"), xavier_uniform({in, h4}, in, h4, rng));
      store.add(param_name(l, bwd, "recurrent"), xavier_uniform({hidden_, h4}, hidden_, h4, rng));
      store.add(param_name(l, bwd, "bias"), Tensor({h4}));
    }
  }
}

Var BiLstm::run_direction(Tape& tape, const ParamStore& store, Var x, std::size_t layer, bool backward) const {
  const std::size_t n = x.dim(0), h = hidden_;
  Var gates_x = add_bias(matmul(x, tape.parameter(store, param_name(layer, backward, "input"))),
                         tape.parameter(store, param_name(layer, backward, "bias")));
  Var wh = tape.parameter(store, param_name(layer, backward, "recurrent"));
  Var hs = tape.constant(Tensor({1, h}));
  Var cs = tape.constant(Tensor({1, h}));
  std::vector<Var> outputs(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = backward ? n - 1 - step : step;
    Var g = add(slice(gates_x, 0, t, 1), matmul(hs, wh));
    Var i = sigmoid(slice(g, 1, 0, h));
    Var f = sigmoid(slice(g, 1, h, h));
    Var o = sigmoid(slice(g, 1, 2 * h, h));
    Var u = tanh(slice(g, 1, 3 * h, h));
    cs = add(mul(f, cs), mul(i, u));
    hs = mul(o, tanh(cs));
    outputs[t] = hs;
  }
  return concat(outputs, 0);
}

Var BiLstm::forward(Tape& tape, const ParamStore& store, Var x) const {
  if (x.value().rank() != 2 || x.dim(1) != input_width_) {
    throw DimensionError("BiLSTM: expected input width " + std::to_string(input_width_) + ", got " +
                         shape_str(x.shape()));
  }
  for (std::size_t l = 0; l < layers_; ++l) {
    x = concat({run_direction(tape, store, x, l, false), run_direction(tape, store, x, l, true)}, 1);
  }
  return x;
}

Tensor subtoken_average(const Tensor& hidden, const std::vector<int>& subtokens) {
  if (hidden.rank() != 2) throw DimensionError("subtoken_average: expected 2-D hidden states");
  std::size_t total = 0;
  for (int s : subtokens) {
    if (s < 1) throw DataError("subtoken count must be at least 1");
    total += static_cast<std::size_t>(s);
  }
  if (total != hidden.dim(0)) {
    throw DataError("subtoken counts sum to " + std::to_string(total) + " but provider emitted " +
                    std::to_string(hidden.dim(0)) + " positions");
  }
  const std::size_t h = hidden.dim(1);
  Tensor out({subtokens.size(), h});
  std::size_t row = 0;
  for (std::size_t w = 0; w < subtokens.size(); ++w) {
    const auto s = static_cast<std::size_t>(subtokens[w]);
    for (std::size_t k = 0; k < s; ++k, ++row) {
      for (std::size_t c = 0; c < h; ++c) out(w, c) += hidden(row, c);
    }
    for (std::size_t c = 0; c < h; ++c) out(w, c) /= static_cast<double>(s);
  }
  return out;
}

Var contextual_mix(Var theta, const std::vector<Tensor>& layers, const std::vector<int>& subtokens) {
  if (layers.empty()) throw DimensionError("contextual_mix: provider returned no layers");
  if (theta.value().shape() != Shape{layers.size()}) {
    throw DimensionError("contextual_mix: " + std::to_string(layers.size()) + " layers but mixture weights " +
                         shape_str(theta.shape()));
  }
  Tape& tape = theta.tape();
  Var out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].shape() != layers[0].shape()) {
      throw DimensionError("contextual_mix: layer " + std::to_string(l) + " has shape " +
                           shape_str(layers[l].shape()) + ", layer 0 has " + shape_str(layers[0].shape()));
    }
    Var term = mul_scalar_at(tape.constant(subtoken_average(layers[l], subtokens)), theta, l);
    out = l == 0 ? term : add(out, term);
  }
  return out;
}

}  // namespace abanet
