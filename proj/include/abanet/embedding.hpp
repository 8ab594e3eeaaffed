#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "abanet/param_store.hpp"
#include "abanet/tape.hpp"

namespace abanet {

// Dense token ids. Id 0 is the unknown token and id 1 is padding; both are
// present from construction and never reassigned.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int add(const std::string& token);
  // Unknown tokens map to kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Reads `token v1 ... v_dim` lines into a [vocab.size() x dim] table. Tokens
// missing from the file keep zero rows; file tokens outside the vocabulary
// are skipped.
Tensor load_embedding_file(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim);

// Fixed or trainable word vectors; the table lives in the ParamStore under
// `name`, and a non-trainable entry never receives gradient.
Var embed_words(Tape& tape, const ParamStore& store, const std::string& name, const std::vector<int>& ids);

// Character ids per word, padded or truncated to max_chars with kPad.
std::vector<std::vector<int>> char_ids_for(const std::vector<std::string>& words, const Vocabulary& chars,
                                           std::size_t max_chars);

struct CharCnnConfig {
  std::size_t char_dim = 16;
  std::size_t kernel = 3;
  std::size_t filters = 64;
  std::size_t max_chars = 16;
};

// Char embedding -> valid 1-D convolution over characters -> max-pool -> ReLU.
class CharCnn {
 public:
  CharCnn(std::string prefix, std::size_t char_vocab, CharCnnConfig config);

  void init(ParamStore& store, Rng& rng) const;
  Var forward(Tape& tape, const ParamStore& store, const std::vector<std::vector<int>>& char_ids,
              double char_dropout, const Context& ctx) const;

  const CharCnnConfig& config() const { return config_; }

 private:
  std::string prefix_;
  std::size_t char_vocab_;
  CharCnnConfig config_;
};

struct FeatureConfig {
  std::size_t pos_dim = 16;
  std::size_t ner_dim = 8;
  std::size_t rule_dim = 4;
  std::size_t pos_vocab = 64;
  std::size_t ner_vocab = 32;
  std::size_t rule_vocab = 8;

  std::size_t width() const { return pos_dim + ner_dim + rule_dim; }
};

// Concatenated [pos; ner; rule] lookups.
class FeatureEmbedding {
 public:
  FeatureEmbedding(std::string prefix, FeatureConfig config);

  void init(ParamStore& store, Rng& rng) const;
  Var forward(Tape& tape, const ParamStore& store, const std::vector<int>& pos, const std::vector<int>& ner,
              const std::vector<int>& rule) const;

  const FeatureConfig& config() const { return config_; }

 private:
  std::string prefix_;
  FeatureConfig config_;
};

// y = g * relu(W_t x + b_t) + (1 - g) * x with g = sigmoid(W_g x + b_g),
// applied `layers` times at constant width.
class Highway {
 public:
  Highway(std::string prefix, std::size_t width, std::size_t layers = 2);

  void init(ParamStore& store, Rng& rng) const;
  Var forward(Tape& tape, const ParamStore& store, Var x) const;

  std::string gate_bias_name(std::size_t layer) const;

 private:
  std::string prefix_;
  std::size_t width_;
  std::size_t layers_;
};

// Stacked bidirectional LSTM; each position's output is [h_fwd; h_bwd] and
// layer k reads layer k-1's output. With shared_directions the backward
// weights alias the forward ones.
class BiLstm {
 public:
  BiLstm(std::string prefix, std::size_t input_width, std::size_t hidden, std::size_t layers = 1,
         bool shared_directions = false);

  void init(ParamStore& store, Rng& rng) const;
  Var forward(Tape& tape, const ParamStore& store, Var x) const;

  std::size_t output_width() const { return 2 * hidden_; }
  std::string param_name(std::size_t layer, bool backward, const char* what) const;

 private:
  Var run_direction(Tape& tape, const ParamStore& store, Var x, std::size_t layer, bool backward) const;

  std::string prefix_;
  std::size_t input_width_;
  std::size_t hidden_;
  std::size_t layers_;
  bool shared_;
};

// Row i is the mean of the subtokens[i] consecutive rows belonging to word i.
Tensor subtoken_average(const Tensor& hidden, const std::vector<int>& subtokens);

// sum_l theta[l] * subtoken_average(layers[l]); theta is a trainable [L].
Var contextual_mix(Var theta, const std::vector<Tensor>& layers, const std::vector<int>& subtokens);

}  // namespace abanet
