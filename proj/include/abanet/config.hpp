#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "abanet/attention.hpp"
#include "abanet/embedding.hpp"
#include "abanet/encoder.hpp"

namespace abanet {

struct ModelConfig {
  std::string profile = "paper";

  std::size_t d = 128;
  std::size_t word_dim = 300;
  FeatureConfig features;
  CharCnnConfig chars;
  std::size_t highway_layers = 2;
  std::size_t lstm_hidden = 128;
  std::size_t lstm_layers = 1;
  std::size_t contextual_layers = 4;
  EncoderBlockConfig embedding_encoder;
  EncoderBlockConfig model_encoder;
  EncoderBlockConfig provider_encoder;
  CapsuleConfig capsules;
  LambdaInit lambda_init = LambdaInit::kIdentity;
  bool adaptive_scale = true;
  std::size_t select_k = 3;

  double word_dropout = 0.1;
  double char_dropout = 0.05;
  double dropout = 0.1;
  double survival_last = 0.9;
  double l2 = 3e-7;

  std::size_t batch_size = 25;
  double learning_rate = 1e-3;
  double beta1 = 0.8;
  double beta2 = 0.999;
  double adam_eps = 1e-7;
  std::size_t warmup_steps = 1000;
  double grad_clip = 5.0;

  std::size_t max_answer_len = 30;
  bool unanswerable = false;

  static ModelConfig paper();
  // d=8 everywhere, one conv layer and one block per encoder, 2x2 capsules.
  static ModelConfig mini();
  static ModelConfig for_profile(const std::string& name);

  // Copies the shared width, dropout and survival settings into the three
  // encoder configurations, then checks every constraint.
  void finalize();

  // Every setting as key=value pairs, in a fixed order.
  std::vector<std::pair<std::string, std::string>> settings() const;
  // Throws ConfigError for an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);

  // Settings that change parameter shapes or the evaluation-mode function.
  std::string architecture_string() const;
};

// Reads `key = value` lines; `#` starts a comment. A `profile` line replaces
// `base` with that profile before the other keys are applied.
ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base);
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                   const std::string& source = "<string>");

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

}  // namespace abanet
