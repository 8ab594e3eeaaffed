#include "abanet/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "abanet/errors.hpp"

namespace abanet {

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.embedding_encoder.num_conv_layers = 5;
  c.embedding_encoder.kernel = 7;
  c.embedding_encoder.num_blocks = 1;
  c.model_encoder.num_conv_layers = 2;
  c.model_encoder.kernel = 5;
  c.model_encoder.num_blocks = 4;
  c.provider_encoder.num_conv_layers = 1;
  c.provider_encoder.kernel = 7;
  c.finalize();
  return c;
}

ModelConfig ModelConfig::mini() {
  ModelConfig c;
  c.profile = "mini";
  c.d = 8;
  c.word_dim = 8;
  c.features = FeatureConfig{4, 2, 2, 16, 16, 8};
  c.chars = CharCnnConfig{4, 3, 8, 8};
  c.lstm_hidden = 4;
  c.contextual_layers = 2;
  for (EncoderBlockConfig* e : {&c.embedding_encoder, &c.model_encoder, &c.provider_encoder}) {
    e->num_conv_layers = 1;
    e->kernel = 3;
    e->num_heads = 2;
    e->num_blocks = 1;
  }
  c.capsules = CapsuleConfig{2, 4, 2, 4, 3};
  c.batch_size = 10;
  c.learning_rate = 3e-3;
  c.warmup_steps = 20;
  c.finalize();
  return c;
}

ModelConfig ModelConfig::for_profile(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "mini") return mini();
  throw ConfigError("unknown profile '" + name + "' (expected paper or mini)");
}

void ModelConfig::finalize() {
  for (EncoderBlockConfig* e : {&embedding_encoder, &model_encoder, &provider_encoder}) {
    e->filters = d;
    e->ffn_width = d;
    e->dropout = dropout;
    e->survival_last = survival_last;
    e->validate();
  }
  capsules.validate(d);
  if (d == 0 || word_dim == 0 || lstm_hidden == 0 || contextual_layers == 0) {
    throw ConfigError("config: widths and layer counts must be positive");
  }
  if (select_k == 0 || select_k > kHosComponents) throw ConfigError("config: select_k must be in [1, 6]");
  for (double r : {word_dropout, char_dropout, dropout}) {
    if (r < 0.0 || r >= 1.0) throw ConfigError("config: dropout rates must be in [0, 1)");
  }
  if (chars.max_chars < chars.kernel) throw ConfigError("config: max_chars must be at least char_kernel");
  if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (max_answer_len == 0) throw ConfigError("config: max_answer_len must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("config: Adam betas must be in [0, 1)");
  if (l2 < 0.0) throw ConfigError("config: l2 must be non-negative");
}

namespace {

struct Field {
  const char* key;
  bool architecture;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

#define SIZE_FIELD(name, arch, member)                                                       \
  Field {                                                                                  \
    name, arch, [](const ModelConfig& c) { return std::to_string(c.member); },             \
        [](ModelConfig& c, const std::string& v) { c.member = parse_size(name, v); }       \
  }
#define REAL_FIELD(name, arch, member)                                                       \
  Field {                                                                                  \
    name, arch, [](const ModelConfig& c) { return fmt(c.member); },                        \
        [](ModelConfig& c, const std::string& v) { c.member = parse_double(name, v); }     \
  }
#define BOOL_FIELD(name, arch, member)                                                       \
  Field {                                                                                  \
    name, arch, [](const ModelConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ModelConfig& c, const std::string& v) { c.member = parse_bool(name, v); }       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SIZE_FIELD("d", true, d),
      SIZE_FIELD("word_dim", true, word_dim),
      SIZE_FIELD("pos_dim", true, features.pos_dim),
      SIZE_FIELD("ner_dim", true, features.ner_dim),
      SIZE_FIELD("rule_dim", true, features.rule_dim),
      SIZE_FIELD("pos_vocab", true, features.pos_vocab),
      SIZE_FIELD("ner_vocab", true, features.ner_vocab),
      SIZE_FIELD("rule_vocab", true, features.rule_vocab),
      SIZE_FIELD("char_dim", true, chars.char_dim),
      SIZE_FIELD("char_kernel", true, chars.kernel),
      SIZE_FIELD("char_filters", true, chars.filters),
      SIZE_FIELD("max_chars", true, chars.max_chars),
      SIZE_FIELD("highway_layers", true, highway_layers),
      SIZE_FIELD("lstm_hidden", true, lstm_hidden),
      SIZE_FIELD("lstm_layers", true, lstm_layers),
      SIZE_FIELD("contextual_layers", true, contextual_layers),
      SIZE_FIELD("emb_conv_layers", true, embedding_encoder.num_conv_layers),
      SIZE_FIELD("emb_kernel", true, embedding_encoder.kernel),
      SIZE_FIELD("emb_blocks", true, embedding_encoder.num_blocks),
      SIZE_FIELD("emb_heads", true, embedding_encoder.num_heads),
      SIZE_FIELD("model_conv_layers", true, model_encoder.num_conv_layers),
      SIZE_FIELD("model_kernel", true, model_encoder.kernel),
      SIZE_FIELD("model_blocks", true, model_encoder.num_blocks),
      SIZE_FIELD("model_heads", true, model_encoder.num_heads),
      SIZE_FIELD("provider_conv_layers", true, provider_encoder.num_conv_layers),
      SIZE_FIELD("provider_kernel", true, provider_encoder.kernel),
      SIZE_FIELD("provider_heads", true, provider_encoder.num_heads),
      SIZE_FIELD("primary_caps", true, capsules.primary_count),
      SIZE_FIELD("primary_dim", true, capsules.primary_dim),
      SIZE_FIELD("digit_caps", true, capsules.digit_count),
      SIZE_FIELD("digit_dim", true, capsules.digit_dim),
      SIZE_FIELD("routing_iterations", true, capsules.routing_iterations),
      Field{"lambda_init", false,
            [](const ModelConfig& c) { return std::string(c.lambda_init == LambdaInit::kIdentity ? "identity" : "paper"); },
            [](ModelConfig& c, const std::string& v) {
              if (v == "identity") c.lambda_init = LambdaInit::kIdentity;
              else if (v == "paper") c.lambda_init = LambdaInit::kPaperLiteral;
              else throw ConfigError("config: lambda_init expects identity or paper, got '" + v + "'");
            }},
      BOOL_FIELD("adaptive_scale", true, adaptive_scale),
      SIZE_FIELD("select_k", true, select_k),
      REAL_FIELD("survival_last", true, survival_last),
      REAL_FIELD("word_dropout", false, word_dropout),
      REAL_FIELD("char_dropout", false, char_dropout),
      REAL_FIELD("dropout", false, dropout),
      REAL_FIELD("l2", false, l2),
      SIZE_FIELD("batch_size", false, batch_size),
      REAL_FIELD("learning_rate", false, learning_rate),
      REAL_FIELD("beta1", false, beta1),
      REAL_FIELD("beta2", false, beta2),
      REAL_FIELD("adam_eps", false, adam_eps),
      SIZE_FIELD("warmup_steps", false, warmup_steps),
      REAL_FIELD("grad_clip", false, grad_clip),
      SIZE_FIELD("max_answer_len", false, max_answer_len),
      BOOL_FIELD("unanswerable", false, unanswerable),
  };
  return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::settings() const {
  std::vector<std::pair<std::string, std::string>> out = {{"profile", profile}};
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "profile") {
    profile = value;
    return;
  }
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string ModelConfig::architecture_string() const {
  std::string out;
  for (const Field& f : fields()) {
    if (f.architecture) out += std::string(f.key) + "=" + f.get(*this) + ";";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto kvs = parse_key_values(ss.str(), path.string());
  for (const auto& [k, v] : kvs) {
    if (k == "profile") base = ModelConfig::for_profile(v);
  }
  for (const auto& [k, v] : kvs) {
    if (k != "profile") base.set(k, v);
  }
  base.finalize();
  return base;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace abanet
