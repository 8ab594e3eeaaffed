#include "abanet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "abanet/errors.hpp"
#include "json.hpp"

namespace abanet {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'B', 'A', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw DataError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += sizeof(T);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AbaNet& model, const ParamStore& store) {
  json manifest;
  json cfg = json::object();
  for (const auto& [k, v] : model.config().settings()) cfg[k] = v;
  manifest["config"] = cfg;
  manifest["words"] = model.words().tokens();
  manifest["chars"] = model.chars().tokens();
  std::string data;
  json tensors = json::array();
  for (const auto& name : store.names()) {
    const Tensor& t = store.value(name);
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", data.size()}});
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le(data, bits);
    }
  }
  manifest["tensors"] = tensors;
  const std::string text = manifest.dump();
  const std::string payload = text + data;

  std::string out(kMagic, sizeof kMagic);
  put_le(out, kCheckpointVersion);
  put_le(out, model.config_digest());
  put_le(out, fnv1a64(payload));
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::size_t at = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, at);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto digest = get_le<std::uint64_t>(bytes, at);
  const auto checksum = get_le<std::uint64_t>(bytes, at);
  const auto manifest_len = get_le<std::uint64_t>(bytes, at);
  const std::string payload = bytes.substr(at);
  if (fnv1a64(payload) != checksum) {
    throw DataError("checkpoint digest mismatch: payload checksum does not match header (file corrupted?)");
  }
  if (manifest_len > payload.size()) throw DataError("checkpoint digest mismatch: manifest length out of range");
  json manifest;
  try {
    manifest = json::parse(payload.substr(0, manifest_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint manifest unreadable: ") + e.what());
  }
  const std::string data = payload.substr(manifest_len);

  const json& cfg = manifest.at("config");
  ModelConfig config = ModelConfig::for_profile(cfg.value("profile", std::string("paper")));
  for (const auto& [k, v] : cfg.items()) config.set(k, v.get<std::string>());
  config.finalize();
  Vocabulary words(manifest.at("words").get<std::vector<std::string>>());
  Vocabulary chars(manifest.at("chars").get<std::vector<std::string>>());

  AbaNet model(config, words, chars);
  if (model.config_digest() != digest) {
    throw DataError("checkpoint digest mismatch: recorded config digest " + hex64(digest) +
                    " does not match its manifest (" + hex64(model.config_digest()) + ")");
  }
  if (expected) {
    const std::uint64_t want = AbaNet(*expected, words, chars).config_digest();
    if (want != digest) {
      throw DataError("checkpoint config digest mismatch: checkpoint " + hex64(digest) + ", requested configuration " +
                      hex64(want));
    }
  }

  ParamStore store;
  Rng rng(0);
  model.init(store, rng);
  const auto names = store.names();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != names.size()) throw DataError("checkpoint holds a different parameter set");
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    if (!store.contains(name) || store.resolve(name) != name) throw DataError("checkpoint has unknown parameter " + name);
    Tensor& value = store.value(name);
    if (t.at("shape").get<Shape>() != value.shape()) throw DataError("checkpoint shape mismatch for " + name);
    std::size_t off = t.at("offset").get<std::size_t>();
    if (off + 8 * value.size() > data.size()) throw DataError("checkpoint truncated at " + name);
    for (double& v : value.data()) {
      const auto bits = get_le<std::uint64_t>(data, off);
      std::memcpy(&v, &bits, sizeof v);
    }
  }
  return LoadedCheckpoint{std::move(model), std::move(store), digest};
}

std::uint64_t file_digest(const std::filesystem::path& path) { return fnv1a64(read_file(path)); }

}  // namespace abanet
