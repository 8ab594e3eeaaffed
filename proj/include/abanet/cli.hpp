#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "abanet/config.hpp"
#include "abanet/train.hpp"

namespace abanet {

struct RunConfig {
  ModelConfig model = ModelConfig::paper();
  // True when a profile or config file was given, so eval/predict check the
  // checkpoint against `model`.
  bool model_given = false;
  std::filesystem::path data;
  std::filesystem::path embeddings;
  std::filesystem::path checkpoint = "abanet.ckpt";
  std::filesystem::path output;
  std::uint64_t seed = 1;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;
  bool dump_attention = false;

  // Keys understood on top of the model settings: data, embeddings,
  // checkpoint, output, seed, epochs, max_steps.
  void set(const std::string& key, const std::string& value);
};

// Precedence, lowest first: profile default, config file, explicit profile
// flag (replaces the base before the file is applied), `overrides` in order.
RunConfig make_run_config(const std::optional<std::filesystem::path>& config_file,
                          const std::optional<std::string>& profile,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

// The `config k=v ...` line train prints before its first epoch.
std::string settings_line(const RunConfig& run);

struct TrainSummary {
  std::vector<EpochLog> epochs;
  std::uint64_t checkpoint_digest = 0;
};

TrainSummary cmd_train(const RunConfig& run, std::ostream& out);
Scores cmd_eval(const RunConfig& run, std::ostream& out);
std::vector<Prediction> cmd_predict(const RunConfig& run, std::ostream& out);
// Returns true when every op and module passes. A nonempty `fault_op`
// corrupts that op's backward rule for the duration of the run.
bool cmd_gradcheck(const RunConfig& run, std::ostream& out, const std::string& fault_op = {});
void cmd_generate(const std::string& task, std::size_t size, std::uint64_t seed, const std::filesystem::path& path);

// One JSONL record; with `with_attention`, the passage-to-question rows too.
std::string prediction_json(const Prediction& p, bool with_attention);

// Exit codes: 0 success, 1 usage/config/data error, 2 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace abanet
