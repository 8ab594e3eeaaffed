#include "abanet/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "abanet/checkpoint.hpp"
#include "abanet/diagnostics.hpp"
#include "abanet/errors.hpp"
#include "json.hpp"

namespace abanet {

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || value[0] == '-') {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<Example> load_dataset(const RunConfig& run) {
  if (run.data.empty()) throw ConfigError("no dataset given (--data)");
  std::vector<Example> data = load_jsonl(run.data);
  if (data.empty()) throw DataError(run.data.string() + ": dataset is empty");
  return data;
}

const ModelConfig* expected_config(const RunConfig& run) { return run.model_given ? &run.model : nullptr; }

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Restores normal backward rules when the gradcheck run ends.
struct FaultGuard {
  explicit FaultGuard(const std::string& op) {
    if (!op.empty()) debug::inject_backward_fault(op);
  }
  ~FaultGuard() { debug::inject_backward_fault(""); }
};

void print_entry(std::ostream& out, const char* kind, const GradCheckEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-22s coords=%-5zu max_rel=%.3e kinks=%zu %s", kind, e.name.c_str(),
                e.coords, e.max_rel_error, e.kink_crossings, e.passed ? "PASS" : "FAIL");
  out << buf;
  if (!e.passed) out << " worst=" << e.worst_param;
  out << '\n';
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "data") {
    data = value;
  } else if (key == "embeddings") {
    embeddings = value;
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "output") {
    output = value;
  } else if (key == "seed") {
    seed = parse_count(key, value);
  } else if (key == "epochs") {
    epochs = parse_count(key, value);
  } else if (key == "max_steps") {
    max_steps = parse_count(key, value);
  } else {
    model.set(key, value);
  }
}

RunConfig make_run_config(const std::optional<std::filesystem::path>& config_file,
                          const std::optional<std::string>& profile,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig run;
  std::vector<std::pair<std::string, std::string>> file_kvs;
  std::optional<std::string> base = profile;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw ConfigError("cannot open config file: " + config_file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    file_kvs = parse_key_values(ss.str(), config_file->string());
    for (const auto& [k, v] : file_kvs) {
      if (k == "profile" && !profile) base = v;
    }
  }
  run.model = ModelConfig::for_profile(base.value_or("paper"));
  run.model_given = config_file.has_value() || profile.has_value();
  for (const auto& [k, v] : file_kvs) {
    if (k != "profile") run.set(k, v);
  }
  for (const auto& [k, v] : overrides) {
    if (k == "profile") throw ConfigError("use --profile to select a profile");
    run.set(k, v);
  }
  run.model.finalize();
  return run;
}

std::string settings_line(const RunConfig& run) {
  std::string line = "config";
  for (const auto& [k, v] : run.model.settings()) line += ' ' + k + '=' + v;
  return line + " epochs=" + std::to_string(run.epochs) + " seed=" + std::to_string(run.seed);
}

TrainSummary cmd_train(const RunConfig& run, std::ostream& out) {
  const std::vector<Example> data = load_dataset(run);
  auto [words, chars] = build_vocabularies(data);
  AbaNet model(run.model, words, chars);

  out << settings_line(run) << '\n';

  ParamStore store;
  Rng rng(run.seed);
  if (run.embeddings.empty()) {
    model.init(store, rng);
  } else {
    const Tensor table = load_embedding_file(run.embeddings, model.words(), run.model.word_dim);
    model.init(store, rng, &table);
  }

  TrainOptions opts;
  opts.epochs = run.epochs;
  opts.max_steps = run.max_steps;
  opts.seed = run.seed;
  opts.on_epoch = [&](const EpochLog& log) { out << format_epoch(log) << std::endl; };
  TrainResult result = train(model, store, data, opts);

  save_checkpoint(run.checkpoint, model, store);
  TrainSummary summary;
  summary.epochs = std::move(result.epochs);
  summary.checkpoint_digest = file_digest(run.checkpoint);
  out << "checkpoint=" << run.checkpoint.string() << " digest=" << hex64(summary.checkpoint_digest) << '\n';
  return summary;
}

Scores cmd_eval(const RunConfig& run, std::ostream& out) {
  const std::vector<Example> data = load_dataset(run);
  LoadedCheckpoint ckpt = load_checkpoint(run.checkpoint, expected_config(run));
  const Scores s = evaluate(ckpt.model, ckpt.params, data);
  out << "em=" << format_fixed(s.em, 4) << " f1=" << format_fixed(s.f1, 4) << " examples=" << s.count << '\n';
  out << nlohmann::ordered_json{{"em", s.em}, {"f1", s.f1}, {"examples", s.count}}.dump() << '\n';
  return s;
}

std::string prediction_json(const Prediction& p, bool with_attention) {
  nlohmann::ordered_json j = {{"id", p.id}, {"begin", p.begin}, {"end", p.end}, {"text", p.text}, {"score", p.score}};
  if (with_attention) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.attention.dim(0); ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (std::size_t k = 0; k < p.attention.dim(1); ++k) row.push_back(p.attention(i, k));
      rows.push_back(std::move(row));
    }
    j["attention"] = std::move(rows);
  }
  return j.dump();
}

std::vector<Prediction> cmd_predict(const RunConfig& run, std::ostream& out) {
  const std::vector<Example> data = load_dataset(run);
  LoadedCheckpoint ckpt = load_checkpoint(run.checkpoint, expected_config(run));
  std::ofstream file;
  if (!run.output.empty()) {
    file.open(run.output);
    if (!file) throw DataError("cannot write predictions: " + run.output.string());
  }
  std::ostream& sink = run.output.empty() ? out : file;
  std::vector<Prediction> preds;
  for (const Example& ex : data) {
    preds.push_back(predict(ckpt.model, ckpt.params, ex));
    sink << prediction_json(preds.back(), run.dump_attention) << '\n';
  }
  return preds;
}

bool cmd_gradcheck(const RunConfig& run, std::ostream& out, const std::string& fault_op) {
  if (run.model.profile != "mini") {
    throw ConfigError("gradcheck runs only in the mini profile (got '" + run.model.profile + "')");
  }
  FaultGuard guard(fault_op);
  GradCheckOptions opts;
  out << "gradcheck epsilon=" << opts.epsilon << " tolerance=" << opts.tolerance
      << " precision=f64 dropout=off stochastic_depth=off\n";
  bool ok = true;
  for (const auto& e : grad_check_ops(opts, run.seed)) {
    print_entry(out, "op", e);
    ok = ok && e.passed;
  }
  const ModelGradCheck model = grad_check_model(run.model, run.seed, opts);
  for (const auto& e : model.modules) {
    print_entry(out, "module", e);
    ok = ok && e.passed;
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "gradcheck %s max_rel=%.3e worst=%s draws=%zu seconds=%.1f", ok ? "PASS" : "FAIL",
                model.report.max_rel_error, model.report.worst_param.c_str(), model.draws, model.seconds);
  out << buf << '\n';
  return ok;
}

void cmd_generate(const std::string& task, std::size_t size, std::uint64_t seed, const std::filesystem::path& path) {
  write_jsonl(path, gen_synthetic(parse_task(task), size, seed));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ABA-Net reading comprehension: train, evaluate and inspect span-extraction models"};
  app.require_subcommand(1);

  std::optional<std::string> config_path, profile;
  std::vector<std::string> sets;
  std::string data, checkpoint, embeddings, output, fault_op;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, max_steps;
  bool dump_attention = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--profile", profile, "paper or mini")->check(CLI::IsMember({"paper", "mini"}));
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--set", sets, "override one setting, key=value (repeatable)");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  common(train_cmd);
  train_cmd->add_option("--data", data, "training JSONL")->required();
  train_cmd->add_option("--checkpoint", checkpoint, "checkpoint to write");
  train_cmd->add_option("--embeddings", embeddings, "word vector text file");
  train_cmd->add_option("--epochs", epochs, "passes over the data");
  train_cmd->add_option("--max-steps", max_steps, "stop after this many updates");

  CLI::App* eval_cmd = app.add_subcommand("eval", "exact match and F1 of a checkpoint on a dataset");
  common(eval_cmd);
  eval_cmd->add_option("--data", data, "evaluation JSONL")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to load")->required();

  CLI::App* predict_cmd = app.add_subcommand("predict", "decode answers as JSONL");
  common(predict_cmd);
  predict_cmd->add_option("--data", data, "examples JSONL")->required();
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint to load")->required();
  predict_cmd->add_option("--output", output, "write predictions here instead of stdout");
  predict_cmd->add_flag("--dump-attention", dump_attention, "append passage-to-question attention rows");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and module");
  common(grad_cmd);
  grad_cmd->add_option("--inject-fault", fault_op)->group("");

  std::string task = "copy-locate";
  std::size_t size = 50;
  CLI::App* gen_cmd = app.add_subcommand("generate", "write a synthetic dataset");
  gen_cmd->add_option("--task", task, "copy-locate or marker-span");
  gen_cmd->add_option("--size", size, "number of examples");
  gen_cmd->add_option("--seed", seed, "random seed");
  gen_cmd->add_option("--output", output, "JSONL to write")->required();

  std::vector<std::string> argv_store = {"abanet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (gen_cmd->parsed()) {
      cmd_generate(task, size, seed.value_or(1), output);
      out << "wrote " << size << " examples to " << output << '\n';
      return 0;
    }
    if (grad_cmd->parsed() && !profile && !config_path) profile = "mini";

    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!data.empty()) overrides.emplace_back("data", data);
    if (!checkpoint.empty()) overrides.emplace_back("checkpoint", checkpoint);
    if (!embeddings.empty()) overrides.emplace_back("embeddings", embeddings);
    if (!output.empty()) overrides.emplace_back("output", output);
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (epochs) overrides.emplace_back("epochs", std::to_string(*epochs));
    if (max_steps) overrides.emplace_back("max_steps", std::to_string(*max_steps));

    std::optional<std::filesystem::path> config_file;
    if (config_path) config_file = *config_path;
    RunConfig run = make_run_config(config_file, profile, overrides);
    run.dump_attention = dump_attention;

    if (train_cmd->parsed()) {
      cmd_train(run, out);
    } else if (eval_cmd->parsed()) {
      cmd_eval(run, out);
    } else if (predict_cmd->parsed()) {
      cmd_predict(run, out);
    } else if (grad_cmd->parsed()) {
      if (!cmd_gradcheck(run, out, fault_op)) {
        err << "error: gradient check failed\n";
        return 2;
      }
    }
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace abanet
